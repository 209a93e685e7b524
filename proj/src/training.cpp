#include "ivgae/training.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <thread>

#include "ivgae/adam.hpp"
#include "ivgae/errors.hpp"

namespace ivgae {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::tama:
      return "tama";
    case ModelKind::gru:
      return "gru";
    case ModelKind::static_ivgae:
      return "static";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "tama") return ModelKind::tama;
  if (name == "gru") return ModelKind::gru;
  if (name == "static") return ModelKind::static_ivgae;
  throw ConfigError("unknown model '" + name + "' (expected tama, gru or static)");
}

std::vector<std::uint64_t> seed_range(std::uint64_t first, std::uint64_t last) {
  std::vector<std::uint64_t> out;
  for (std::uint64_t s = first; s <= last; ++s) out.push_back(s);
  return out;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (!(kl_weight >= 0.0)) throw ConfigError("kl_weight must be >= 0");
  if (window < 1) throw ConfigError("window must be >= 1");
  if (!(pos_weight > 0.0)) throw ConfigError("pos_weight must be positive");
  encoder.validate();
  if (!(tama.gamma_init > 0.0 && tama.gamma_init < 1.0)) throw ConfigError("gamma_init must be in (0, 1)");
}

std::string EvalReport::summary() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s AUC %.2f ± %.2f AP %.2f ± %.2f (n=%zu)", model.c_str(), auc_mean, auc_std,
                ap_mean, ap_std, runs);
  return buf;
}

Var loss_total(Var logits, const SymmetricTarget& target, std::span<const Var> kl_terms, double kl_weight,
               double pos_weight) {
  const Mat& x = logits.value();
  if (x.rows() != target.target.rows() || x.cols() != target.target.cols()) {
    throw DimensionError("loss_total: logits and target shapes differ");
  }
  Tape& tape = *logits.tape();
  const Mat& y = target.target;
  const Mat& mask = target.mask;
  const double count = mask.sum();
  if (count == 0) throw ConfigError("loss_total: empty evaluation mask");

  const auto softplus = [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); };
  double bce = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (mask.data()[i] == 0.0) continue;
    const double v = x.data()[i];
    bce += y.data()[i] != 0.0 ? pos_weight * softplus(-v) : softplus(v);
  }
  bce /= count;
  const std::size_t il = logits.id();
  Var loss = tape.push("bce_with_logits", Mat::Constant(1, 1, bce), {logits},
                       [il, y, mask, count, pos_weight](Tape& tp, const Mat& g) {
                         const Mat& xv = tp.value(il);
                         Mat d = Mat::Zero(xv.rows(), xv.cols());
                         for (Eigen::Index i = 0; i < xv.size(); ++i) {
                           if (mask.data()[i] == 0.0) continue;
                           const double v = xv.data()[i];
                           const double sig = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
                           d.data()[i] = (y.data()[i] != 0.0 ? pos_weight * (sig - 1.0) : sig) / count;
                         }
                         tp.accumulate(il, d * g(0, 0));
                       });
  if (kl_weight > 0.0 && !kl_terms.empty()) loss = add(loss, scale(mean_stack(kl_terms), kl_weight));
  return loss;
}

// ---- Trainer -------------------------------------------------------------------

struct Trainer::State {
  const TemporalDataset* ds = nullptr;
  TrainConfig config;
  std::uint64_t seed = 0;
  EncoderParams encoder;
  TamaParams tama;
  std::unique_ptr<Adam> adam;
  std::vector<WindowSample> windows;  // all samples; last is held out
  std::vector<SymmetricTarget> targets;
  std::size_t static_index = 0;  // snapshot the static baseline trains on
  SymmetricTarget static_target;
  SymmetricTarget held_out_target;
  std::size_t epochs = 0;
  std::vector<EpochRecord> history;

  bool is_static() const { return config.model == ModelKind::static_ivgae; }

  double train_window(std::size_t j) {
    Tape tape;
    EncoderVars ev = EncoderVars::bind(tape, encoder);
    TamaVars tv = TamaVars::bind(tape, tama);
    Rng rng = Rng(seed).split({stream::kTrainStep, epochs, j});
    std::vector<Var> latents, kls;
    for (const GraphSnapshot& s : windows[j].inputs) {
      Encoded e = encode_snapshot(tape, s, ev, config.encoder, rng, Mode::train);
      latents.push_back(e.z);
      kls.push_back(e.kl);
    }
    const WindowOutput out = forward_window(tape, latents, tv);
    const Var loss = loss_total(out.logits, targets[j], kls, config.kl_weight, config.pos_weight);
    tape.backward(loss);
    adam->step(config.lr);
    return loss.scalar();
  }

  double train_static() {
    Tape tape;
    EncoderVars ev = EncoderVars::bind(tape, encoder);
    Rng rng = Rng(seed).split({stream::kTrainStep, epochs, 0});
    Encoded e = encode_snapshot(tape, ds->snapshots[static_index], ev, config.encoder, rng, Mode::train);
    const Var logits = matmul_transposed(e.z, e.z);
    const Var loss = loss_total(logits, static_target, std::span<const Var>(&e.kl, 1), config.kl_weight,
                                config.pos_weight);
    tape.backward(loss);
    adam->step(config.lr);
    return loss.scalar();
  }

  Mat window_logits(std::size_t j, const std::optional<Mat>& initial_memory, Mat* memory_out) {
    Tape tape;
    EncoderVars ev = EncoderVars::bind(tape, encoder);
    TamaVars tv = TamaVars::bind(tape, tama);
    Rng unused(0);
    std::vector<Var> latents;
    for (const GraphSnapshot& s : windows[j].inputs) {
      latents.push_back(encode_snapshot(tape, s, ev, config.encoder, unused, Mode::eval).z);
    }
    const WindowOutput out = forward_window(tape, latents, tv, initial_memory);
    if (memory_out != nullptr) *memory_out = out.memory.value();
    return out.logits.value();
  }

  Mat held_out_logits() {
    if (is_static()) {
      Tape tape;
      EncoderVars ev = EncoderVars::bind(tape, encoder);
      Rng unused(0);
      const Var z = encode_snapshot(tape, ds->snapshots[static_index], ev, config.encoder, unused, Mode::eval).z;
      return z.value() * z.value().transpose();
    }
    const std::size_t last = windows.size() - 1;
    std::optional<Mat> initial;
    if (config.persist_memory && last > 0) {
      Mat memory;
      window_logits(last - 1, std::nullopt, &memory);
      initial = std::move(memory);
    }
    return window_logits(last, initial, nullptr);
  }
};

Trainer::Trainer(const TemporalDataset& ds, TrainConfig config, std::uint64_t seed)
    : state_(std::make_unique<State>()) {
  config.validate();
  State& s = *state_;
  s.ds = &ds;
  s.config = std::move(config);
  s.seed = seed;
  if (ds.size() < 2) throw ConfigError("dataset needs at least 2 snapshots");
  for (const auto& snap : ds.snapshots) {
    if (snap.features.cols() != static_cast<Eigen::Index>(s.config.encoder.d_in)) {
      throw ConfigError("feature width " + std::to_string(snap.features.cols()) + " != encoder d_in " +
                        std::to_string(s.config.encoder.d_in));
    }
  }
  if (!s.is_static()) {
    if (ds.size() < s.config.window + 2) {
      throw ConfigError("window " + std::to_string(s.config.window) + " needs at least " +
                        std::to_string(s.config.window + 2) + " snapshots (one training and one held-out window), " +
                        "dataset has " + std::to_string(ds.size()));
    }
    s.windows = build_windows(ds, s.config.window);
    for (const auto& w : s.windows) s.targets.push_back(symmetrize_target(w.target->adjacency));
  }
  s.static_index = ds.size() - 2;
  s.static_target = symmetrize_target(ds.snapshots[s.static_index].adjacency);
  s.held_out_target = symmetrize_target(ds.snapshots.back().adjacency);

  Rng init = Rng(seed).split({stream::kInit});
  s.encoder = EncoderParams::init(s.config.encoder, ds.nodes(), init);
  s.tama = TamaParams::init(s.config.encoder.d_z, s.config.tama, init);
  std::vector<Param*> params = s.encoder.all();
  if (!s.is_static()) {
    if (s.config.model == ModelKind::gru) {
      s.tama.beta_mix.value.setZero();
      s.tama.beta_mix.trainable = false;
      s.tama.raw_gamma.trainable = false;
    }
    for (Param* p : s.tama.all()) params.push_back(p);
  }
  s.adam = std::make_unique<Adam>(std::move(params));
}

Trainer::~Trainer() = default;
Trainer::Trainer(Trainer&&) noexcept = default;
Trainer& Trainer::operator=(Trainer&&) noexcept = default;

EpochRecord Trainer::run_epoch() {
  State& s = *state_;
  EpochRecord rec;
  if (s.is_static()) {
    rec.loss = s.train_static();
  } else {
    const std::size_t train_count = s.windows.size() - 1;
    double total = 0.0;
    for (std::size_t j = 0; j < train_count; ++j) total += s.train_window(j);
    rec.loss = total / static_cast<double>(train_count);
  }
  ++s.epochs;
  const LinkMetrics m = evaluate_held_out();
  rec.auc = m.auc;
  rec.ap = m.ap;
  s.history.push_back(rec);
  return rec;
}

std::size_t Trainer::epochs_done() const { return state_->epochs; }

Mat Trainer::predict_held_out() const { return state_->held_out_logits(); }

LinkMetrics Trainer::evaluate_held_out() const {
  const State& s = *state_;
  return evaluate_links(predict_held_out(), s.held_out_target.target, Rng(s.config.eval_seed).split({stream::kEvalNegatives}));
}

RunResult Trainer::result() const {
  const State& s = *state_;
  RunResult r;
  r.seed = s.seed;
  for (const EpochRecord& e : s.history) {
    r.loss_curve.push_back(e.loss);
    r.auc_curve.push_back(e.auc);
    r.ap_curve.push_back(e.ap);
  }
  if (!s.history.empty()) {
    r.auc = s.history.back().auc;
    r.ap = s.history.back().ap;
    r.final_loss = s.history.back().loss;
  }
  return r;
}

std::size_t Trainer::parameter_count() const {
  std::size_t total = 0;
  for (const Param* p : state_->adam->params()) {
    if (p->trainable) total += static_cast<std::size_t>(p->value.size());
  }
  return total;
}

const TrainConfig& Trainer::config() const { return state_->config; }

// ---- protocol ------------------------------------------------------------------

RunResult train_run(const TemporalDataset& ds, const TrainConfig& config, std::uint64_t seed) {
  Trainer trainer(ds, config, seed);
  for (std::size_t e = 0; e < config.epochs; ++e) trainer.run_epoch();
  return trainer.result();
}

RunResult static_baseline_run(const TemporalDataset& ds, const TrainConfig& config, std::uint64_t seed) {
  TrainConfig c = config;
  c.model = ModelKind::static_ivgae;
  return train_run(ds, c, seed);
}

std::vector<RunResult> run_seeds(const TemporalDataset& ds, const TrainConfig& config, std::size_t jobs) {
  config.validate();
  std::vector<RunResult> out(config.seeds.size());
  jobs = std::max<std::size_t>(1, std::min(jobs, config.seeds.size()));
  if (jobs == 1) {
    for (std::size_t i = 0; i < config.seeds.size(); ++i) out[i] = train_run(ds, config, config.seeds[i]);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(config.seeds.size());
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < config.seeds.size(); i = next++) {
        try {
          out[i] = train_run(ds, config, config.seeds[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

EvalReport aggregate_runs(const std::string& model, std::span<const RunResult> results) {
  if (results.empty()) throw ConfigError("aggregate_runs: no results");
  const auto n = static_cast<double>(results.size());
  const auto stats = [&](auto field) {
    double mean = 0.0;
    for (const auto& r : results) mean += field(r);
    mean /= n;
    double ss = 0.0;
    for (const auto& r : results) ss += (field(r) - mean) * (field(r) - mean);
    const double sd = results.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    return std::pair{100.0 * mean, 100.0 * sd};
  };
  EvalReport rep;
  rep.model = model;
  rep.runs = results.size();
  std::tie(rep.auc_mean, rep.auc_std) = stats([](const RunResult& r) { return r.auc; });
  std::tie(rep.ap_mean, rep.ap_std) = stats([](const RunResult& r) { return r.ap; });
  return rep;
}

std::vector<SweepRow> window_sweep(const TemporalDataset& ds, const TrainConfig& config,
                                   std::span<const std::size_t> windows, std::ostream& notices, std::size_t jobs) {
  std::vector<SweepRow> rows;
  for (std::size_t w : windows) {
    if (w < 1 || ds.size() < w + 2) {
      notices << "skipping window " << w << ": needs " << w + 2 << " snapshots, dataset has " << ds.size() << '\n';
      continue;
    }
    TrainConfig c = config;
    c.window = w;
    const auto runs = run_seeds(ds, c, jobs);
    rows.push_back({w, aggregate_runs(to_string(c.model), runs)});
  }
  return rows;
}

}  // namespace ivgae
