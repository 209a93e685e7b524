#include "ivgae/bayesopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "ivgae/errors.hpp"

namespace ivgae {

HyperConfig hyper_from(const TrainConfig& c) {
  return {c.lr, c.encoder.d_z, c.tama.gamma_init, c.tama.beta_init, c.kl_weight};
}

void apply_hyper(const HyperConfig& h, TrainConfig& c) {
  c.lr = h.lr;
  c.encoder.d_z = h.z_dim;
  c.tama.gamma_init = h.gamma_init;
  c.tama.beta_init = h.beta_init;
  c.kl_weight = h.lambda_kl;
}

// ---- search space ----------------------------------------------------------------

namespace {

double to_unit_log(double v, double lo, double hi) { return (std::log(v) - std::log(lo)) / (std::log(hi) - std::log(lo)); }
double from_unit_log(double u, double lo, double hi) { return std::exp(std::log(lo) + u * (std::log(hi) - std::log(lo))); }
double to_unit(double v, double lo, double hi) { return (v - lo) / (hi - lo); }
double from_unit(double u, double lo, double hi) { return lo + u * (hi - lo); }

}  // namespace

bool SearchSpace::contains(const HyperConfig& c) const {
  const bool z_ok = std::find(z_dims.begin(), z_dims.end(), c.z_dim) != z_dims.end();
  return c.lr >= lr_lo && c.lr <= lr_hi && z_ok && c.gamma_init >= gamma_lo && c.gamma_init <= gamma_hi &&
         c.beta_init >= beta_lo && c.beta_init <= beta_hi && c.lambda_kl >= lambda_lo && c.lambda_kl <= lambda_hi;
}

std::vector<double> SearchSpace::normalize(const HyperConfig& c) const {
  if (!contains(c)) throw ConfigError("hyperparameters outside the search space");
  std::vector<double> u{to_unit_log(c.lr, lr_lo, lr_hi), to_unit(c.gamma_init, gamma_lo, gamma_hi),
                        to_unit(c.beta_init, beta_lo, beta_hi), to_unit_log(c.lambda_kl, lambda_lo, lambda_hi),
                        0.0, 0.0, 0.0};
  for (std::size_t k = 0; k < z_dims.size(); ++k) {
    if (z_dims[k] == c.z_dim) u[4 + k] = 1.0;
  }
  return u;
}

HyperConfig SearchSpace::denormalize(std::span<const double> u) const {
  if (u.size() != kDims) throw DimensionError("denormalize: expected 7 coordinates");
  const auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
  HyperConfig c;
  c.lr = std::clamp(from_unit_log(clamp01(u[0]), lr_lo, lr_hi), lr_lo, lr_hi);
  c.gamma_init = std::clamp(from_unit(clamp01(u[1]), gamma_lo, gamma_hi), gamma_lo, gamma_hi);
  c.beta_init = std::clamp(from_unit(clamp01(u[2]), beta_lo, beta_hi), beta_lo, beta_hi);
  c.lambda_kl = std::clamp(from_unit_log(clamp01(u[3]), lambda_lo, lambda_hi), lambda_lo, lambda_hi);
  const auto best = std::max_element(u.begin() + 4, u.end()) - (u.begin() + 4);
  c.z_dim = z_dims[static_cast<std::size_t>(best)];
  return c;
}

HyperConfig SearchSpace::sample(Rng& rng) const {
  std::vector<double> u(kDims, 0.0);
  for (std::size_t k = 0; k < 4; ++k) u[k] = rng.uniform();
  u[4 + rng.below(z_dims.size())] = 1.0;
  return denormalize(u);
}

// ---- Gaussian process ------------------------------------------------------------

double GaussianProcess::kernel(std::span<const double> a, std::span<const double> b) const {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d += (a[k] - b[k]) * (a[k] - b[k]) * inv_[k];
  return std::exp(-d);
}

bool GaussianProcess::fit(const std::vector<std::vector<double>>& x, const std::vector<double>& y, Hyper hyper) {
  if (x.size() != y.size() || x.empty()) return false;
  const auto n = static_cast<Eigen::Index>(x.size());
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  var /= static_cast<double>(y.size());
  if (!(var > 1e-24)) return false;

  x_ = x;
  y_mean_ = mean;
  y_scale_ = std::sqrt(var);
  const std::size_t dims = x.front().size();
  if (!hyper.scales.empty() && hyper.scales.size() != dims) return false;
  inv_.assign(dims, 0.0);
  for (std::size_t k = 0; k < dims; ++k) {
    const double l = hyper.scales.empty() ? hyper.length_scale : hyper.scales[k];
    inv_[k] = 1.0 / (2.0 * l * l);
  }
  hyper_ = std::move(hyper);
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) k(i, j) = k(j, i) = kernel(x[i], x[j]);
  }
  Eigen::VectorXd ys(n);
  for (Eigen::Index i = 0; i < n; ++i) ys(i) = (y[static_cast<std::size_t>(i)] - mean) / y_scale_;

  // Escalating jitter keeps the factorization positive definite.
  double jitter = 0.0;
  for (int attempt = 0; attempt < 6; ++attempt) {
    Eigen::MatrixXd kn = k;
    kn.diagonal().array() += hyper_.noise + jitter;
    chol_.compute(kn);
    if (chol_.info() == Eigen::Success) {
      alpha_ = chol_.solve(ys);
      const Eigen::MatrixXd l = chol_.matrixL();
      lml_ = -0.5 * ys.dot(alpha_) - l.diagonal().array().log().sum() -
             0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
      return alpha_.allFinite();
    }
    jitter = jitter == 0.0 ? 1e-10 : jitter * 100.0;
  }
  return false;
}

bool GaussianProcess::fit_ml(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                             std::span<const double> length_grid, std::span<const double> noise_grid) {
  std::optional<Hyper> best;
  double best_lml = -std::numeric_limits<double>::infinity();
  for (double l : length_grid) {
    for (double s : noise_grid) {
      if (fit(x, y, {l, s}) && lml_ > best_lml) {
        best_lml = lml_;
        best = Hyper{l, s};
      }
    }
  }
  return best && fit(x, y, *best);
}

bool GaussianProcess::fit_ard(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                              const std::vector<std::vector<std::size_t>>& groups,
                              std::span<const double> length_grid, std::span<const double> noise_grid) {
  if (!fit_ml(x, y, length_grid, noise_grid)) return false;
  Hyper best = hyper_;
  best.scales.assign(x.front().size(), best.length_scale);
  double best_lml = lml_;
  for (int sweep = 0; sweep < 2; ++sweep) {
    for (const auto& group : groups) {
      for (double l : length_grid) {
        Hyper h = best;
        for (std::size_t k : group) h.scales.at(k) = l;
        if (fit(x, y, h) && lml_ > best_lml) {
          best_lml = lml_;
          best = std::move(h);
        }
      }
    }
  }
  return fit(x, y, best);
}

std::pair<double, double> GaussianProcess::predict(std::span<const double> x) const {
  const auto n = static_cast<Eigen::Index>(x_.size());
  Eigen::VectorXd ks(n);
  for (Eigen::Index i = 0; i < n; ++i) ks(i) = kernel(x, x_[static_cast<std::size_t>(i)]);
  const double mean = ks.dot(alpha_);
  const Eigen::VectorXd v = chol_.matrixL().solve(ks);
  const double var = std::max(0.0, 1.0 - v.squaredNorm());
  return {y_mean_ + y_scale_ * mean, y_scale_ * std::sqrt(var)};
}

double expected_improvement(double mean, double stddev, double best, double xi) {
  const double gain = mean - best - xi;
  if (stddev <= 0.0) return std::max(gain, 0.0);
  const double z = gain / stddev;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return gain * cdf + stddev * pdf;
}

// ---- optimizer -------------------------------------------------------------------

BayesianOptimizer::BayesianOptimizer(Sampler sampler, OptimizerOptions options)
    : sampler_(std::move(sampler)), options_(std::move(options)) {}

std::vector<double> BayesianOptimizer::suggest(Rng& rng) {
  ++suggestions_;
  fell_back_ = false;
  if (suggestions_ <= options_.warmup) return sampler_(rng);
  const bool fitted =
      y_.size() >= 2 && (options_.ard_groups.empty()
                             ? gp_.fit_ml(x_, y_, options_.length_grid, options_.noise_grid)
                             : gp_.fit_ard(x_, y_, options_.ard_groups, options_.length_grid, options_.noise_grid));
  if (!fitted) {
    fell_back_ = true;
    return sampler_(rng);
  }
  const double best = *std::max_element(y_.begin(), y_.end());
  std::vector<double> arg;
  double best_ei = -1.0;
  for (std::size_t k = 0; k < options_.candidates; ++k) {
    std::vector<double> cand = sampler_(rng);
    const auto [mean, sd] = gp_.predict(cand);
    const double ei = expected_improvement(mean, sd, best);
    if (ei > best_ei) {
      best_ei = ei;
      arg = std::move(cand);
    }
  }
  return arg;
}

void BayesianOptimizer::observe(std::vector<double> x, double y) {
  x_.push_back(std::move(x));
  y_.push_back(y);
}

// ---- trials and pruning ----------------------------------------------------------

std::string to_string(TrialStatus s) {
  switch (s) {
    case TrialStatus::running:
      return "running";
    case TrialStatus::pruned:
      return "pruned";
    case TrialStatus::complete:
      return "complete";
    case TrialStatus::failed:
      return "failed";
  }
  return "unknown";
}

bool MedianPruner::should_prune(std::size_t epoch, double value, std::span<const Trial> history) const {
  std::vector<double> prior;
  for (const Trial& t : history) {
    if (auto it = t.intermediate.find(epoch); it != t.intermediate.end()) prior.push_back(it->second);
  }
  if (prior.size() < min_trials_ || prior.empty()) return false;
  std::sort(prior.begin(), prior.end());
  const std::size_t m = prior.size() / 2;
  const double median = prior.size() % 2 == 1 ? prior[m] : 0.5 * (prior[m - 1] + prior[m]);
  return value < median;
}

namespace {

// Trains every trial seed in lockstep so the pruner sees the seed-mean AUC.
void evaluate_trial(const TemporalDataset& ds, const TrainConfig& config, const StudyOptions& options,
                    const MedianPruner* pruner, std::span<const Trial> history, Trial& trial) {
  std::vector<Trainer> trainers;
  for (std::uint64_t s : options.trial_seeds) trainers.emplace_back(ds, config, s);
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    double auc = 0.0;
    for (Trainer& t : trainers) auc += t.run_epoch().auc;
    auc /= static_cast<double>(trainers.size());
    const bool checkpoint = options.checkpoint_every > 0 && epoch % options.checkpoint_every == 0;
    if (checkpoint) {
      trial.intermediate[epoch] = auc;
      if (pruner != nullptr && epoch < options.epochs && pruner->should_prune(epoch, auc, history)) {
        trial.status = TrialStatus::pruned;
        trial.pruned_at = epoch;
        return;
      }
    }
    if (epoch == options.epochs) {
      trial.status = TrialStatus::complete;
      trial.objective = auc;
    }
  }
}

StudyResult run_search(const TemporalDataset& ds, const TrainConfig& base, const StudyOptions& options,
                       std::uint64_t seed, std::ostream* log, bool guided) {
  if (options.trials < 1) throw ConfigError("study needs at least one trial");
  if (options.trial_seeds.empty()) throw ConfigError("study needs at least one trial seed");
  if (options.epochs < 1) throw ConfigError("study epochs must be >= 1");
  const SearchSpace& space = options.space;
  OptimizerOptions opt = options.optimizer;
  if (opt.ard_groups.empty()) opt.ard_groups = SearchSpace::ard_groups();
  BayesianOptimizer optimizer([&space](Rng& r) { return space.normalize(space.sample(r)); }, opt);
  const MedianPruner pruner(options.pruner_min_trials);
  Rng rng = Rng(seed).split({stream::kSuggest});

  StudyResult result;
  for (std::size_t i = 0; i < options.trials; ++i) {
    Trial trial;
    trial.id = i;
    trial.config = guided ? space.denormalize(optimizer.suggest(rng)) : space.sample(rng);
    if (guided && optimizer.fell_back() && log != nullptr) {
      *log << "trial " << i << ": surrogate degenerate, using a random configuration\n";
    }
    TrainConfig config = base;
    config.epochs = options.epochs;
    apply_hyper(trial.config, config);
    try {
      evaluate_trial(ds, config, options, guided ? &pruner : nullptr, result.trials, trial);
    } catch (const std::exception& e) {
      trial.status = TrialStatus::failed;
      trial.error = e.what();
    }
    // A pruned trial still tells the surrogate its region is poor: its last
    // checkpoint value stands in for the objective. Without it the posterior
    // is unchanged and EI keeps proposing the same pruned region.
    if (trial.status == TrialStatus::pruned && !trial.intermediate.empty()) {
      optimizer.observe(space.normalize(trial.config), trial.intermediate.rbegin()->second);
    }
    if (trial.objective) {
      optimizer.observe(space.normalize(trial.config), *trial.objective);
      if (!result.best_trial || *trial.objective > result.best_objective) {
        result.best_trial = i;
        result.best_objective = *trial.objective;
        result.best = trial.config;
      }
    }
    if (log != nullptr) {
      *log << "trial " << i << " " << to_string(trial.status);
      if (trial.objective) *log << " objective=" << *trial.objective;
      if (trial.pruned_at) *log << " at epoch " << *trial.pruned_at;
      if (!trial.error.empty()) *log << " (" << trial.error << ")";
      *log << '\n';
    }
    result.trials.push_back(std::move(trial));
  }

  if (options.retrain && result.best_trial) {
    TrainConfig config = base;
    config.epochs = options.epochs;
    apply_hyper(result.best, config);
    result.retrain_runs = run_seeds(ds, config, options.jobs);
    result.report = aggregate_runs(to_string(config.model), result.retrain_runs);
  }
  return result;
}

}  // namespace

StudyResult run_study(const TemporalDataset& ds, const TrainConfig& base, const StudyOptions& options,
                      std::uint64_t seed, std::ostream* log) {
  return run_search(ds, base, options, seed, log, true);
}

StudyResult random_search_control(const TemporalDataset& ds, const TrainConfig& base, const StudyOptions& options,
                                  std::uint64_t seed, std::ostream* log) {
  return run_search(ds, base, options, seed, log, false);
}

}  // namespace ivgae
