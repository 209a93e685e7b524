#include <doctest.h>

#include <sstream>

#include "ivgae/errors.hpp"
#include "ivgae/training.hpp"
#include "oracles.hpp"

using namespace ivgae;

namespace {

TemporalDataset tiny_dataset(std::uint64_t seed = 5, std::size_t nodes = 14, std::size_t years = 7) {
  SynthOptions o;
  o.nodes = nodes;
  o.years = years;
  o.p_backbone = 0.15;
  o.p_churn = 0.05;
  return synth_generate(seed, o);
}

TrainConfig tiny_config(std::size_t epochs = 4) {
  TrainConfig c;
  c.epochs = epochs;
  c.window = 3;
  c.encoder.d_hidden = 8;
  c.encoder.d_z = 8;
  c.encoder.heads = 2;
  c.seeds = {1000, 1001, 1002};
  return c;
}

}  // namespace

TEST_CASE("BCE at zero logits is ln 2") {
  Rng rng(1);
  const auto target = symmetrize_target(oracle::random_adjacency(7, 0.3, rng));
  Tape t;
  const Var loss = loss_total(t.constant(Mat::Zero(7, 7)), target, {}, 0.0);
  CHECK(std::abs(loss.scalar() - std::log(2.0)) < 1e-9);
}

TEST_CASE("loss is non-negative and ignores KL when lambda is 0") {
  Rng rng(2);
  for (int k = 0; k < 20; ++k) {
    const auto target = symmetrize_target(oracle::random_adjacency(6, 0.3, rng));
    Tape t;
    const Var logits = t.constant(oracle::random_mat(6, 6, rng, 3.0));
    const Var kl_a = t.constant(Mat::Constant(1, 1, rng.uniform(0, 50)));
    const Var kl_b = t.constant(Mat::Constant(1, 1, rng.uniform(0, 50)));
    const std::vector<Var> kls{kl_a, kl_b};
    const double with = loss_total(logits, target, kls, 0.1).scalar();
    const double without = loss_total(logits, target, kls, 0.0).scalar();
    const double none = loss_total(logits, target, {}, 0.0).scalar();
    CHECK(with >= 0.0);
    CHECK(without == none);
    CHECK(with == doctest::Approx(without + 0.1 * 0.5 * (kl_a.scalar() + kl_b.scalar())));
  }
}

TEST_CASE("BCE is invariant under a simultaneous node permutation") {
  Rng rng(3);
  const Mat a = oracle::random_adjacency(6, 0.3, rng);
  Mat x = oracle::random_mat(6, 6, rng);
  x = (x + x.transpose()).eval();
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
  perm.indices() << 3, 0, 5, 1, 4, 2;
  Tape t;
  const double base = loss_total(t.constant(x), symmetrize_target(a), {}, 0.0).scalar();
  const Mat xp = perm * x * perm.transpose();
  const Mat ap = perm * a * perm.transpose();
  const double permuted = loss_total(t.constant(xp), symmetrize_target(ap), {}, 0.0).scalar();
  CHECK(base == doctest::Approx(permuted).epsilon(1e-12));
}

TEST_CASE("positive weighting scales only the positive terms") {
  Mat a = Mat::Zero(2, 2);
  a(0, 1) = 1.0;
  Tape t;
  const Var logits = t.constant(Mat::Zero(2, 2));
  CHECK(loss_total(logits, symmetrize_target(a), {}, 0.0, 3.0).scalar() == doctest::Approx(3.0 * std::log(2.0)));
}

TEST_CASE("encoder -> TAMA -> loss composite passes finite differences") {
  for (std::uint64_t seed : {31u, 32u}) {
    Rng rng(seed);
    EncoderConfig ec;
    ec.d_hidden = 6;
    ec.d_z = 4;
    ec.heads = 2;
    ec.layers = 2;
    const Eigen::Index n = 5 + static_cast<Eigen::Index>(seed % 2);
    auto enc = EncoderParams::init(ec, static_cast<std::size_t>(n), rng);
    auto tama = TamaParams::init(ec.d_z, {}, rng);
    for (auto* p : enc.all())
      for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += rng.normal(0.0, 0.1);
    std::vector<GraphSnapshot> snaps;
    for (int k = 0; k < 3; ++k) {
      GraphSnapshot s;
      s.adjacency = oracle::random_adjacency(n, 0.4, rng);
      s.trade = s.adjacency.cwiseProduct(oracle::random_mat(n, n, rng).cwiseAbs()) + Mat::Zero(n, n);
      s.features = oracle::random_mat(n, 4, rng);
      snaps.push_back(s);
    }
    const auto target = symmetrize_target(oracle::random_adjacency(n, 0.4, rng));
    std::vector<Param*> all = enc.all();
    for (auto* p : tama.all()) all.push_back(p);
    auto build = [&](Tape& t) {
      EncoderVars ev = EncoderVars::bind(t, enc);
      TamaVars tv = TamaVars::bind(t, tama);
      Rng step(seed * 7);
      std::vector<Var> zs, kls;
      for (const auto& s : snaps) {
        Encoded e = encode_snapshot(t, s, ev, ec, step, Mode::train);
        zs.push_back(e.z);
        kls.push_back(e.kl);
      }
      return loss_total(forward_window(t, zs, tv).logits, target, kls, 0.01);
    };
    const auto rep = oracle::check_gradients(all, build);
    CAPTURE(rep.analytic);
    CAPTURE(rep.numeric);
    CAPTURE(rep.where);
    CHECK(rep.max_rel <= 1e-4);
    CHECK(rep.kinks * 100 <= rep.checked);
  }
}

TEST_CASE("aggregate_runs statistics and summary format") {
  std::vector<RunResult> one(1);
  one[0].auc = 0.9;
  one[0].ap = 0.8;
  const auto r1 = aggregate_runs("tama", one);
  CHECK(r1.summary() == "tama AUC 90.00 ± 0.00 AP 80.00 ± 0.00 (n=1)");
  std::vector<RunResult> two(2);
  two[0].auc = 0.90;
  two[1].auc = 0.92;
  const auto r2 = aggregate_runs("tama", two);
  CHECK(r2.auc_mean == doctest::Approx(91.0));
  CHECK(r2.auc_std == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(aggregate_runs("tama", std::vector<RunResult>{}), ConfigError);
}

TEST_CASE("seed ranges and model names") {
  CHECK(seed_range(1000, 1009).size() == 10);
  CHECK(seed_range(1000, 1009).back() == 1009);
  CHECK(parse_model_kind("static") == ModelKind::static_ivgae);
  CHECK(to_string(ModelKind::gru) == "gru");
  CHECK_THROWS_AS(parse_model_kind("lstm"), ConfigError);
}

TEST_CASE("trainer produces one curve point per epoch and is deterministic") {
  const auto ds = tiny_dataset();
  const auto cfg = tiny_config(5);
  const RunResult a = train_run(ds, cfg, 1000);
  const RunResult b = train_run(ds, cfg, 1000);
  CHECK(a.loss_curve.size() == 5);
  CHECK(a.auc_curve.size() == 5);
  CHECK(a.loss_curve == b.loss_curve);
  CHECK(a.auc == b.auc);
  CHECK(a.ap == b.ap);
  const RunResult c = train_run(ds, cfg, 1001);
  CHECK(c.loss_curve != a.loss_curve);
}

TEST_CASE("run_seeds output does not depend on the job count") {
  const auto ds = tiny_dataset();
  const auto cfg = tiny_config(3);
  const auto serial = run_seeds(ds, cfg, 1);
  const auto parallel = run_seeds(ds, cfg, 3);
  REQUIRE(serial.size() == parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].seed == cfg.seeds[i]);
    CHECK(serial[i].loss_curve == parallel[i].loss_curve);
    CHECK(serial[i].auc == parallel[i].auc);
  }
}

TEST_CASE("model variants") {
  const auto ds = tiny_dataset();
  auto cfg = tiny_config(3);
  Trainer tama(ds, cfg, 1000);
  cfg.model = ModelKind::static_ivgae;
  Trainer stat(ds, cfg, 1000);
  CHECK(stat.parameter_count() < tama.parameter_count());

  cfg.model = ModelKind::gru;
  Trainer gru(ds, cfg, 1000);
  for (int e = 0; e < 3; ++e) gru.run_epoch();
  // With the memory weight frozen at zero the logits are the plain Gram matrix.
  const Mat logits = gru.predict_held_out();
  CHECK((logits - logits.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(gru.parameter_count() == tama.parameter_count() - 2);  // gamma and beta_mix frozen
}

TEST_CASE("static baseline ignores the window length") {
  const auto ds = tiny_dataset(5, 14, 4);
  auto cfg = tiny_config(2);
  cfg.window = 10;
  CHECK_THROWS_AS(train_run(ds, cfg, 1), ConfigError);
  CHECK_NOTHROW(static_baseline_run(ds, cfg, 1));
}

TEST_CASE("infeasible windows are configuration errors") {
  const auto ds = tiny_dataset(5, 14, 5);
  auto cfg = tiny_config(1);
  cfg.window = 4;  // 1 sample, no training window
  CHECK_THROWS_AS(train_run(ds, cfg, 1), ConfigError);
  cfg.window = 3;
  CHECK_NOTHROW(train_run(ds, cfg, 1));
}

TEST_CASE("persisted memory changes the held-out prediction only when enabled") {
  const auto ds = tiny_dataset();
  auto cfg = tiny_config(2);
  Trainer a(ds, cfg, 1000);
  cfg.persist_memory = true;
  Trainer b(ds, cfg, 1000);
  a.run_epoch();
  b.run_epoch();
  CHECK(a.predict_held_out() != b.predict_held_out());
}

TEST_CASE("window sweep skips infeasible lengths with a notice") {
  const auto ds = tiny_dataset(5, 12, 6);
  auto cfg = tiny_config(1);
  cfg.seeds = {1};
  std::ostringstream notes;
  const std::vector<std::size_t> ws{2, 3, 4, 5};
  const auto rows = window_sweep(ds, cfg, ws, notes);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].window == 2);
  CHECK(rows[2].window == 4);
  CHECK(notes.str().find("window 5") != std::string::npos);
}

TEST_CASE("training lowers the loss on the default synthetic data") {
  const auto ds = synth_generate(1, {});
  TrainConfig cfg;
  cfg.epochs = 50;
  double first = 0.0, last = 0.0;
  for (std::uint64_t seed : {1000u, 1001u, 1002u}) {
    const auto r = train_run(ds, cfg, seed);
    first += r.loss_curve.front();
    last += r.loss_curve.back();
  }
  CHECK(last < first);
}

TEST_CASE("config validation") {
  TrainConfig c;
  c.lr = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.seeds.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
