#include <doctest.h>

#include "ivgae/errors.hpp"
#include "ivgae/tama.hpp"
#include "oracles.hpp"

using namespace ivgae;

namespace {

void zero_all(GruParams& g) {
  for (auto* p : g.all()) p->value.setZero();
}

}  // namespace

TEST_CASE("GRU with zero weights halves the previous state") {
  Rng rng(1);
  auto g = GruParams::init(3, rng);
  zero_all(g);
  Tape t;
  const GruVars v = GruVars::bind(t, g);
  const Mat h_prev = oracle::random_mat(4, 3, rng);
  const Mat h = gru_cell(t.constant(oracle::random_mat(4, 3, rng)), t.constant(h_prev), v).value();
  CHECK((h - 0.5 * h_prev).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("GRU cell matches a per-node scalar restatement") {
  Rng rng(2);
  auto g = GruParams::init(3, rng);
  Tape t;
  const GruVars v = GruVars::bind(t, g);
  const Mat x = oracle::random_mat(5, 3, rng), hp = oracle::random_mat(5, 3, rng);
  const Mat got = gru_cell(t.constant(x), t.constant(hp), v).value();
  auto affine = [](const Mat& a, const Mat& w) { return oracle::triple_loop_matmul(a, w); };
  Mat z = affine(x, g.w_z.value) + affine(hp, g.u_z.value);
  Mat r = affine(x, g.w_r.value) + affine(hp, g.u_r.value);
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      z(i, j) = oracle::sigmoid(z(i, j) + g.b_z.value(0, j));
      r(i, j) = oracle::sigmoid(r(i, j) + g.b_r.value(0, j));
    }
  Mat cand = affine(x, g.w_h.value) + affine(r.cwiseProduct(hp), g.u_h.value);
  for (Eigen::Index i = 0; i < cand.rows(); ++i)
    for (Eigen::Index j = 0; j < cand.cols(); ++j) cand(i, j) = std::tanh(cand(i, j) + g.b_h.value(0, j));
  const Mat want = (Mat::Ones(5, 3) - z).cwiseProduct(hp) + z.cwiseProduct(cand);
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("GRU treats nodes independently") {
  Rng rng(3);
  auto g = GruParams::init(4, rng);
  Tape t;
  const GruVars v = GruVars::bind(t, g);
  const Mat x = oracle::random_mat(6, 4, rng);
  std::vector<Var> seq{t.constant(x), t.constant(x * 0.5)};
  const Mat full = gru_sequence(seq, v).back().value();
  std::vector<Var> single{t.constant(x.topRows(1)), t.constant(x.topRows(1) * 0.5)};
  const Mat one = gru_sequence(single, v).back().value();
  CHECK((full.topRows(1) - one).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("memory recursion hand values") {
  auto m = MemoryState::zeros(1);
  const Mat c = Mat::Ones(1, 1);
  m = memory_update(m, c, 0.8);
  CHECK(std::abs(m.memory(0, 0) - 0.2) < 1e-12);
  m = memory_update(m, c, 0.8);
  CHECK(std::abs(m.memory(0, 0) - 0.36) < 1e-12);
  CHECK(m.steps == 2);
}

TEST_CASE("memory recursion equals its unfolded form") {
  Rng rng(4);
  for (int draw = 0; draw < 50; ++draw) {
    const double g = rng.uniform(0.01, 0.99);
    const std::size_t w = 1 + rng.below(16);
    std::vector<Mat> scores;
    auto m = MemoryState::zeros(3);
    for (std::size_t t = 0; t < w; ++t) {
      Mat s(3, 3);
      for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = rng.uniform();
      scores.push_back(s);
      m = memory_update(m, s, g);
    }
    CHECK((m.memory - oracle::memory_unfolded(scores, g)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("memory of a constant signal is (1 - gamma^t) C") {
  Rng rng(5);
  Mat c(2, 2);
  c << 0.1, 0.7, 0.3, 0.9;
  for (double g : {0.5, 0.8, 0.95}) {
    auto m = MemoryState::zeros(2);
    for (int t = 1; t <= 12; ++t) {
      m = memory_update(m, c, g);
      CHECK((m.memory - (1.0 - std::pow(g, t)) * c).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("memory stays in [0, 1] for gamma in (0, 1)") {
  Rng rng(6);
  for (int draw = 0; draw < 100; ++draw) {
    const double g = rng.uniform(0.0, 1.0);
    auto m = MemoryState::zeros(2);
    for (int t = 0; t < 10; ++t) {
      Mat s(2, 2);
      for (Eigen::Index i = 0; i < 4; ++i) s.data()[i] = rng.uniform();
      m = memory_update(m, s, g);
      CHECK(m.memory.minCoeff() >= 0.0);
      CHECK(m.memory.maxCoeff() <= 1.0);
    }
  }
}

TEST_CASE("gamma initialization round-trips through the logistic map") {
  Rng rng(7);
  auto p = TamaParams::init(4, {0.78893, 0.67116}, rng);
  CHECK(p.gamma() == doctest::Approx(0.78893).epsilon(1e-12));
  CHECK(p.beta_mix.value(0, 0) == 0.67116);
  CHECK(oracle::sigmoid(1.0) == doctest::Approx(0.7310585786300049));
}

TEST_CASE("window logits are symmetric and fuse memory") {
  Rng rng(8);
  auto p = TamaParams::init(3, {}, rng);
  Tape t;
  const TamaVars v = TamaVars::bind(t, p);
  std::vector<Var> z;
  for (int k = 0; k < 4; ++k) z.push_back(t.constant(oracle::random_mat(5, 3, rng)));
  const WindowOutput out = forward_window(t, z, v);
  const Mat& l = out.logits.value();
  CHECK((l - l.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  const Mat& h = out.hidden.back().value();
  CHECK((l - (h * h.transpose() + 0.5 * out.memory.value())).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(out.hidden.size() == 4);
}

TEST_CASE("TAMA gradients pass finite differences") {
  for (std::uint64_t seed : {21u, 22u}) {
    Rng rng(seed);
    auto p = TamaParams::init(3, {}, rng);
    std::vector<Param> zs;
    for (int k = 0; k < 3; ++k) zs.emplace_back("z" + std::to_string(k), oracle::random_mat(5, 3, rng));
    const Mat w = oracle::random_mat(5, 5, rng);
    std::vector<Param*> all = p.all();
    for (auto& z : zs) all.push_back(&z);
    auto build = [&](Tape& t) {
      const TamaVars v = TamaVars::bind(t, p);
      std::vector<Var> latents;
      for (auto& z : zs) latents.push_back(t.param(z));
      return sum(mul(forward_window(t, latents, v).logits, t.constant(w)));
    };
    CHECK(oracle::check_gradients(all, build).max_rel <= 1e-4);
  }
}
