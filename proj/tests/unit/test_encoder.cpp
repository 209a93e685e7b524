#include <doctest.h>

#include "ivgae/encoder.hpp"
#include "ivgae/errors.hpp"
#include "oracles.hpp"

using namespace ivgae;

namespace {

EncoderConfig small_config() {
  EncoderConfig c;
  c.d_hidden = 8;
  c.d_z = 4;
  c.heads = 2;
  c.layers = 2;
  return c;
}

GraphSnapshot random_snapshot(Eigen::Index n, Rng& rng) {
  GraphSnapshot s;
  s.adjacency = oracle::random_adjacency(n, 0.4, rng);
  s.trade = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < s.trade.size(); ++i)
    if (s.adjacency.data()[i] != 0.0) s.trade.data()[i] = rng.uniform(0.1, 2.0);
  s.features = oracle::random_mat(n, static_cast<Eigen::Index>(kFeatureCount), rng);
  return s;
}

// Dense restatement of one head in eval mode.
Mat dagan_oracle(const Mat& x, const Mat& a, const Mat& t, const DaganHeadParams& h) {
  Mat m0 = oracle::triple_loop_matmul(x, h.mlp_weight.value);
  for (Eigen::Index i = 0; i < m0.rows(); ++i) {
    double norm = 0.0;
    for (Eigen::Index j = 0; j < m0.cols(); ++j) {
      m0(i, j) = std::max(0.0, m0(i, j) + h.mlp_bias.value(0, j));
      norm += m0(i, j) * m0(i, j);
    }
    norm = std::max(std::sqrt(norm), kNormEps);
    for (Eigen::Index j = 0; j < m0.cols(); ++j) m0(i, j) *= h.scale.value(0, 0) / norm;
  }
  const Eigen::Index n = a.rows();
  Mat p = Mat::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double z = 0.0, mx = -1e300;
    for (Eigen::Index i = 0; i < n; ++i)
      if (a(i, j) != 0.0) mx = std::max(mx, t(i, j));
    for (Eigen::Index i = 0; i < n; ++i)
      if (a(i, j) != 0.0) z += std::exp(t(i, j) - mx);
    for (Eigen::Index i = 0; i < n; ++i)
      if (a(i, j) != 0.0) p(i, j) = std::exp(t(i, j) - mx) / z;
  }
  Mat m = m0;
  for (std::size_t l = 0; l < h.raw_alpha.size(); ++l) {
    const double alpha = oracle::sigmoid(h.raw_alpha[l].value(0, 0));
    const double beta = oracle::sigmoid(h.raw_beta[l].value(0, 0));
    m = alpha * oracle::triple_loop_matmul(p, m) + beta * m0;
  }
  return m;
}

}  // namespace

TEST_CASE("build_input concatenates features and the node embedding") {
  Rng rng(1);
  EncoderConfig c;
  auto params = EncoderParams::init(c, 7, rng);
  Tape t;
  const Mat x = Mat::Ones(7, 4);
  const Var xt = build_input(t, x, t.param(params.embedding));
  CHECK(xt.rows() == 7);
  CHECK(xt.cols() == 8);
  CHECK_THROWS_AS(build_input(t, Mat::Ones(6, 4), t.param(params.embedding)), DimensionError);
}

TEST_CASE("initialization follows the documented scheme") {
  Rng rng(2);
  EncoderConfig c;
  auto p = EncoderParams::init(c, 40, rng);
  const double sd = std::sqrt(p.embedding.value.array().square().mean());
  CHECK(sd < 0.02);
  const double bound = std::sqrt(6.0 / (8.0 + 32.0));
  CHECK(p.gcn0.value.cwiseAbs().maxCoeff() <= bound);
  for (const auto& h : p.heads) {
    CHECK(h.scale.value(0, 0) == 1.0);
    for (const auto& a : h.raw_alpha) CHECK(oracle::sigmoid(a.value(0, 0)) == doctest::Approx(0.5));
    for (const auto& b : h.raw_beta) CHECK(oracle::sigmoid(b.value(0, 0)) == doctest::Approx(0.5));
  }
}

TEST_CASE("normalized adjacency of a path") {
  // 0 - 1 - 2 with self loops: degrees 2, 3, 2.
  Mat a = Mat::Zero(3, 3);
  a(0, 1) = a(1, 0) = a(1, 2) = a(2, 1) = 1.0;
  const Mat n = normalized_adjacency(a);
  CHECK(n(0, 0) == doctest::Approx(0.5));
  CHECK(n(0, 1) == doctest::Approx(1.0 / std::sqrt(6.0)));
  CHECK(n(1, 1) == doctest::Approx(1.0 / 3.0));
  CHECK(n(0, 2) == 0.0);
}

TEST_CASE("drop_edges only removes edges and respects p = 0") {
  Rng rng(4);
  const Mat a = oracle::random_adjacency(30, 0.3, rng);
  CHECK(drop_edges(a, 0.0, rng) == a);
  const Mat d = drop_edges(a, 0.5, rng);
  CHECK((d.array() <= a.array()).all());
  const double kept = d.sum() / a.sum();
  CHECK(kept > 0.35);
  CHECK(kept < 0.65);
}

TEST_CASE("DAGAN head matches a dense restatement") {
  Rng rng(5);
  EncoderConfig c = small_config();
  auto params = EncoderParams::init(c, 6, rng);
  auto& h = params.heads[0];
  h.scale.value(0, 0) = 1.7;
  h.raw_alpha[0].value(0, 0) = 0.3;
  h.raw_beta[1].value(0, 0) = -0.4;
  GraphSnapshot s = random_snapshot(6, rng);
  Tape t;
  EncoderVars ev = EncoderVars::bind(t, params);
  const Var xt = build_input(t, s.features, ev.embedding);
  Rng unused(0);
  const Mat got = dagan_head(t, xt, s.adjacency, s.trade, ev.heads[0], c.p_drop, unused, Mode::eval).value();
  const Mat want = dagan_oracle(xt.value(), s.adjacency, s.trade, h);
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("propagation moves information along edges in matrix order") {
  // Single edge i -> j (A[i, j] = 1). Column j of P is e_i, so P * M copies
  // row j of M into row i; the row of j itself only keeps its residual.
  const Eigen::Index n = 3, i = 0, j = 2;
  Mat a = Mat::Zero(n, n);
  a(i, j) = 1.0;
  const Mat p = masked_softmax_columns(a, a);
  Mat m(n, 2);
  m << 1, 2, 3, 4, 5, 6;
  const Mat pm = p * m;
  CHECK(pm.row(i) == m.row(j));
  CHECK(pm.row(j).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("KL divergence hand cases") {
  auto kl = [](double mu, double ls) {
    Tape t;
    return kl_divergence(t.constant(Mat::Constant(1, 1, mu)), t.constant(Mat::Constant(1, 1, ls))).scalar();
  };
  CHECK(std::abs(kl(0.0, 0.0)) < 1e-12);
  CHECK(std::abs(kl(1.0, 0.0) - 0.5) < 1e-12);
  CHECK(std::abs(kl(0.0, std::log(2.0)) - (1.5 - std::log(2.0))) < 1e-12);
}

TEST_CASE("log sigma is clamped") {
  Tape t;
  Rng rng(6);
  Param big("w", Mat::Constant(2, 2, 50.0));
  const Mat adj = Mat::Zero(2, 2);
  const LatentDist d = variational_heads(t, normalized_adjacency(adj), t.constant(Mat::Ones(2, 2)), t.param(big),
                                         t.param(big), t.param(big));
  CHECK(d.log_sigma.value().maxCoeff() == kLogSigmaBound);
}

TEST_CASE("eval mode returns the mean and is deterministic") {
  Rng rng(7);
  EncoderConfig c = small_config();
  auto params = EncoderParams::init(c, 6, rng);
  GraphSnapshot s = random_snapshot(6, rng);
  Tape t;
  EncoderVars ev = EncoderVars::bind(t, params);
  Rng r1(1), r2(2);
  const Encoded a = encode_snapshot(t, s, ev, c, r1, Mode::eval);
  const Encoded b = encode_snapshot(t, s, ev, c, r2, Mode::eval);
  CHECK(a.z.value() == a.dist.mu.value());
  CHECK(a.z.value() == b.z.value());
  Rng r3(1);
  const Encoded tr = encode_snapshot(t, s, ev, c, r3, Mode::train);
  CHECK(tr.z.value() != tr.dist.mu.value());
}

TEST_CASE("encoder output shapes for every latent width") {
  for (std::size_t dz : {16u, 32u, 64u}) {
    Rng rng(dz);
    EncoderConfig c;
    c.d_z = dz;
    auto params = EncoderParams::init(c, 9, rng);
    GraphSnapshot s = random_snapshot(9, rng);
    Tape t;
    EncoderVars ev = EncoderVars::bind(t, params);
    const Encoded e = encode_snapshot(t, s, ev, c, rng, Mode::train);
    CHECK(e.z.rows() == 9);
    CHECK(e.z.cols() == static_cast<Eigen::Index>(dz));
    CHECK(std::isfinite(e.kl.scalar()));
  }
}

TEST_CASE("config validation") {
  EncoderConfig c;
  c.p_drop = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = EncoderConfig{};
  c.heads = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("encoder gradients pass finite differences in train mode") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    Rng rng(seed);
    EncoderConfig c = small_config();
    auto params = EncoderParams::init(c, 6, rng);
    for (auto* p : params.all())
      for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += rng.normal(0.0, 0.1);
    GraphSnapshot s = random_snapshot(6, rng);
    auto build = [&](Tape& t) {
      EncoderVars ev = EncoderVars::bind(t, params);
      Rng step(seed * 31);
      const Encoded e = encode_snapshot(t, s, ev, c, step, Mode::train);
      return add(e.kl, sum(e.z));
    };
    const auto rep = oracle::check_gradients(params.all(), build);
    CAPTURE(rep.analytic);
    CAPTURE(rep.numeric);
    CHECK(rep.max_rel <= 1e-4);
  }
}
