#include "ivgae/encoder.hpp"

#include <cmath>

#include "ivgae/errors.hpp"

namespace ivgae {

void EncoderConfig::validate() const {
  if (d_in == 0 || d_p == 0 || d_hidden == 0 || d_z == 0) throw ConfigError("encoder widths must be >= 1");
  if (heads == 0) throw ConfigError("encoder needs at least one attention head");
  if (layers == 0) throw ConfigError("encoder needs at least one propagation layer");
  if (!(p_drop >= 0.0 && p_drop < 1.0)) throw ConfigError("p_drop must be in [0, 1)");
}

Mat glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Mat w(static_cast<Eigen::Index>(fan_in), static_cast<Eigen::Index>(fan_out));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
  return w;
}

EncoderParams EncoderParams::init(const EncoderConfig& c, std::size_t nodes, Rng& rng) {
  c.validate();
  const std::size_t d_x = c.d_in + c.d_p;
  EncoderParams p;
  Mat emb(static_cast<Eigen::Index>(nodes), static_cast<Eigen::Index>(c.d_p));
  for (Eigen::Index i = 0; i < emb.size(); ++i) emb.data()[i] = rng.normal(0.0, 0.01);
  p.embedding = Param("encoder.embedding", std::move(emb));
  for (std::size_t h = 0; h < c.heads; ++h) {
    const std::string prefix = "encoder.head" + std::to_string(h) + ".";
    DaganHeadParams head;
    head.mlp_weight = Param(prefix + "mlp_weight", glorot(d_x, c.d_hidden, rng));
    head.mlp_bias = Param(prefix + "mlp_bias", Mat::Zero(1, static_cast<Eigen::Index>(c.d_hidden)));
    head.scale = Param(prefix + "scale", Mat::Constant(1, 1, c.s_init));
    for (std::size_t l = 0; l < c.layers; ++l) {
      // logistic(0) = 0.5
      head.raw_alpha.emplace_back(prefix + "raw_alpha" + std::to_string(l), Mat::Zero(1, 1));
      head.raw_beta.emplace_back(prefix + "raw_beta" + std::to_string(l), Mat::Zero(1, 1));
    }
    p.heads.push_back(std::move(head));
  }
  p.gcn0 = Param("encoder.gcn0", glorot(d_x, c.d_hidden, rng));
  p.gcn1 = Param("encoder.gcn1", glorot(c.d_hidden, c.d_hidden, rng));
  p.shared = Param("encoder.shared", glorot(c.d_hidden, c.d_hidden, rng));
  p.mu = Param("encoder.mu", glorot(c.d_hidden, c.d_z, rng));
  p.log_sigma = Param("encoder.log_sigma", glorot(c.d_hidden, c.d_z, rng));
  return p;
}

std::vector<Param*> EncoderParams::all() {
  std::vector<Param*> out{&embedding};
  for (auto& h : heads) {
    out.push_back(&h.mlp_weight);
    out.push_back(&h.mlp_bias);
    out.push_back(&h.scale);
    for (auto& a : h.raw_alpha) out.push_back(&a);
    for (auto& b : h.raw_beta) out.push_back(&b);
  }
  for (Param* q : {&gcn0, &gcn1, &shared, &mu, &log_sigma}) out.push_back(q);
  return out;
}

EncoderVars EncoderVars::bind(Tape& tape, EncoderParams& p) {
  EncoderVars v;
  v.embedding = tape.param(p.embedding);
  for (auto& h : p.heads) {
    Head hv;
    hv.mlp_weight = tape.param(h.mlp_weight);
    hv.mlp_bias = tape.param(h.mlp_bias);
    hv.scale = tape.param(h.scale);
    for (auto& a : h.raw_alpha) hv.alpha.push_back(sigmoid(tape.param(a)));
    for (auto& b : h.raw_beta) hv.beta.push_back(sigmoid(tape.param(b)));
    v.heads.push_back(std::move(hv));
  }
  v.gcn0 = tape.param(p.gcn0);
  v.gcn1 = tape.param(p.gcn1);
  v.shared = tape.param(p.shared);
  v.mu = tape.param(p.mu);
  v.log_sigma = tape.param(p.log_sigma);
  return v;
}

Mat normalized_adjacency(const Mat& adjacency) {
  const Eigen::Index n = adjacency.rows();
  Mat a_hat = adjacency + Mat::Identity(n, n);
  const Eigen::VectorXd inv_sqrt = a_hat.rowwise().sum().cwiseSqrt().cwiseInverse();
  return inv_sqrt.asDiagonal() * a_hat * inv_sqrt.asDiagonal();
}

Mat drop_edges(const Mat& adjacency, double p_drop, Rng& rng) {
  Mat out = adjacency;
  if (p_drop <= 0.0) return out;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (out.data()[i] != 0.0 && rng.bernoulli(p_drop)) out.data()[i] = 0.0;
  }
  return out;
}

Var build_input(Tape& tape, const Mat& features, Var embedding) {
  if (features.rows() != embedding.rows()) {
    throw DimensionError("build_input: features have " + std::to_string(features.rows()) +
                         " rows but the node embedding has " + std::to_string(embedding.rows()));
  }
  return concat_cols(tape.constant(features), embedding);
}

Var dagan_head(Tape& tape, Var x_tilde, const Mat& adjacency, const Mat& trade, const EncoderVars::Head& head,
               double p_drop, Rng& rng, Mode mode) {
  if (adjacency.rows() != x_tilde.rows() || adjacency.cols() != adjacency.rows() ||
      trade.rows() != adjacency.rows() || trade.cols() != adjacency.cols()) {
    throw DimensionError("dagan_head: adjacency/trade must be N x N with N = " + std::to_string(x_tilde.rows()));
  }
  const Var projected = relu(add_row(matmul(x_tilde, head.mlp_weight), head.mlp_bias));
  const Var m0 = l2_normalize_rows(projected, head.scale);

  const Mat kept = mode == Mode::train ? drop_edges(adjacency, p_drop, rng) : adjacency;
  const Mat weights = trade.cwiseProduct(kept);
  const Var p = tape.constant(masked_softmax_columns(weights, kept));

  Var m = m0;
  for (std::size_t l = 0; l < head.alpha.size(); ++l) {
    m = add(scale_by(head.alpha[l], matmul(p, m)), scale_by(head.beta[l], m0));
  }
  return m;
}

Var gcn_layer(Tape& tape, const Mat& norm_adj, Var h, Var weight) {
  return matmul(tape.constant(norm_adj), matmul(h, weight));
}

Var gcn_branch(Tape& tape, const Mat& norm_adj, Var x_tilde, Var w0, Var w1) {
  return gcn_layer(tape, norm_adj, relu(gcn_layer(tape, norm_adj, x_tilde, w0)), w1);
}

Var fuse(Var h0, std::span<const Var> heads) {
  std::vector<Var> all{h0};
  all.insert(all.end(), heads.begin(), heads.end());
  return add(mean_stack(all), h0);
}

LatentDist variational_heads(Tape& tape, const Mat& norm_adj, Var h, Var w_shared, Var w_mu, Var w_log_sigma) {
  const Var trunk = relu(gcn_layer(tape, norm_adj, h, w_shared));
  LatentDist d;
  d.mu = gcn_layer(tape, norm_adj, trunk, w_mu);
  d.log_sigma = clamp(gcn_layer(tape, norm_adj, trunk, w_log_sigma), -kLogSigmaBound, kLogSigmaBound);
  return d;
}

Var sample_z(Tape& tape, const LatentDist& dist, Rng& rng, Mode mode) {
  if (mode == Mode::eval) return dist.mu;
  Mat eps(dist.mu.rows(), dist.mu.cols());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = rng.normal();
  return add(dist.mu, mul(exp(dist.log_sigma), tape.constant(std::move(eps))));
}

Var kl_divergence(Var mu, Var log_sigma) {
  if (mu.rows() != log_sigma.rows() || mu.cols() != log_sigma.cols()) {
    throw DimensionError("kl_divergence: mu and log_sigma shapes differ");
  }
  Tape& t = *mu.tape();
  const Mat& m = mu.value();
  const Mat& ls = log_sigma.value();
  const Mat var = (2.0 * ls).array().exp().matrix();
  const double kl = -0.5 * (1.0 + 2.0 * ls.array() - m.array().square() - var.array()).sum();
  const std::size_t im = mu.id(), il = log_sigma.id();
  return t.push("kl_divergence", Mat::Constant(1, 1, kl), {mu, log_sigma},
                [im, il, var](Tape& tp, const Mat& g) {
                  const double s = g(0, 0);
                  if (tp.requires_grad(im)) tp.accumulate(im, tp.value(im) * s);
                  if (tp.requires_grad(il)) tp.accumulate(il, (var.array() - 1.0).matrix() * s);
                });
}

Encoded encode_snapshot(Tape& tape, const GraphSnapshot& snapshot, const EncoderVars& vars,
                        const EncoderConfig& config, Rng& rng, Mode mode) {
  const Var x_tilde = build_input(tape, snapshot.features, vars.embedding);
  const Mat norm_adj = normalized_adjacency(snapshot.adjacency);

  std::vector<Var> heads;
  heads.reserve(vars.heads.size());
  for (const auto& head : vars.heads) {
    heads.push_back(dagan_head(tape, x_tilde, snapshot.adjacency, snapshot.trade, head, config.p_drop, rng, mode));
  }
  const Var h0 = gcn_branch(tape, norm_adj, x_tilde, vars.gcn0, vars.gcn1);
  const Var h = fuse(h0, heads);

  Encoded out;
  out.dist = variational_heads(tape, norm_adj, h, vars.shared, vars.mu, vars.log_sigma);
  out.z = sample_z(tape, out.dist, rng, mode);
  out.dist.z = out.z;
  out.kl = kl_divergence(out.dist.mu, out.dist.log_sigma);
  return out;
}

}  // namespace ivgae
