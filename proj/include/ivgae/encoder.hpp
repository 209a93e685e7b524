#pragma once

#include <cstddef>
#include <vector>

#include "ivgae/autodiff.hpp"
#include "ivgae/graphdata.hpp"
#include "ivgae/rng.hpp"

namespace ivgae {

enum class Mode { train, eval };

struct EncoderConfig {
  std::size_t d_in = kFeatureCount;
  std::size_t d_p = kFeatureCount;
  std::size_t d_hidden = 32;
  std::size_t d_z = 32;
  std::size_t heads = 3;
  std::size_t layers = 2;
  double p_drop = 0.2;
  double s_init = 1.0;

  /// Throws ConfigError when a width/count is zero or p_drop is outside [0, 1).
  void validate() const;
};

/// One attention-style propagation branch.
struct DaganHeadParams {
  Param mlp_weight;  // (d_in + d_p) x d_hidden
  Param mlp_bias;    // 1 x d_hidden
  Param scale;       // 1x1, the learnable norm s
  std::vector<Param> raw_alpha;  // per layer, alpha = logistic(raw)
  std::vector<Param> raw_beta;   // per layer, beta = logistic(raw)
};

struct EncoderParams {
  Param embedding;  // N x d_p learnable node features
  std::vector<DaganHeadParams> heads;
  Param gcn0;       // (d_in + d_p) x d_hidden
  Param gcn1;       // d_hidden x d_hidden
  Param shared;     // d_hidden x d_hidden, trunk of both variational heads
  Param mu;         // d_hidden x d_z
  Param log_sigma;  // d_hidden x d_z

  static EncoderParams init(const EncoderConfig& config, std::size_t nodes, Rng& rng);
  std::vector<Param*> all();
};

/// Glorot-uniform fan_in x fan_out matrix.
Mat glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Parameters registered on one tape. Reused for every snapshot of a window,
/// so gradients from all time steps accumulate into the same Params.
struct EncoderVars {
  struct Head {
    Var mlp_weight, mlp_bias, scale;
    std::vector<Var> alpha, beta;  // already mapped into (0, 1)
  };
  Var embedding;
  std::vector<Head> heads;
  Var gcn0, gcn1, shared, mu, log_sigma;

  static EncoderVars bind(Tape& tape, EncoderParams& params);
};

struct LatentDist {
  Var mu;
  Var log_sigma;
  Var z;
};

inline constexpr double kLogSigmaBound = 10.0;

/// D^-1/2 (A + I) D^-1/2 with D the row sums of A + I.
Mat normalized_adjacency(const Mat& adjacency);

/// Keeps each edge of `adjacency` independently with probability 1 - p_drop.
Mat drop_edges(const Mat& adjacency, double p_drop, Rng& rng);

Var build_input(Tape& tape, const Mat& features, Var embedding);

/// Non-local branch: normalized MLP projection followed by `layers` steps of
/// M <- alpha * P * M + beta * M0, with P the column softmax of T over the
/// (possibly edge-dropped) adjacency.
Var dagan_head(Tape& tape, Var x_tilde, const Mat& adjacency, const Mat& trade, const EncoderVars::Head& head,
               double p_drop, Rng& rng, Mode mode);

/// A_hat * H * W (activation left to the caller).
Var gcn_layer(Tape& tape, const Mat& norm_adj, Var h, Var weight);

/// A_hat * ReLU(A_hat * X * W0) * W1.
Var gcn_branch(Tape& tape, const Mat& norm_adj, Var x_tilde, Var w0, Var w1);

/// mean([H0, heads...]) + H0.
Var fuse(Var h0, std::span<const Var> heads);

/// Shared trunk G = ReLU(A_hat H W_shared); mu = A_hat G W_mu; log sigma likewise,
/// clamped to [-10, 10]. `z` is left unset.
LatentDist variational_heads(Tape& tape, const Mat& norm_adj, Var h, Var w_shared, Var w_mu, Var w_log_sigma);

/// Reparameterized sample in train mode, the mean in eval mode.
Var sample_z(Tape& tape, const LatentDist& dist, Rng& rng, Mode mode);

/// -1/2 sum(1 + 2 log sigma - mu^2 - exp(2 log sigma)), as a 1x1 node.
Var kl_divergence(Var mu, Var log_sigma);

struct Encoded {
  Var z;
  Var kl;
  LatentDist dist;
};

Encoded encode_snapshot(Tape& tape, const GraphSnapshot& snapshot, const EncoderVars& vars,
                        const EncoderConfig& config, Rng& rng, Mode mode);

}  // namespace ivgae
