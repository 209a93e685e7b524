#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ivgae/autodiff.hpp"
#include "ivgae/rng.hpp"

namespace ivgae {

// Gate weights act on row vectors: for a batch X (N x d) the update gate is
// sigmoid(X W_z + H U_z + b_z), so each node is an independent sequence.
struct GruParams {
  Param w_z, w_r, w_h;
  Param u_z, u_r, u_h;
  Param b_z, b_r, b_h;

  static GruParams init(std::size_t width, Rng& rng);
  std::vector<Param*> all();
};

struct TamaOptions {
  double gamma_init = 0.8;
  double beta_init = 0.5;
};

struct TamaParams {
  GruParams gru;
  Param raw_gamma;  // gamma = logistic(raw_gamma), always in (0, 1)
  Param beta_mix;   // unconstrained weight of the memory term

  static TamaParams init(std::size_t width, const TamaOptions& options, Rng& rng);
  std::vector<Param*> all();
  double gamma() const;
};

double logit(double p);

struct GruVars {
  Var w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h;
  static GruVars bind(Tape& tape, GruParams& params);
};

struct TamaVars {
  GruVars gru;
  Var gamma;
  Var beta_mix;
  static TamaVars bind(Tape& tape, TamaParams& params);
};

/// h_t = (1 - z) * h_prev + z * tanh(x W_h + (r * h_prev) U_h + b_h).
Var gru_cell(Var x, Var h_prev, const GruVars& gru);

/// Runs the cell over the sequence from a zero state; returns every hidden state.
std::vector<Var> gru_sequence(std::span<const Var> inputs, const GruVars& gru);

/// sigmoid(H H^T).
Var score_adjacency(Var h);

/// gamma * M + (1 - gamma) * A_hat, with gradients through all three inputs.
Var memory_update(Var memory, Var scores, Var gamma);

/// Value-only variant of the recursion.
struct MemoryState {
  Mat memory;
  std::size_t steps = 0;

  static MemoryState zeros(Eigen::Index n) { return {Mat::Zero(n, n), 0}; }
};
MemoryState memory_update(const MemoryState& state, const Mat& scores, double gamma);

struct WindowOutput {
  Var logits;                 // H_w H_w^T + beta_mix * M_w
  Var memory;                 // M_w
  std::vector<Var> hidden;    // H_1 .. H_w
};

/// GRU over the window, memory folded over every step's scores, fused logits.
/// Memory starts from zero unless `initial_memory` is given.
WindowOutput forward_window(Tape& tape, std::span<const Var> latents, const TamaVars& vars,
                            const std::optional<Mat>& initial_memory = std::nullopt);

}  // namespace ivgae
