#include "ivgae/tama.hpp"

#include <cmath>

#include "ivgae/encoder.hpp"
#include "ivgae/errors.hpp"

namespace ivgae {

double logit(double p) { return std::log(p / (1.0 - p)); }

GruParams GruParams::init(std::size_t width, Rng& rng) {
  const auto zero_bias = [&] { return Mat::Zero(1, static_cast<Eigen::Index>(width)); };
  GruParams g;
  g.w_z = Param("tama.gru.w_z", glorot(width, width, rng));
  g.w_r = Param("tama.gru.w_r", glorot(width, width, rng));
  g.w_h = Param("tama.gru.w_h", glorot(width, width, rng));
  g.u_z = Param("tama.gru.u_z", glorot(width, width, rng));
  g.u_r = Param("tama.gru.u_r", glorot(width, width, rng));
  g.u_h = Param("tama.gru.u_h", glorot(width, width, rng));
  g.b_z = Param("tama.gru.b_z", zero_bias());
  g.b_r = Param("tama.gru.b_r", zero_bias());
  g.b_h = Param("tama.gru.b_h", zero_bias());
  return g;
}

std::vector<Param*> GruParams::all() { return {&w_z, &w_r, &w_h, &u_z, &u_r, &u_h, &b_z, &b_r, &b_h}; }

TamaParams TamaParams::init(std::size_t width, const TamaOptions& options, Rng& rng) {
  if (!(options.gamma_init > 0.0 && options.gamma_init < 1.0)) throw ConfigError("gamma_init must be in (0, 1)");
  TamaParams p;
  p.gru = GruParams::init(width, rng);
  p.raw_gamma = Param("tama.raw_gamma", Mat::Constant(1, 1, logit(options.gamma_init)));
  p.beta_mix = Param("tama.beta_mix", Mat::Constant(1, 1, options.beta_init));
  return p;
}

std::vector<Param*> TamaParams::all() {
  std::vector<Param*> out = gru.all();
  out.push_back(&raw_gamma);
  out.push_back(&beta_mix);
  return out;
}

double TamaParams::gamma() const { return 1.0 / (1.0 + std::exp(-raw_gamma.value(0, 0))); }

GruVars GruVars::bind(Tape& tape, GruParams& p) {
  return {tape.param(p.w_z), tape.param(p.w_r), tape.param(p.w_h), tape.param(p.u_z), tape.param(p.u_r),
          tape.param(p.u_h), tape.param(p.b_z), tape.param(p.b_r), tape.param(p.b_h)};
}

TamaVars TamaVars::bind(Tape& tape, TamaParams& p) {
  TamaVars v;
  v.gru = GruVars::bind(tape, p.gru);
  v.gamma = sigmoid(tape.param(p.raw_gamma));
  v.beta_mix = tape.param(p.beta_mix);
  return v;
}

Var gru_cell(Var x, Var h_prev, const GruVars& g) {
  if (x.cols() != g.w_z.rows() || h_prev.cols() != g.u_z.rows() || x.rows() != h_prev.rows()) {
    throw DimensionError("gru_cell: input " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                         " / state " + std::to_string(h_prev.rows()) + "x" + std::to_string(h_prev.cols()) +
                         " do not match width " + std::to_string(g.w_z.rows()));
  }
  const Var update = sigmoid(add_row(add(matmul(x, g.w_z), matmul(h_prev, g.u_z)), g.b_z));
  const Var reset = sigmoid(add_row(add(matmul(x, g.w_r), matmul(h_prev, g.u_r)), g.b_r));
  const Var candidate = tanh(add_row(add(matmul(x, g.w_h), matmul(mul(reset, h_prev), g.u_h)), g.b_h));
  // (1 - z) * h_prev + z * candidate == h_prev + z * (candidate - h_prev)
  return add(h_prev, mul(update, sub(candidate, h_prev)));
}

std::vector<Var> gru_sequence(std::span<const Var> inputs, const GruVars& gru) {
  if (inputs.empty()) throw std::invalid_argument("gru_sequence: empty sequence");
  Tape& tape = *inputs.front().tape();
  Var h = tape.constant(Mat::Zero(inputs.front().rows(), gru.u_z.rows()));
  std::vector<Var> out;
  out.reserve(inputs.size());
  for (const Var& x : inputs) {
    h = gru_cell(x, h, gru);
    out.push_back(h);
  }
  return out;
}

Var score_adjacency(Var h) { return sigmoid(matmul_transposed(h, h)); }

Var memory_update(Var memory, Var scores, Var gamma) {
  return add(scale_by(gamma, memory), scale_by(add_scalar(neg(gamma), 1.0), scores));
}

MemoryState memory_update(const MemoryState& state, const Mat& scores, double gamma) {
  return {gamma * state.memory + (1.0 - gamma) * scores, state.steps + 1};
}

WindowOutput forward_window(Tape& tape, std::span<const Var> latents, const TamaVars& vars,
                            const std::optional<Mat>& initial_memory) {
  WindowOutput out;
  out.hidden = gru_sequence(latents, vars.gru);
  const Eigen::Index n = latents.front().rows();
  Var memory = tape.constant(initial_memory ? *initial_memory : Mat::Zero(n, n));
  for (const Var& h : out.hidden) memory = memory_update(memory, score_adjacency(h), vars.gamma);
  const Var& last = out.hidden.back();
  out.memory = memory;
  out.logits = add(matmul_transposed(last, last), scale_by(vars.beta_mix, memory));
  return out;
}

}  // namespace ivgae
