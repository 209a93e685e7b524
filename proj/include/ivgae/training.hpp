#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ivgae/encoder.hpp"
#include "ivgae/graphdata.hpp"
#include "ivgae/metrics.hpp"
#include "ivgae/tama.hpp"

namespace ivgae {

enum class ModelKind {
  tama,          // encoder + GRU + momentum memory
  gru,           // same, memory weight frozen at zero
  static_ivgae,  // encoder alone on the last training snapshot
};

std::string to_string(ModelKind kind);
/// Accepts "tama", "gru", "static". Throws ConfigError otherwise.
ModelKind parse_model_kind(const std::string& name);

std::vector<std::uint64_t> seed_range(std::uint64_t first, std::uint64_t last);

struct TrainConfig {
  std::size_t epochs = 300;
  double lr = 1e-3;
  double kl_weight = 1e-4;
  std::size_t window = 4;
  std::vector<std::uint64_t> seeds = seed_range(1000, 1009);
  EncoderConfig encoder;
  TamaOptions tama;
  ModelKind model = ModelKind::tama;
  /// Seed of the negative sample used by every evaluation, fixed so curves
  /// and models are compared on the same pairs.
  std::uint64_t eval_seed = 20240101;
  /// Weight of positive pairs in the BCE term; 1 means unweighted.
  double pos_weight = 1.0;
  /// Evaluation only: start the held-out window's memory from the memory of
  /// the preceding window instead of zeros.
  bool persist_memory = false;

  void validate() const;
};

struct EpochRecord {
  double loss = 0.0;
  double auc = 0.0;
  double ap = 0.0;
};

struct RunResult {
  std::uint64_t seed = 0;
  double auc = 0.0;
  double ap = 0.0;
  double final_loss = 0.0;
  std::vector<double> loss_curve;
  std::vector<double> auc_curve;
  std::vector<double> ap_curve;
};

struct EvalReport {
  std::string model;
  std::size_t runs = 0;
  double auc_mean = 0.0;  // percent
  double auc_std = 0.0;
  double ap_mean = 0.0;
  double ap_std = 0.0;

  /// e.g. "tama AUC 96.55 ± 0.38 AP 96.58 ± 0.41 (n=10)"
  std::string summary() const;
};

/// Mean BCE-with-logits over the strict upper triangle plus
/// kl_weight * mean(kl_terms).
Var loss_total(Var logits, const SymmetricTarget& target, std::span<const Var> kl_terms, double kl_weight,
               double pos_weight = 1.0);

// Owns the parameters and optimizer of one seeded run and advances it one
// epoch at a time, so callers can inspect intermediate metrics (pruning).
// Every training window is visited once per epoch in chronological order,
// followed by an eval-mode pass over the held-out window.
class Trainer {
 public:
  Trainer(const TemporalDataset& ds, TrainConfig config, std::uint64_t seed);
  ~Trainer();
  Trainer(Trainer&&) noexcept;
  Trainer& operator=(Trainer&&) noexcept;

  EpochRecord run_epoch();
  std::size_t epochs_done() const;

  /// Eval-mode logits for the held-out target year.
  Mat predict_held_out() const;
  LinkMetrics evaluate_held_out() const;

  RunResult result() const;
  std::size_t parameter_count() const;
  const TrainConfig& config() const;

 private:
  struct State;
  std::unique_ptr<State> state_;
};

/// Full seeded run of `config.model`.
RunResult train_run(const TemporalDataset& ds, const TrainConfig& config, std::uint64_t seed);

/// Encoder-only baseline on the final training snapshot; ignores the window.
RunResult static_baseline_run(const TemporalDataset& ds, const TrainConfig& config, std::uint64_t seed);

/// One run per seed in config.seeds, results in seed order. With jobs > 1 the
/// runs execute on worker threads; output does not depend on `jobs`.
std::vector<RunResult> run_seeds(const TemporalDataset& ds, const TrainConfig& config, std::size_t jobs = 1);

/// Mean and sample standard deviation (n - 1; zero for one run), in percent.
EvalReport aggregate_runs(const std::string& model, std::span<const RunResult> results);

struct SweepRow {
  std::size_t window = 0;
  EvalReport report;
};

/// Runs the seeded protocol per window length; infeasible lengths are skipped
/// with a line on `notices`.
std::vector<SweepRow> window_sweep(const TemporalDataset& ds, const TrainConfig& config,
                                   std::span<const std::size_t> windows, std::ostream& notices, std::size_t jobs = 1);

}  // namespace ivgae
