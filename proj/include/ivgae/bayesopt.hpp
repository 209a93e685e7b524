#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ivgae/rng.hpp"
#include "ivgae/training.hpp"

namespace ivgae {

/// The five tuned hyperparameters, in the column order of the best-config file.
struct HyperConfig {
  double lr = 1e-3;
  std::size_t z_dim = 32;
  double gamma_init = 0.8;
  double beta_init = 0.5;
  double lambda_kl = 1e-4;
};

HyperConfig hyper_from(const TrainConfig& config);
void apply_hyper(const HyperConfig& hyper, TrainConfig& config);

// Box over the hyperparameters. lr and lambda_kl are searched on a log scale,
// z_dim is categorical. The unit-cube encoding is
// [lr, gamma, beta, lambda, onehot(z=16), onehot(z=32), onehot(z=64)].
struct SearchSpace {
  double lr_lo = 1e-4, lr_hi = 1e-2;
  std::array<std::size_t, 3> z_dims{16, 32, 64};
  double gamma_lo = 0.5, gamma_hi = 0.95;
  double beta_lo = 0.1, beta_hi = 1.0;
  double lambda_lo = 1e-5, lambda_hi = 1e-3;

  static constexpr std::size_t kDims = 7;
  /// One length scale per continuous coordinate, one for the z_dim block.
  static std::vector<std::vector<std::size_t>> ard_groups() { return {{0}, {1}, {2}, {3}, {4, 5, 6}}; }

  bool contains(const HyperConfig& c) const;
  /// Throws ConfigError when `c` lies outside the box.
  std::vector<double> normalize(const HyperConfig& c) const;
  /// Inverse of normalize; the categorical block picks its largest entry.
  HyperConfig denormalize(std::span<const double> u) const;
  HyperConfig sample(Rng& rng) const;
};

// Zero-mean GP on standardized targets with a squared-exponential kernel
// k(a, b) = exp(-sum_k (a_k - b_k)^2 / (2 l_k^2)) plus observation noise.
class GaussianProcess {
 public:
  struct Hyper {
    double length_scale = 0.3;
    double noise = 1e-6;
    /// Per-dimension length scales; empty means length_scale everywhere.
    std::vector<double> scales;
  };

  /// Fits with fixed hyperparameters. Returns false when the targets have
  /// zero spread or the kernel cannot be factorized.
  bool fit(const std::vector<std::vector<double>>& x, const std::vector<double>& y, Hyper hyper);
  /// Picks the (length scale, noise) grid pair with the largest marginal likelihood.
  bool fit_ml(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
              std::span<const double> length_grid, std::span<const double> noise_grid);
  /// fit_ml, then coordinate ascent on one length scale per group of
  /// dimensions (a few sweeps over length_grid). Groups must cover every dimension.
  bool fit_ard(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
               const std::vector<std::vector<std::size_t>>& groups, std::span<const double> length_grid,
               std::span<const double> noise_grid);

  /// Posterior mean and standard deviation in the original target units.
  std::pair<double, double> predict(std::span<const double> x) const;
  double log_marginal_likelihood() const { return lml_; }
  const Hyper& hyper() const { return hyper_; }

 private:
  std::vector<std::vector<double>> x_;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd alpha_;
  Hyper hyper_;
  std::vector<double> inv_;  // 1 / (2 l_k^2) per dimension
  double lml_ = 0.0;

  double kernel(std::span<const double> a, std::span<const double> b) const;
};

/// Expected improvement over `best` for maximization.
double expected_improvement(double mean, double stddev, double best, double xi = 0.0);

struct OptimizerOptions {
  std::size_t warmup = 10;
  std::size_t candidates = 2048;
  std::vector<double> length_grid{0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0};
  std::vector<double> noise_grid{1e-6, 1e-4, 1e-2, 1e-1};
  /// Dimension groups sharing a length scale; empty fits a single scale.
  std::vector<std::vector<std::size_t>> ard_groups;
};

// Sequential GP-EI maximizer over points produced by a sampler. The first
// `warmup` suggestions are sampler draws; after that the GP is refit on all
// observations and the best of `candidates` sampler draws by EI is returned.
class BayesianOptimizer {
 public:
  using Sampler = std::function<std::vector<double>(Rng&)>;

  explicit BayesianOptimizer(Sampler sampler, OptimizerOptions options = {});

  std::vector<double> suggest(Rng& rng);
  void observe(std::vector<double> x, double y);

  std::size_t suggestions() const { return suggestions_; }
  std::size_t observations() const { return y_.size(); }
  /// True when the last suggestion after warm-up fell back to a random draw.
  bool fell_back() const { return fell_back_; }
  const GaussianProcess& model() const { return gp_; }

 private:
  Sampler sampler_;
  OptimizerOptions options_;
  std::vector<std::vector<double>> x_;
  std::vector<double> y_;
  GaussianProcess gp_;
  std::size_t suggestions_ = 0;
  bool fell_back_ = false;
};

// ---- trials --------------------------------------------------------------------

enum class TrialStatus { running, pruned, complete, failed };
std::string to_string(TrialStatus s);

struct Trial {
  std::size_t id = 0;
  HyperConfig config;
  std::map<std::size_t, double> intermediate;  // epoch -> mean validation AUC
  TrialStatus status = TrialStatus::running;
  std::optional<double> objective;
  std::optional<std::size_t> pruned_at;
  std::string error;
};

/// Prunes when at least `min_trials` earlier trials reported at this
/// checkpoint and `value` is strictly below their median.
class MedianPruner {
 public:
  explicit MedianPruner(std::size_t min_trials = 5) : min_trials_(min_trials) {}
  bool should_prune(std::size_t epoch, double value, std::span<const Trial> history) const;

 private:
  std::size_t min_trials_;
};

struct StudyOptions {
  std::size_t trials = 20;
  std::vector<std::uint64_t> trial_seeds = seed_range(1000, 1002);
  std::size_t epochs = 500;
  std::size_t checkpoint_every = 50;
  std::size_t pruner_min_trials = 5;
  OptimizerOptions optimizer;
  SearchSpace space;
  /// Retrain the winner from scratch over base.seeds and report it.
  bool retrain = true;
  std::size_t jobs = 1;
};

struct StudyResult {
  std::vector<Trial> trials;
  std::optional<std::size_t> best_trial;  // index into trials
  HyperConfig best;
  double best_objective = 0.0;
  std::vector<RunResult> retrain_runs;
  std::optional<EvalReport> report;
};

/// GP-EI search with median pruning at every checkpoint. Pruned trials are
/// shown to the surrogate with their last checkpoint value.
StudyResult run_study(const TemporalDataset& ds, const TrainConfig& base, const StudyOptions& options,
                      std::uint64_t seed, std::ostream* log = nullptr);

/// Uniform sampling with the same training protocol and no pruning. With the
/// same seed its first `optimizer.warmup` configs equal those of run_study.
StudyResult random_search_control(const TemporalDataset& ds, const TrainConfig& base, const StudyOptions& options,
                                  std::uint64_t seed, std::ostream* log = nullptr);

}  // namespace ivgae
