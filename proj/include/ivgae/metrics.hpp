#pragma once

#include <span>
#include <vector>

#include "ivgae/autodiff.hpp"
#include "ivgae/rng.hpp"

namespace ivgae {

struct LinkMetrics {
  double auc = 0.0;
  double ap = 0.0;
};

/// Fraction of (positive, negative) pairs ranked correctly; ties count 1/2.
/// O((P + Q) log(P + Q)) via rank sums.
double auc_score(std::span<const double> positives, std::span<const double> negatives);

/// sum_k precision(k) * (recall(k) - recall(k - 1)) over items sorted by
/// descending score. Equal scores keep their input order (stable sort).
double average_precision(std::span<const double> scores, std::span<const int> labels);

/// Symmetrized target and its evaluation mask (strict upper triangle).
struct SymmetricTarget {
  Mat target;  // max(A, A^T)
  Mat mask;    // 1 where i < j
};
SymmetricTarget symmetrize_target(const Mat& adjacency);

/// Positives are upper-triangle pairs with target 1. Negatives are an equally
/// sized uniform sample, without replacement, of upper-triangle zeros drawn
/// from `rng`. Only entries with i < j of `scores` are read. The sampled pairs
/// are ranked in row-major pair order before the stable score sort, so AP ties
/// resolve by matrix position. Throws EvaluationError if no positives exist or
/// there are fewer zeros than positives.
LinkMetrics evaluate_links(const Mat& scores, const Mat& target_sym, Rng rng);

}  // namespace ivgae
