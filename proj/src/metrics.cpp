#include "ivgae/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <tuple>

#include "ivgae/errors.hpp"

namespace ivgae {

double auc_score(std::span<const double> positives, std::span<const double> negatives) {
  if (positives.empty() || negatives.empty()) throw EvaluationError("auc: need at least one positive and one negative");
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(positives.size() + negatives.size());
  for (double s : positives) items.push_back({s, true});
  for (double s : negatives) items.push_back({s, false});
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score < b.score; });

  // Mann-Whitney U with mid-ranks for tied groups.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    std::size_t pos_in_group = 0;
    while (j < items.size() && items[j].score == items[i].score) {
      pos_in_group += items[j].positive ? 1 : 0;
      ++j;
    }
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += mid_rank * static_cast<double>(pos_in_group);
    i = j;
  }
  const double p = static_cast<double>(positives.size());
  const double q = static_cast<double>(negatives.size());
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("average_precision: scores/labels length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const auto total = static_cast<double>(std::count_if(labels.begin(), labels.end(), [](int l) { return l != 0; }));
  if (total == 0) throw EvaluationError("average_precision: no positives");
  double ap = 0.0;
  double hits = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (labels[order[k]] == 0) continue;
    hits += 1.0;
    ap += (hits / static_cast<double>(k + 1)) * (1.0 / total);
  }
  return ap;
}

SymmetricTarget symmetrize_target(const Mat& adjacency) {
  if (adjacency.rows() != adjacency.cols()) throw DimensionError("symmetrize_target: adjacency must be square");
  const Eigen::Index n = adjacency.rows();
  SymmetricTarget out{adjacency.cwiseMax(adjacency.transpose()), Mat::Zero(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) out.mask(i, j) = 1.0;
  }
  return out;
}

LinkMetrics evaluate_links(const Mat& scores, const Mat& target_sym, Rng rng) {
  if (scores.rows() != target_sym.rows() || scores.cols() != target_sym.cols() || scores.rows() != scores.cols()) {
    throw DimensionError("evaluate_links: scores and target must be equal square matrices");
  }
  const Eigen::Index n = scores.rows();
  std::vector<std::pair<Eigen::Index, Eigen::Index>> ones, zeros;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) (target_sym(i, j) != 0.0 ? ones : zeros).emplace_back(i, j);
  }
  if (ones.empty()) throw EvaluationError("evaluate: no positive pairs in the upper triangle");
  if (zeros.size() < ones.size()) throw EvaluationError("evaluate: fewer negative pairs than positives");

  // Partial Fisher-Yates: the first |ones| slots become the sample.
  for (std::size_t k = 0; k < ones.size(); ++k) {
    const std::size_t pick = k + static_cast<std::size_t>(rng.below(zeros.size() - k));
    std::swap(zeros[k], zeros[pick]);
  }
  zeros.resize(ones.size());

  struct Pair {
    Eigen::Index i, j;
    int label;
  };
  std::vector<Pair> sample;
  sample.reserve(2 * ones.size());
  for (const auto& [i, j] : ones) sample.push_back({i, j, 1});
  for (const auto& [i, j] : zeros) sample.push_back({i, j, 0});
  std::sort(sample.begin(), sample.end(), [](const Pair& a, const Pair& b) { return std::tie(a.i, a.j) < std::tie(b.i, b.j); });

  std::vector<double> pos, neg, all;
  std::vector<int> labels;
  for (const Pair& p : sample) {
    const double s = scores(p.i, p.j);
    (p.label ? pos : neg).push_back(s);
    all.push_back(s);
    labels.push_back(p.label);
  }
  return {auc_score(pos, neg), average_precision(all, labels)};
}

}  // namespace ivgae
