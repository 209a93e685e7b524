#pragma once

#include <cstdint>
#include <vector>

#include "ivgae/autodiff.hpp"

namespace ivgae {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed list of parameters. Parameters marked
// non-trainable are skipped but still have their gradient cleared.
class Adam {
 public:
  explicit Adam(std::vector<Param*> params, AdamOptions options = {});

  /// Applies one update from the accumulated grads, then zeroes them.
  /// Throws NumericError naming the first parameter with a non-finite grad.
  void step(double lr);

  std::int64_t t() const { return t_; }
  const Mat& first_moment(std::size_t i) const { return m_[i]; }
  const Mat& second_moment(std::size_t i) const { return v_[i]; }
  const std::vector<Param*>& params() const { return params_; }

 private:
  std::vector<Param*> params_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  AdamOptions options_;
  std::int64_t t_ = 0;
};

}  // namespace ivgae
