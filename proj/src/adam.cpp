#include "ivgae/adam.hpp"

#include <cmath>

#include "ivgae/errors.hpp"

namespace ivgae {

Adam::Adam(std::vector<Param*> params, AdamOptions options) : params_(std::move(params)), options_(options) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Param* p : params_) {
    m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step(double lr) {
  for (const Param* p : params_) {
    if (p->trainable && !p->grad.allFinite()) throw NumericError("adam: non-finite gradient in '" + p->name + "'");
  }
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    if (p.trainable) {
      m_[i] = b1 * m_[i] + (1.0 - b1) * p.grad;
      v_[i] = b2 * v_[i] + (1.0 - b2) * p.grad.cwiseProduct(p.grad);
      const auto m_hat = m_[i].array() / c1;
      const auto v_hat = v_[i].array() / c2;
      p.value.array() -= lr * m_hat / (v_hat.sqrt() + options_.eps);
    }
    p.zero_grad();
  }
}

}  // namespace ivgae
