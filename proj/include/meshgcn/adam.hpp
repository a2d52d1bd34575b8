#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "meshgcn/core.hpp"

namespace meshgcn {

/// Bias-corrected Adam over a fixed tensor registry. Moments are stored in
/// the working precision; the update arithmetic runs in 64-bit.
template <typename T>
class Adam {
 public:
  Adam(std::vector<TensorRef<T>>& tensors, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : tensors_(&tensors), beta1_(beta1), beta2_(beta2), eps_(eps) {
    detail::require_arg(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
                        "Adam: betas must lie in [0, 1)");
    detail::require_arg(eps > 0.0, "Adam: eps must be positive");
    m_.reserve(tensors.size());
    v_.reserve(tensors.size());
    for (const auto& r : tensors) {
      m_.emplace_back(r.value->rows(), r.value->cols());
      v_.emplace_back(r.value->rows(), r.value->cols());
    }
  }

  void step(double lr_t) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < tensors_->size(); ++i) {
      const TensorRef<T>& r = (*tensors_)[i];
      for (std::size_t k = 0; k < r.value->size(); ++k) {
        const double g = static_cast<double>(r.grad->data()[k]);
        detail::require_state(std::isfinite(g), "Adam::step: nonfinite gradient in tensor " +
                                                    r.name + " at step " + std::to_string(t_));
        const double m = beta1_ * static_cast<double>(m_[i].data()[k]) + (1.0 - beta1_) * g;
        const double v = beta2_ * static_cast<double>(v_[i].data()[k]) + (1.0 - beta2_) * g * g;
        m_[i].data()[k] = static_cast<T>(m);
        v_[i].data()[k] = static_cast<T>(v);
        const double update = lr_t * (m / bc1) / (std::sqrt(v / bc2) + eps_);
        r.value->data()[k] = static_cast<T>(static_cast<double>(r.value->data()[k]) - update);
      }
    }
  }

  std::size_t t() const { return t_; }
  const std::vector<Mat<T>>& first_moments() const { return m_; }
  const std::vector<Mat<T>>& second_moments() const { return v_; }

  void restore_state(std::size_t t, std::vector<Mat<T>> m, std::vector<Mat<T>> v) {
    detail::require_arg(m.size() == m_.size() && v.size() == v_.size(),
                        "Adam::restore_state: tensor count mismatch");
    for (std::size_t i = 0; i < m.size(); ++i) {
      detail::require_arg(m[i].same_shape(m_[i]) && v[i].same_shape(v_[i]),
                          "Adam::restore_state: shape mismatch");
    }
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  std::vector<TensorRef<T>>* tensors_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Mat<T>> m_, v_;
};

/// One Adam update on a single scalar, exposed for direct verification of
/// the recurrences.
inline double adam_scalar_update(double& m, double& v, double g, std::size_t t, double lr,
                                 double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  m = beta1 * m + (1.0 - beta1) * g;
  v = beta2 * v + (1.0 - beta2) * g * g;
  const double mhat = m / (1.0 - std::pow(beta1, static_cast<double>(t)));
  const double vhat = v / (1.0 - std::pow(beta2, static_cast<double>(t)));
  return -lr * mhat / (std::sqrt(vhat) + eps);
}

}  // namespace meshgcn
