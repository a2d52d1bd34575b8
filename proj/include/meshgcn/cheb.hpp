#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "meshgcn/core.hpp"
#include "meshgcn/laplacian.hpp"
#include "meshgcn/rng.hpp"

namespace meshgcn {

/// Chebyshev basis applied to a feature matrix: returns [T_0(Ls)X, ...,
/// T_{K-1}(Ls)X] by the three-term recurrence, never forming dense T_k.
template <typename T>
std::vector<Mat<T>> cheb_basis(const CsrMatrixT<T>& ls, const Mat<T>& x, std::size_t order) {
  detail::require_arg(order >= 1, "cheb_basis: order must be >= 1");
  detail::require_arg(x.rows() == ls.n, "cheb_basis: row count must match the graph");
  std::vector<Mat<T>> basis;
  basis.reserve(order);
  basis.push_back(x);
  if (order == 1) return basis;
  basis.push_back(ls.multiply(x));
  for (std::size_t k = 2; k < order; ++k) {
    Mat<T> next = ls.multiply(basis[k - 1]);
    for (std::size_t i = 0; i < next.size(); ++i) {
      next.data()[i] = T(2) * next.data()[i] - basis[k - 2].data()[i];
    }
    basis.push_back(std::move(next));
  }
  return basis;
}

/// Spectral graph convolution: Y[:, g] = sum_k sum_f (T_k(Ls)X)[:, f]
/// theta[k, f, g] (+ bias[g]). Coefficients are stored stacked by order:
/// theta rows [k*f_in, (k+1)*f_in) hold the k-th order block.
template <typename T>
class ChebConv {
 public:
  ChebConv() = default;

  ChebConv(std::size_t order, std::size_t f_in, std::size_t f_out, bool with_bias)
      : theta(order * f_in, f_out), dtheta(order * f_in, f_out),
        order_(order), f_in_(f_in), f_out_(f_out), with_bias_(with_bias) {
    detail::require_arg(order >= 1 && f_in >= 1 && f_out >= 1, "ChebConv: bad shape");
    if (with_bias_) {
      bias = Mat<T>(1, f_out);
      dbias = Mat<T>(1, f_out);
    }
  }

  void init(Rng& rng) {
    const double bound = std::sqrt(6.0 / (static_cast<double>(order_ * f_in_) +
                                          static_cast<double>(f_out_)));
    for (std::size_t i = 0; i < theta.size(); ++i) {
      theta.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
    }
    if (with_bias_) bias.fill(T(0));
  }

  std::size_t order() const { return order_; }
  std::size_t f_in() const { return f_in_; }
  std::size_t f_out() const { return f_out_; }
  bool with_bias() const { return with_bias_; }

  std::vector<Mat<T>> forward(const CsrMatrixT<T>& ls, const std::vector<Mat<T>>& batch) {
    ls_ = &ls;
    basis_cache_.clear();
    basis_cache_.reserve(batch.size());
    std::vector<Mat<T>> out;
    out.reserve(batch.size());
    for (const Mat<T>& x : batch) {
      detail::require_arg(x.cols() == f_in_, "ChebConv::forward: channel mismatch");
      std::vector<Mat<T>> basis = cheb_basis(ls, x, order_);
      Mat<T> y(x.rows(), f_out_);
      for (std::size_t k = 0; k < order_; ++k) {
        accumulate_block(basis[k], k, y);
      }
      if (with_bias_) {
        for (std::size_t n = 0; n < y.rows(); ++n) {
          for (std::size_t g = 0; g < f_out_; ++g) y(n, g) += bias(0, g);
        }
      }
      basis_cache_.push_back(std::move(basis));
      out.push_back(std::move(y));
    }
    return out;
  }

  /// Accumulates dtheta/dbias and returns dX. dtheta[k] = (T_k X)^T dY;
  /// dX = sum_k T_k(Ls) (dY theta_k^T), folded by running the recurrence
  /// transposed: G_{k-1} += 2 Ls G_k, G_{k-2} -= G_k, then dX = G_0 + Ls G_1.
  std::vector<Mat<T>> backward(const std::vector<Mat<T>>& d_out) {
    detail::require_state(ls_ != nullptr && basis_cache_.size() == d_out.size(),
                          "ChebConv::backward: no cached forward pass");
    std::vector<Mat<T>> d_in;
    d_in.reserve(d_out.size());
    for (std::size_t s = 0; s < d_out.size(); ++s) {
      const std::vector<Mat<T>>& basis = basis_cache_[s];
      const Mat<T>& dy = d_out[s];
      detail::require_arg(dy.cols() == f_out_ && dy.rows() == basis[0].rows(),
                          "ChebConv::backward: gradient shape mismatch");
      std::vector<Mat<T>> g(order_);
      for (std::size_t k = 0; k < order_; ++k) {
        // dtheta_k += (T_k X)^T dY
        for (std::size_t f = 0; f < f_in_; ++f) {
          for (std::size_t gcol = 0; gcol < f_out_; ++gcol) {
            T acc = T(0);
            for (std::size_t n = 0; n < dy.rows(); ++n) acc += basis[k](n, f) * dy(n, gcol);
            dtheta(k * f_in_ + f, gcol) += acc;
          }
        }
        // G_k = dY theta_k^T
        g[k] = Mat<T>(dy.rows(), f_in_);
        for (std::size_t n = 0; n < dy.rows(); ++n) {
          for (std::size_t f = 0; f < f_in_; ++f) {
            T acc = T(0);
            for (std::size_t gcol = 0; gcol < f_out_; ++gcol) {
              acc += dy(n, gcol) * theta(k * f_in_ + f, gcol);
            }
            g[k](n, f) = acc;
          }
        }
      }
      if (with_bias_) {
        for (std::size_t n = 0; n < dy.rows(); ++n) {
          for (std::size_t gcol = 0; gcol < f_out_; ++gcol) dbias(0, gcol) += dy(n, gcol);
        }
      }
      for (std::size_t k = order_; k-- > 2;) {
        Mat<T> prop = ls_->multiply(g[k]);
        for (std::size_t i = 0; i < prop.size(); ++i) {
          g[k - 1].data()[i] += T(2) * prop.data()[i];
          g[k - 2].data()[i] -= g[k].data()[i];
        }
      }
      Mat<T> dx = std::move(g[0]);
      if (order_ >= 2) {
        Mat<T> prop = ls_->multiply(g[1]);
        for (std::size_t i = 0; i < dx.size(); ++i) dx.data()[i] += prop.data()[i];
      }
      d_in.push_back(std::move(dx));
    }
    return d_in;
  }

  void zero_grad() {
    dtheta.fill(T(0));
    if (with_bias_) dbias.fill(T(0));
  }

  void collect(const std::string& prefix, std::vector<TensorRef<T>>& refs) {
    refs.push_back({prefix + ".theta", &theta, &dtheta});
    if (with_bias_) refs.push_back({prefix + ".bias", &bias, &dbias});
  }

  Mat<T> theta, dtheta;
  Mat<T> bias, dbias;

 private:
  void accumulate_block(const Mat<T>& basis_k, std::size_t k, Mat<T>& y) const {
    for (std::size_t n = 0; n < y.rows(); ++n) {
      for (std::size_t f = 0; f < f_in_; ++f) {
        const T b = basis_k(n, f);
        if (b == T(0)) continue;
        for (std::size_t gcol = 0; gcol < f_out_; ++gcol) {
          y(n, gcol) += b * theta(k * f_in_ + f, gcol);
        }
      }
    }
  }

  std::size_t order_ = 0, f_in_ = 0, f_out_ = 0;
  bool with_bias_ = false;
  const CsrMatrixT<T>* ls_ = nullptr;
  std::vector<std::vector<Mat<T>>> basis_cache_;
};

}  // namespace meshgcn
