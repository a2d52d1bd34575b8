#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "meshgcn/core.hpp"
#include "meshgcn/graph.hpp"

namespace meshgcn {

/// Square sparse matrix in CSR form. Rows are sorted by column index, so
/// products accumulate in a fixed order.
template <typename T>
struct CsrMatrixT {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<std::size_t> col;
  std::vector<T> val;

  std::vector<T> multiply(const std::vector<T>& x) const {
    std::vector<T> y(n, T(0));
    for (std::size_t i = 0; i < n; ++i) {
      T acc = T(0);
      for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) acc += val[k] * x[col[k]];
      y[i] = acc;
    }
    return y;
  }

  /// Y = A * X for a dense row-major right factor.
  Mat<T> multiply(const Mat<T>& x) const {
    detail::require_arg(x.rows() == n, "CsrMatrix::multiply: row count mismatch");
    Mat<T> y(n, x.cols());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
        const T a = val[k];
        const std::size_t j = col[k];
        for (std::size_t c = 0; c < x.cols(); ++c) y(i, c) += a * x(j, c);
      }
    }
    return y;
  }

  template <typename U>
  CsrMatrixT<U> cast() const {
    CsrMatrixT<U> out;
    out.n = n;
    out.row_ptr = row_ptr;
    out.col = col;
    out.val.resize(val.size());
    for (std::size_t k = 0; k < val.size(); ++k) out.val[k] = static_cast<U>(val[k]);
    return out;
  }
};

using CsrMatrix = CsrMatrixT<double>;

/// Normalized graph Laplacian L = I - D^{-1/2} A D^{-1/2}. Symmetric positive
/// semidefinite with spectrum in [0, 2]. Vertices of degree zero keep an
/// identity row. The largest eigenvalue is cached once estimated.
class NormalizedLaplacian {
 public:
  NormalizedLaplacian() = default;

  explicit NormalizedLaplacian(const SparseGraph& g) : n_(g.n_vertices()) {
    m_.n = n_;
    m_.row_ptr.assign(n_ + 1, 0);
    // One diagonal entry per row plus the off-diagonal pattern of A.
    for (std::size_t v = 0; v < n_; ++v) {
      m_.row_ptr[v + 1] = m_.row_ptr[v] + 1 + (g.row_ptr()[v + 1] - g.row_ptr()[v]);
    }
    m_.col.assign(m_.row_ptr[n_], 0);
    m_.val.assign(m_.row_ptr[n_], 0.0);
    const auto& deg = g.degrees();
    for (std::size_t v = 0; v < n_; ++v) {
      std::size_t cursor = m_.row_ptr[v];
      bool diag_written = false;
      for (std::size_t k = g.row_ptr()[v]; k < g.row_ptr()[v + 1]; ++k) {
        const std::size_t u = g.col()[k];
        if (!diag_written && u > v) {
          m_.col[cursor] = v;
          m_.val[cursor++] = 1.0;
          diag_written = true;
        }
        // -w / sqrt(d_i * d_j); the product form keeps small integer degree
        // products exact, e.g. L = I - A/d for d-regular unit-weight graphs.
        const double dij = deg[v] * deg[u];
        m_.col[cursor] = u;
        m_.val[cursor++] = (dij > 0.0 && g.weight()[k] != 0.0)
                               ? -g.weight()[k] / std::sqrt(dij)
                               : 0.0;
      }
      if (!diag_written) {
        m_.col[cursor] = v;
        m_.val[cursor++] = 1.0;
      }
    }
  }

  std::size_t n_vertices() const { return n_; }
  const CsrMatrix& matrix() const { return m_; }

  /// Largest eigenvalue, estimated on first use (power iteration) and cached.
  double lambda_max(double tol = 1e-6) const;

  /// Pins lambda_max (e.g. to the upper bound 2) instead of estimating it.
  void set_lambda_max(double value) {
    detail::require_arg(value > 0.0, "set_lambda_max: value must be positive");
    lambda_max_ = value;
  }

  bool has_lambda_max() const { return lambda_max_.has_value(); }

 private:
  std::size_t n_ = 0;
  CsrMatrix m_;
  mutable std::optional<double> lambda_max_;
};

/// Largest eigenvalue of a symmetric PSD matrix with spectrum in [0, 2], by
/// power iteration from the normalized all-ones vector. If that start lies in
/// the null space it is perturbed deterministically once. Convergence is
/// declared after the Rayleigh quotient moves by less than tol (relative) on
/// three consecutive iterations; the estimate is clamped to (0, 2].
inline double estimate_lambda_max(const CsrMatrix& m, double tol = 1e-6,
                                  std::size_t max_iterations = 10000) {
  detail::require_arg(tol > 0.0 && tol < 1.0, "estimate_lambda_max: tol must be in (0,1)");
  const std::size_t n = m.n;
  detail::require_arg(n > 0, "estimate_lambda_max: empty matrix");
  std::vector<double> x(n, 1.0 / std::sqrt(static_cast<double>(n)));
  double lambda_prev = 0.0;
  int stable = 0;
  bool perturbed = false;
  for (std::size_t it = 1; it <= max_iterations; ++it) {
    std::vector<double> y = m.multiply(x);
    double norm2 = 0.0, rayleigh = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      norm2 += y[i] * y[i];
      rayleigh += x[i] * y[i];
    }
    const double norm = std::sqrt(norm2);
    if (norm < 1e-140) {
      detail::require_state(!perturbed,
                            "estimate_lambda_max: iterate vanished twice (matrix ~ zero?)");
      // Start vector sits in the null space; tilt it deterministically.
      double s2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        x[i] = 1.0 + static_cast<double>(i + 1) / static_cast<double>(n);
        s2 += x[i] * x[i];
      }
      const double s = std::sqrt(s2);
      for (auto& v : x) v /= s;
      perturbed = true;
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / norm;
    if (it >= 2 && std::abs(rayleigh - lambda_prev) <= tol * std::max(std::abs(rayleigh), 1e-12)) {
      if (++stable >= 3) {
        return std::min(std::max(rayleigh, 1e-300), 2.0);
      }
    } else {
      stable = 0;
    }
    lambda_prev = rayleigh;
  }
  throw std::runtime_error("estimate_lambda_max: no convergence after " +
                           std::to_string(max_iterations) + " iterations");
}

inline double NormalizedLaplacian::lambda_max(double tol) const {
  if (!lambda_max_) lambda_max_ = estimate_lambda_max(m_, tol);
  return *lambda_max_;
}

inline NormalizedLaplacian normalized_laplacian(const SparseGraph& g) {
  return NormalizedLaplacian(g);
}

/// Scaled Laplacian 2L/lambda_max - I; spectrum in [-1, 1] for exact
/// lambda_max, which conditions the Chebyshev recurrence.
inline CsrMatrix scale_laplacian(const NormalizedLaplacian& lap, double lambda_max) {
  detail::require_arg(lambda_max > 0.0, "scale_laplacian: lambda_max must be positive");
  CsrMatrix out = lap.matrix();
  const double s = 2.0 / lambda_max;
  for (std::size_t i = 0; i < out.n; ++i) {
    for (std::size_t k = out.row_ptr[i]; k < out.row_ptr[i + 1]; ++k) {
      out.val[k] *= s;
      if (out.col[k] == i) out.val[k] -= 1.0;
    }
  }
  return out;
}

inline CsrMatrix scale_laplacian(const NormalizedLaplacian& lap) {
  return scale_laplacian(lap, lap.lambda_max());
}

}  // namespace meshgcn
