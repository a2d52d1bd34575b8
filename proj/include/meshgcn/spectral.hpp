#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <vector>

#include "meshgcn/core.hpp"
#include "meshgcn/graph.hpp"
#include "meshgcn/laplacian.hpp"

namespace meshgcn {

namespace detail {

inline Eigen::MatrixXd to_dense(const CsrMatrix& m) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m.n),
                                            static_cast<Eigen::Index>(m.n));
  for (std::size_t i = 0; i < m.n; ++i) {
    for (std::size_t k = m.row_ptr[i]; k < m.row_ptr[i + 1]; ++k) {
      d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m.col[k])) = m.val[k];
    }
  }
  return d;
}

}  // namespace detail

/// Full eigendecomposition of the normalized Laplacian, eigenvalues ascending.
struct LaplacianEigs {
  std::vector<double> values;
  Eigen::MatrixXd vectors;  // column i pairs with values[i]
};

inline LaplacianEigs dense_eigendecomposition(const NormalizedLaplacian& lap) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(detail::to_dense(lap.matrix()));
  detail::require_state(solver.info() == Eigen::Success,
                        "dense_eigendecomposition: eigensolver failed");
  LaplacianEigs out;
  out.values.assign(solver.eigenvalues().data(),
                    solver.eigenvalues().data() + solver.eigenvalues().size());
  out.vectors = solver.eigenvectors();
  return out;
}

/// Chebyshev polynomial sum evaluated at a scalar by the three-term
/// recurrence: sum_k theta_k T_k(x).
inline double cheb_eval(const std::vector<double>& theta, double x) {
  detail::require_arg(!theta.empty(), "cheb_eval: empty coefficient list");
  double acc = theta[0];
  double tkm1 = 1.0, tk = x;
  for (std::size_t k = 1; k < theta.size(); ++k) {
    acc += theta[k] * tk;
    const double tnext = 2.0 * x * tk - tkm1;
    tkm1 = tk;
    tk = tnext;
  }
  return acc;
}

/// Spectral filtering in the eigenbasis: U g(Lambda) U^T x with
/// g(lambda) = sum_k theta_k T_k(2 lambda / lambda_max - 1). Dense reference
/// path for small graphs; the Chebyshev recurrence must reproduce it.
inline std::vector<double> dense_spectral_filter(const NormalizedLaplacian& lap,
                                                 const std::vector<double>& theta,
                                                 const std::vector<double>& x,
                                                 double lambda_max,
                                                 std::size_t max_vertices = 256) {
  const std::size_t n = lap.n_vertices();
  detail::require_arg(n <= max_vertices, "dense_spectral_filter: graph too large for dense path");
  detail::require_arg(x.size() == n, "dense_spectral_filter: signal length mismatch");
  detail::require_arg(lambda_max > 0.0, "dense_spectral_filter: lambda_max must be positive");
  const LaplacianEigs eig = dense_eigendecomposition(lap);
  Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(n));
  Eigen::VectorXd xhat = eig.vectors.transpose() * xv;
  for (std::size_t i = 0; i < n; ++i) {
    const double scaled = 2.0 * eig.values[i] / lambda_max - 1.0;
    xhat[static_cast<Eigen::Index>(i)] *= cheb_eval(theta, scaled);
  }
  Eigen::VectorXd y = eig.vectors * xhat;
  return std::vector<double>(y.data(), y.data() + y.size());
}

inline std::vector<double> dense_spectral_filter(const NormalizedLaplacian& lap,
                                                 const std::vector<double>& theta,
                                                 const std::vector<double>& x) {
  return dense_spectral_filter(lap, theta, x, lap.lambda_max());
}

/// Chebyshev-recurrence filtering of a single signal, never materializing the
/// eigenbasis: y = sum_k theta_k T_k(Lscaled) x.
inline std::vector<double> chebyshev_spectral_filter(const NormalizedLaplacian& lap,
                                                     const std::vector<double>& theta,
                                                     const std::vector<double>& x,
                                                     double lambda_max) {
  const std::size_t n = lap.n_vertices();
  detail::require_arg(x.size() == n, "chebyshev_spectral_filter: signal length mismatch");
  const CsrMatrix ls = scale_laplacian(lap, lambda_max);
  std::vector<double> y(n, 0.0);
  std::vector<double> tkm1 = x;  // T_0 x
  for (std::size_t i = 0; i < n; ++i) y[i] = theta[0] * tkm1[i];
  if (theta.size() == 1) return y;
  std::vector<double> tk = ls.multiply(x);  // T_1 x
  for (std::size_t i = 0; i < n; ++i) y[i] += theta[1] * tk[i];
  for (std::size_t k = 2; k < theta.size(); ++k) {
    std::vector<double> tnext = ls.multiply(tk);
    for (std::size_t i = 0; i < n; ++i) tnext[i] = 2.0 * tnext[i] - tkm1[i];
    for (std::size_t i = 0; i < n; ++i) y[i] += theta[k] * tnext[i];
    tkm1.swap(tk);
    tk.swap(tnext);
  }
  return y;
}

inline std::vector<double> chebyshev_spectral_filter(const NormalizedLaplacian& lap,
                                                     const std::vector<double>& theta,
                                                     const std::vector<double>& x) {
  return chebyshev_spectral_filter(lap, theta, x, lap.lambda_max());
}

namespace detail {

inline void fix_sign(std::vector<double>& v) {
  double amax = 0.0;
  for (double c : v) amax = std::max(amax, std::abs(c));
  const double floor = 1e-12 * amax;
  for (double c : v) {
    if (std::abs(c) > floor) {
      if (c < 0.0) {
        for (auto& e : v) e = -e;
      }
      return;
    }
  }
}

}  // namespace detail

/// Eigenvector for the second-smallest eigenvalue of the normalized
/// Laplacian (the Fiedler vector). Requires a connected graph so that the
/// smallest eigenvalue 0 is simple. Unit norm, sign fixed so the first
/// entry that is not negligibly small is positive.
inline std::vector<double> fiedler_vector(const SparseGraph& g,
                                          std::size_t dense_threshold = 1024) {
  detail::require_arg(g.n_vertices() >= 2, "fiedler_vector: need at least 2 vertices");
  detail::require_arg(g.is_connected(), "fiedler_vector: graph must be connected");
  const std::size_t n = g.n_vertices();
  const NormalizedLaplacian lap(g);

  if (n <= dense_threshold) {
    const LaplacianEigs eig = dense_eigendecomposition(lap);
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = eig.vectors(static_cast<Eigen::Index>(i), 1);
    detail::fix_sign(v);
    return v;
  }

  // Large graphs: power iteration on M = 2I - L (top eigenvector of M away
  // from the known null direction q = D^{1/2} 1 is the Fiedler vector).
  const auto& deg = g.degrees();
  std::vector<double> q(n);
  double qn2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    q[i] = std::sqrt(deg[i]);
    qn2 += q[i] * q[i];
  }
  const double qn = std::sqrt(qn2);
  for (auto& e : q) e /= qn;

  const CsrMatrix& l = lap.matrix();
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = std::cos(static_cast<double>(i + 1));  // deterministic, dense start
  }
  auto deflate = [&](std::vector<double>& v) {
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += v[i] * q[i];
    for (std::size_t i = 0; i < n; ++i) v[i] -= dot * q[i];
  };
  auto normalize = [&](std::vector<double>& v) {
    double n2 = 0.0;
    for (double e : v) n2 += e * e;
    const double nn = std::sqrt(n2);
    detail::require_state(nn > 1e-140, "fiedler_vector: iterate vanished");
    for (auto& e : v) e /= nn;
  };
  deflate(x);
  normalize(x);
  double prev = 0.0;
  int stable = 0;
  for (std::size_t it = 0; it < 100000; ++it) {
    std::vector<double> y = l.multiply(x);
    for (std::size_t i = 0; i < n; ++i) y[i] = 2.0 * x[i] - y[i];
    deflate(y);
    double rayleigh = 0.0;
    for (std::size_t i = 0; i < n; ++i) rayleigh += x[i] * y[i];
    normalize(y);
    x.swap(y);
    if (it >= 1 && std::abs(rayleigh - prev) <= 1e-12 * std::max(std::abs(rayleigh), 1e-12)) {
      if (++stable >= 3) break;
    } else {
      stable = 0;
    }
    prev = rayleigh;
  }
  detail::fix_sign(x);
  return x;
}

}  // namespace meshgcn
