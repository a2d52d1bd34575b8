#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "meshgcn/gradcheck.hpp"
#include "meshgcn/graph.hpp"
#include "meshgcn/laplacian.hpp"
#include "meshgcn/rng.hpp"
#include "meshgcn/spectral.hpp"

using namespace meshgcn;

namespace {

Eigen::MatrixXd dense_laplacian(const SparseGraph& g) {
  return detail::to_dense(normalized_laplacian(g).matrix());
}

std::vector<double> dense_eigenvalues(const SparseGraph& g) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense_laplacian(g));
  return std::vector<double>(solver.eigenvalues().data(),
                             solver.eigenvalues().data() + solver.eigenvalues().size());
}

double max_abs(const std::vector<double>& v) {
  double m = 0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST(Laplacian, TwoVertexUnitEdge) {
  const SparseGraph g = build_graph(2, {{0, 1, 1.0}});
  const Eigen::MatrixXd L = dense_laplacian(g);
  EXPECT_DOUBLE_EQ(L(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(L(0, 1), -1.0);
  EXPECT_DOUBLE_EQ(L(1, 0), -1.0);
  EXPECT_DOUBLE_EQ(L(1, 1), 1.0);
  const auto eig = dense_eigenvalues(g);
  EXPECT_NEAR(eig[0], 0.0, 1e-12);
  EXPECT_NEAR(eig[1], 2.0, 1e-12);
}

TEST(Laplacian, UnitTriangle) {
  const SparseGraph g = build_graph(3, {{0, 1, 1}, {1, 2, 1}, {0, 2, 1}});
  const Eigen::MatrixXd L = dense_laplacian(g);
  // Degree-2-regular with unit weights: L = I - A/2 exactly.
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      EXPECT_DOUBLE_EQ(L(i, j), i == j ? 1.0 : -0.5);
    }
  }
  const auto eig = dense_eigenvalues(g);
  EXPECT_NEAR(eig[0], 0.0, 1e-12);
  EXPECT_NEAR(eig[1], 1.5, 1e-12);
  EXPECT_NEAR(eig[2], 1.5, 1e-12);
}

TEST(Laplacian, IsolatedVerticesGiveIdentityRows) {
  const SparseGraph g = build_graph(3, {});
  const Eigen::MatrixXd L = dense_laplacian(g);
  EXPECT_TRUE(L.isIdentity(0.0));

  // Mixed case: an edge plus an isolated vertex.
  const SparseGraph mixed = build_graph(3, {{0, 1, 1.0}});
  const Eigen::MatrixXd Lm = dense_laplacian(mixed);
  EXPECT_DOUBLE_EQ(Lm(2, 2), 1.0);
  EXPECT_DOUBLE_EQ(Lm(2, 0), 0.0);
  EXPECT_DOUBLE_EQ(Lm(0, 2), 0.0);
}

TEST(Laplacian, SpectrumInZeroTwo) {
  Rng rng(101);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 4 + rng.uniform_below(61);  // up to 64
    const SparseGraph g = random_connected_graph(rng, n);
    const auto eig = dense_eigenvalues(g);
    EXPECT_GE(eig.front(), -1e-10);
    EXPECT_LE(eig.back(), 2.0 + 1e-10);
  }
}

TEST(Laplacian, LambdaMaxExamples) {
  const SparseGraph k2 = build_graph(2, {{0, 1, 1.0}});
  EXPECT_NEAR(normalized_laplacian(k2).lambda_max(), 2.0, 1e-5);

  const SparseGraph tri = build_graph(3, {{0, 1, 1}, {1, 2, 1}, {0, 2, 1}});
  EXPECT_NEAR(normalized_laplacian(tri).lambda_max(), 1.5, 1e-5);

  const SparseGraph empty = build_graph(3, {});
  EXPECT_NEAR(normalized_laplacian(empty).lambda_max(), 1.0, 1e-9);
}

TEST(Laplacian, LambdaMaxWithinOnePercentOfDense) {
  Rng rng(202);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.uniform_below(63);
    const SparseGraph g = random_connected_graph(rng, n);
    const double dense = dense_eigenvalues(g).back();
    const double est = normalized_laplacian(g).lambda_max();
    EXPECT_NEAR(est, dense, 0.01 * dense) << "n=" << n << " trial=" << trial;
  }
}

TEST(Laplacian, ScaleLaplacianExamples) {
  const SparseGraph k2 = build_graph(2, {{0, 1, 1.0}});
  const NormalizedLaplacian lap(k2);
  const Eigen::MatrixXd Ls = detail::to_dense(scale_laplacian(lap, 2.0));
  EXPECT_DOUBLE_EQ(Ls(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(Ls(0, 1), -1.0);
  EXPECT_DOUBLE_EQ(Ls(1, 0), -1.0);
  EXPECT_DOUBLE_EQ(Ls(1, 1), 0.0);

  const SparseGraph empty = build_graph(3, {});
  const Eigen::MatrixXd I3 = detail::to_dense(scale_laplacian(normalized_laplacian(empty), 1.0));
  EXPECT_TRUE(I3.isIdentity(0.0));

  // Unit triangle at lambda_max = 1.5: Ls = (4/3) L - I entrywise.
  const SparseGraph tri = build_graph(3, {{0, 1, 1}, {1, 2, 1}, {0, 2, 1}});
  const NormalizedLaplacian lt(tri);
  const Eigen::MatrixXd Lst = detail::to_dense(scale_laplacian(lt, 1.5));
  const Eigen::MatrixXd expect =
      (4.0 / 3.0) * detail::to_dense(lt.matrix()) - Eigen::MatrixXd::Identity(3, 3);
  EXPECT_LT((Lst - expect).cwiseAbs().maxCoeff(), 1e-15);

  EXPECT_THROW(scale_laplacian(lap, 0.0), std::invalid_argument);
}

TEST(Laplacian, ScaledSpectrumInMinusOneOne) {
  Rng rng(303);
  for (int trial = 0; trial < 20; ++trial) {
    const SparseGraph g = random_connected_graph(rng, 4 + rng.uniform_below(30));
    const NormalizedLaplacian lap(g);
    const double lm = dense_eigenvalues(g).back();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(
        detail::to_dense(scale_laplacian(lap, lm)));
    EXPECT_GE(solver.eigenvalues().minCoeff(), -1.0 - 1e-9);
    EXPECT_LE(solver.eigenvalues().maxCoeff(), 1.0 + 1e-9);
  }
}

TEST(Laplacian, RowSumsMatchAdjacencyNormalization) {
  Rng rng(404);
  const SparseGraph g = random_connected_graph(rng, 12);
  const Eigen::MatrixXd L = dense_laplacian(g);
  Eigen::MatrixXd An = Eigen::MatrixXd::Identity(12, 12) - L;  // D^{-1/2} A D^{-1/2}
  for (const Edge& e : g.edges()) {
    const double w = e.w / std::sqrt(g.degree(e.i) * g.degree(e.j));
    EXPECT_NEAR(An(static_cast<int>(e.i), static_cast<int>(e.j)), w, 1e-15);
  }
}

TEST(SpectralFilter, ConstantPolynomialScales) {
  Rng rng(1);
  const SparseGraph g = random_connected_graph(rng, 10);
  const NormalizedLaplacian lap(g);
  std::vector<double> x(10);
  for (auto& v : x) v = rng.uniform(-1, 1);
  const auto y = dense_spectral_filter(lap, {2.5}, x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], 2.5 * x[i], 1e-12);
}

TEST(SpectralFilter, LinearTermIsScaledLaplacian) {
  // theta = [0, 1] on the two-vertex unit edge: filter is Ls itself.
  const SparseGraph k2 = build_graph(2, {{0, 1, 1.0}});
  const NormalizedLaplacian lap(k2);
  const auto y = dense_spectral_filter(lap, {0.0, 1.0}, {1.0, 0.0}, 2.0);
  EXPECT_NEAR(y[0], 0.0, 1e-12);
  EXPECT_NEAR(y[1], -1.0, 1e-12);
}

TEST(SpectralFilter, DenseMatchesRecurrence) {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 8 + rng.uniform_below(17);
    const SparseGraph g = random_connected_graph(rng, n);
    const NormalizedLaplacian lap(g);
    const double lm = lap.lambda_max();
    std::vector<double> theta(3), x(n);
    for (auto& t : theta) t = rng.uniform(-1, 1);
    for (auto& v : x) v = rng.uniform(-1, 1);
    const auto a = dense_spectral_filter(lap, theta, x, lm);
    const auto b = chebyshev_spectral_filter(lap, theta, x, lm);
    const double scale = std::max(max_abs(a), 1e-12);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(a[i], b[i], 1e-8 * scale);
    }
  }
}

TEST(SpectralFilter, OneHotCoefficientIsChebTerm) {
  // theta = e_k picks out T_k(Ls) x; compare against an explicit recurrence.
  Rng rng(3);
  const SparseGraph g = random_connected_graph(rng, 12);
  const NormalizedLaplacian lap(g);
  const double lm = lap.lambda_max();
  const CsrMatrix ls = scale_laplacian(lap, lm);
  std::vector<double> x(12);
  for (auto& v : x) v = rng.uniform(-1, 1);

  std::vector<double> tkm1 = x;
  std::vector<double> tk = ls.multiply(x);
  for (std::size_t k = 0; k < 5; ++k) {
    std::vector<double> theta(k + 1, 0.0);
    theta[k] = 1.0;
    const auto filtered = dense_spectral_filter(lap, theta, x, lm);
    const std::vector<double>& expect = (k == 0) ? tkm1 : tk;
    const double scale = std::max(max_abs(expect), 1e-12);
    for (std::size_t i = 0; i < x.size(); ++i) {
      EXPECT_NEAR(filtered[i], expect[i], 1e-8 * scale) << "k=" << k;
    }
    if (k >= 1) {
      std::vector<double> tnext = ls.multiply(tk);
      for (std::size_t i = 0; i < tnext.size(); ++i) tnext[i] = 2.0 * tnext[i] - tkm1[i];
      tkm1.swap(tk);
      tk.swap(tnext);
    }
  }
}

TEST(SpectralFilter, DensePathRejectsLargeGraphs) {
  Rng rng(4);
  const SparseGraph g = random_connected_graph(rng, 20);
  const NormalizedLaplacian lap(g);
  std::vector<double> x(20, 1.0);
  EXPECT_THROW(dense_spectral_filter(lap, {1.0}, x, 2.0, /*max_vertices=*/16),
               std::invalid_argument);
}

TEST(ChebEval, MatchesTrigonometricIdentity) {
  // On [-1, 1], T_k(cos t) = cos(k t). Check a full coefficient vector.
  const std::vector<double> theta = {0.3, -1.2, 0.7, 2.0};
  for (double t = 0.1; t < 3.0; t += 0.37) {
    const double x = std::cos(t);
    double expect = 0.0;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      expect += theta[k] * std::cos(static_cast<double>(k) * t);
    }
    EXPECT_NEAR(cheb_eval(theta, x), expect, 1e-12);
  }
}

TEST(Fiedler, TwoVertexEdge) {
  const SparseGraph k2 = build_graph(2, {{0, 1, 1.0}});
  const auto v = fiedler_vector(k2);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_NEAR(v[0], 1.0 / std::sqrt(2.0), 1e-8);
  EXPECT_NEAR(v[1], -1.0 / std::sqrt(2.0), 1e-8);
}

TEST(Fiedler, PathIsMonotone) {
  const SparseGraph path = build_graph(4, {{0, 1, 1}, {1, 2, 1}, {2, 3, 1}});
  const auto v = fiedler_vector(path);
  ASSERT_EQ(v.size(), 4u);
  // Sign convention puts the first entry positive; entries decrease along the path.
  EXPECT_GT(v[0], 0.0);
  for (std::size_t i = 0; i + 1 < v.size(); ++i) EXPECT_GT(v[i], v[i + 1]);
}

TEST(Fiedler, DisconnectedRejected) {
  const SparseGraph two = build_graph(4, {{0, 1, 1}, {2, 3, 1}});
  EXPECT_THROW(fiedler_vector(two), std::invalid_argument);
  EXPECT_THROW(fiedler_vector(build_graph(1, {})), std::invalid_argument);
}

TEST(Fiedler, EigenpairResidualAndOrthogonality) {
  Rng rng(55);
  for (int trial = 0; trial < 15; ++trial) {
    const std::size_t n = 5 + rng.uniform_below(40);
    const SparseGraph g = random_connected_graph(rng, n);
    const auto v = fiedler_vector(g);

    const Eigen::MatrixXd L = dense_laplacian(g);
    Eigen::Map<const Eigen::VectorXd> vv(v.data(), static_cast<Eigen::Index>(n));
    EXPECT_NEAR(vv.norm(), 1.0, 1e-9);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(L);
    const double lambda2 = solver.eigenvalues()[1];
    EXPECT_LT((L * vv - lambda2 * vv).norm(), 1e-6);

    // Orthogonal to the lambda = 0 eigenvector D^{1/2} 1.
    Eigen::VectorXd d_half(n);
    for (std::size_t i = 0; i < n; ++i) d_half[static_cast<Eigen::Index>(i)] = std::sqrt(g.degree(i));
    d_half.normalize();
    EXPECT_LT(std::abs(vv.dot(d_half)), 1e-6);
  }
}

TEST(Fiedler, LargeGraphMatchesDense) {
  // Exercises the iterative path (the dense fallback is capped at 1024).
  // Two well-connected clusters joined by one weak edge give an isolated
  // second eigenvalue, so power iteration has a healthy gap to work with.
  Rng rng(66);
  const std::size_t half = 600;
  std::vector<Edge> edges;
  for (std::size_t block = 0; block < 2; ++block) {
    const std::size_t off = block * half;
    const SparseGraph cluster = random_connected_graph(rng, half, 0.01);
    for (const Edge& e : cluster.edges()) edges.push_back({e.i + off, e.j + off, e.w});
  }
  edges.push_back({0, half, 0.05});
  const std::size_t n = 2 * half;
  const SparseGraph g = build_graph(n, edges);
  const auto v = fiedler_vector(g);

  const Eigen::MatrixXd L = dense_laplacian(g);
  Eigen::Map<const Eigen::VectorXd> vv(v.data(), static_cast<Eigen::Index>(n));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(L);
  const double lambda2 = solver.eigenvalues()[1];
  EXPECT_LT((L * vv - lambda2 * vv).norm(), 1e-4);

  Eigen::VectorXd dense_v = solver.eigenvectors().col(1);
  EXPECT_GT(std::abs(vv.dot(dense_v)), 0.999);
}
