#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "meshgcn/core.hpp"
#include "meshgcn/graph.hpp"
#include "meshgcn/network.hpp"
#include "meshgcn/rng.hpp"

namespace meshgcn {

struct FdReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t n_coordinates = 0;

  bool pass(double tol) const { return max_rel_error < tol; }
};

/// Central-difference comparison against analytic gradients. Callers run
/// their forward/backward first so every grad buffer holds the analytic
/// gradient; `loss` must recompute the scalar objective from the current
/// tensor values. Near-zero coordinates are judged against a floor of
/// 1e-3 times the largest gradient magnitude across all checked tensors,
/// so parameters whose true gradient vanishes (a convolution bias followed
/// by batch normalization, for instance) compare FD noise against the
/// problem's gradient scale instead of against itself.
template <typename T, typename LossFn>
FdReport finite_difference_check(const std::vector<TensorRef<T>>& tensors, LossFn&& loss,
                                 double h = 1e-4) {
  detail::require_arg(h > 0.0, "finite_difference_check: step must be positive");
  FdReport report;
  std::vector<std::vector<double>> numeric_all;
  numeric_all.reserve(tensors.size());
  double scale = 1e-8;
  for (const auto& r : tensors) {
    const std::vector<T>& analytic = r.grad->data();
    std::vector<double> numeric(analytic.size());
    for (std::size_t k = 0; k < analytic.size(); ++k) {
      const T saved = r.value->data()[k];
      r.value->data()[k] = static_cast<T>(static_cast<double>(saved) + h);
      const double plus = loss();
      r.value->data()[k] = static_cast<T>(static_cast<double>(saved) - h);
      const double minus = loss();
      r.value->data()[k] = saved;
      numeric[k] = (plus - minus) / (2.0 * h);
      scale = std::max({scale, std::abs(static_cast<double>(analytic[k])),
                        std::abs(numeric[k])});
    }
    numeric_all.push_back(std::move(numeric));
  }
  const double floor = 1e-3 * scale;
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    const std::vector<T>& analytic = tensors[t].grad->data();
    const std::vector<double>& numeric = numeric_all[t];
    for (std::size_t k = 0; k < analytic.size(); ++k) {
      const double a = static_cast<double>(analytic[k]);
      const double n = numeric[k];
      const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
      ++report.n_coordinates;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_tensor = tensors[t].name;
        report.worst_index = k;
        report.worst_analytic = a;
        report.worst_numeric = n;
      }
    }
  }
  return report;
}

/// Random connected graph: a random spanning tree plus independently
/// sampled extra edges, weights uniform in [w_lo, w_hi].
inline SparseGraph random_connected_graph(Rng& rng, std::size_t n, double extra_edge_prob = 0.2,
                                          double w_lo = 0.5, double w_hi = 1.5) {
  detail::require_arg(n >= 2, "random_connected_graph: need at least 2 vertices");
  std::vector<Edge> edges;
  std::set<std::pair<std::size_t, std::size_t>> present;
  for (std::size_t v = 1; v < n; ++v) {
    const std::size_t u = rng.uniform_below(v);
    edges.push_back({u, v, rng.uniform(w_lo, w_hi)});
    present.emplace(u, v);
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (present.count({i, j})) continue;
      if (rng.uniform() < extra_edge_prob) edges.push_back({i, j, rng.uniform(w_lo, w_hi)});
    }
  }
  return build_graph(n, edges);
}

/// Level stack over random connected graphs with halving sizes. The graphs
/// need not form a real partition tree; gradient checks only require
/// consistent shapes and well-conditioned operators.
inline LevelStack<double> random_level_stack(Rng& rng, std::size_t finest_size,
                                             std::size_t n_blocks) {
  detail::require_arg(finest_size >= (std::size_t{2} << n_blocks),
                      "random_level_stack: finest size too small for n_blocks pools");
  detail::require_arg((finest_size & (finest_size - 1)) == 0,
                      "random_level_stack: finest size must be a power of two");
  LevelStack<double> stack;
  std::size_t size = finest_size;
  for (std::size_t i = 0; i <= n_blocks; ++i) {
    const SparseGraph g = random_connected_graph(rng, size);
    NormalizedLaplacian lap(g);
    stack.scaled.push_back(scale_laplacian(lap));
    stack.sizes.push_back(size);
    size /= 2;
  }
  return stack;
}

template <typename T>
std::vector<Mat<T>> random_feature_batch(Rng& rng, std::size_t batch, std::size_t rows,
                                         std::size_t cols, double lo = -1.0, double hi = 1.0) {
  std::vector<Mat<T>> xs;
  xs.reserve(batch);
  for (std::size_t s = 0; s < batch; ++s) {
    Mat<T> x(rows, cols);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = static_cast<T>(rng.uniform(lo, hi));
    xs.push_back(std::move(x));
  }
  return xs;
}

namespace detail {

inline double weighted_sum(const std::vector<Mat<double>>& ys,
                           const std::vector<Mat<double>>& w) {
  double acc = 0.0;
  for (std::size_t s = 0; s < ys.size(); ++s) {
    for (std::size_t i = 0; i < ys[s].size(); ++i) acc += ys[s].data()[i] * w[s].data()[i];
  }
  return acc;
}

inline std::vector<Mat<double>> weights_like(const std::vector<Mat<double>>& ys, Rng& rng) {
  std::vector<Mat<double>> w;
  w.reserve(ys.size());
  for (const auto& y : ys) {
    Mat<double> m(y.rows(), y.cols());
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
    w.push_back(std::move(m));
  }
  return w;
}

inline void append_input_refs(std::vector<Mat<double>>& xs, std::vector<Mat<double>>& grads,
                              std::vector<TensorRef<double>>& refs) {
  for (std::size_t s = 0; s < xs.size(); ++s) {
    refs.push_back({"input" + std::to_string(s), &xs[s], &grads[s]});
  }
}

}  // namespace detail

/// One entry of the standard gradient validation suite; `layer_wise` rows
/// are judged at the layer tolerance, the full-model row at the looser
/// end-to-end tolerance.
struct GradSuiteRow {
  std::string name;
  bool layer_wise = true;
  FdReport report;
};

/// Finite-difference validation of every differentiable building block plus
/// the composed model loss, in 64-bit. Piecewise-linear layers redraw their
/// inputs until no coordinate sits within 1e-3 of a kink or tie, keeping
/// central differences on a single linear piece.
inline std::vector<GradSuiteRow> standard_gradient_suite(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradSuiteRow> rows;

  {
    const SparseGraph g = random_connected_graph(rng, 10, 0.3);
    const CsrMatrix ls = scale_laplacian(normalized_laplacian(g));
    ChebConv<double> conv(3, 2, 3, true);
    conv.init(rng);
    auto xs = random_feature_batch<double>(rng, 2, 10, 2);
    conv.zero_grad();
    const auto w = detail::weights_like(conv.forward(ls, xs), rng);
    auto gxs = conv.backward(w);
    std::vector<TensorRef<double>> refs;
    conv.collect("chebconv", refs);
    detail::append_input_refs(xs, gxs, refs);
    rows.push_back({"chebconv", true,
                    finite_difference_check(
                        refs, [&] { return detail::weighted_sum(conv.forward(ls, xs), w); })});
  }

  {
    BatchNorm<double> bn(3);
    auto xs = random_feature_batch<double>(rng, 3, 5, 3, -2.0, 2.0);
    bn.zero_grad();
    const auto w = detail::weights_like(bn.forward(xs, true), rng);
    auto gxs = bn.backward(w);
    std::vector<TensorRef<double>> refs;
    bn.collect("batchnorm", refs);
    detail::append_input_refs(xs, gxs, refs);
    rows.push_back({"batchnorm", true,
                    finite_difference_check(
                        refs, [&] { return detail::weighted_sum(bn.forward(xs, true), w); })});
  }

  {
    ReLU<double> relu;
    for (int attempt = 0;; ++attempt) {
      detail::require_state(attempt < 100, "standard_gradient_suite: no off-kink relu input");
      auto xs = random_feature_batch<double>(rng, 2, 6, 3);
      const auto ys = relu.forward(xs);
      if (relu.kink_margin() <= 1e-3) continue;
      const auto w = detail::weights_like(ys, rng);
      auto gxs = relu.backward(w);
      std::vector<TensorRef<double>> refs;
      detail::append_input_refs(xs, gxs, refs);
      rows.push_back({"relu", true,
                      finite_difference_check(
                          refs, [&] { return detail::weighted_sum(relu.forward(xs), w); })});
      break;
    }
  }

  {
    GraphMaxPool<double> pool;
    for (int attempt = 0;; ++attempt) {
      detail::require_state(attempt < 100, "standard_gradient_suite: no off-tie pool input");
      auto xs = random_feature_batch<double>(rng, 2, 8, 3);
      const auto ys = pool.forward(xs);
      if (pool.kink_margin() <= 1e-3) continue;
      const auto w = detail::weights_like(ys, rng);
      auto gxs = pool.backward(w);
      std::vector<TensorRef<double>> refs;
      detail::append_input_refs(xs, gxs, refs);
      rows.push_back({"maxpool", true,
                      finite_difference_check(
                          refs, [&] { return detail::weighted_sum(pool.forward(xs), w); })});
      break;
    }
  }

  {
    Dense<double> fc(6, 4);
    fc.init(rng);
    auto xs = random_feature_batch<double>(rng, 3, 1, 6);
    fc.zero_grad();
    const auto w = detail::weights_like(fc.forward(xs), rng);
    auto gxs = fc.backward(w);
    std::vector<TensorRef<double>> refs;
    fc.collect("dense", refs);
    detail::append_input_refs(xs, gxs, refs);
    rows.push_back({"dense", true,
                    finite_difference_check(
                        refs, [&] { return detail::weighted_sum(fc.forward(xs), w); })});
  }

  const auto resblock_row = [&rng](const std::string& name, std::size_t f_in,
                                   std::size_t f_out) {
    const SparseGraph g = random_connected_graph(rng, 8, 0.3);
    const CsrMatrix ls = scale_laplacian(normalized_laplacian(g));
    for (int attempt = 0;; ++attempt) {
      detail::require_state(attempt < 100,
                            "standard_gradient_suite: no off-kink resblock input");
      ResBlock<double> block(f_in, f_out, 3, true);
      block.init(rng);
      auto xs = random_feature_batch<double>(rng, 3, 8, f_in);
      block.zero_grad();
      const auto ys = block.forward(ls, xs, true);
      if (std::min(block.relu1.kink_margin(), block.relu2.kink_margin()) <= 1e-3) continue;
      const auto w = detail::weights_like(ys, rng);
      auto gxs = block.backward(w);
      std::vector<TensorRef<double>> refs;
      block.collect(name, refs);
      detail::append_input_refs(xs, gxs, refs);
      return GradSuiteRow{name, true,
                          finite_difference_check(refs, [&] {
                            return detail::weighted_sum(block.forward(ls, xs, true), w);
                          })};
    }
  };
  rows.push_back(resblock_row("resblock-projection", 2, 4));
  rows.push_back(resblock_row("resblock-identity", 3, 3));

  {
    ModelConfig cfg;
    cfg.kernels_per_conv = 4;
    cfg.cheb_order = 2;
    cfg.n_blocks = 2;
    cfg.fc_units = 4;
    cfg.post_resblock_units = 4;
    cfg.precision = Precision::f64;
    const std::vector<int> labels = {0, 1, 0, 1};
    for (int attempt = 0;; ++attempt) {
      detail::require_state(attempt < 100, "standard_gradient_suite: no off-kink model input");
      ResGcnModel<double> model(cfg, random_level_stack(rng, 8, cfg.n_blocks), 3);
      Rng init(rng.uniform_below(std::uint64_t{1} << 30));
      model.init(init);
      auto xs = random_feature_batch<double>(rng, 4, 8, 3);
      model.zero_grad();
      const HeadResult head = softmax_bce_head(model.forward(xs, true), labels);
      if (model.kink_margin() <= 1e-3 || head.clamp_margin <= 1e-3) continue;
      auto gxs = model.backward(head.d_logits);
      std::vector<TensorRef<double>> refs = model.tensors();
      detail::append_input_refs(xs, gxs, refs);
      rows.push_back({"full-model", false,
                      finite_difference_check(refs, [&] {
                        return softmax_bce_head(model.forward(xs, true), labels).loss;
                      })});
      break;
    }
  }

  return rows;
}

}  // namespace meshgcn
