#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "meshgcn/cheb.hpp"
#include "meshgcn/core.hpp"
#include "meshgcn/hierarchy.hpp"
#include "meshgcn/laplacian.hpp"
#include "meshgcn/layers.hpp"
#include "meshgcn/rng.hpp"

namespace meshgcn {

enum class LambdaMaxMode { computed, fixed2 };
enum class Precision { f32, f64 };

struct ModelConfig {
  std::size_t kernels_per_conv = 16;
  std::size_t cheb_order = 3;
  std::size_t pool_size = 2;
  std::size_t n_blocks = 4;
  std::size_t fc_units = 128;
  std::size_t post_resblock_units = 128;
  bool bias_enabled = true;
  LambdaMaxMode lambda_max_mode = LambdaMaxMode::computed;
  Precision precision = Precision::f32;

  void validate() const {
    detail::require_arg(kernels_per_conv >= 1, "ModelConfig: kernels_per_conv must be >= 1");
    detail::require_arg(cheb_order >= 1, "ModelConfig: cheb_order must be >= 1");
    detail::require_arg(pool_size == 2,
                        "ModelConfig: pool_size must be 2 (hierarchy branching factor)");
    detail::require_arg(n_blocks >= 1, "ModelConfig: n_blocks must be >= 1");
    detail::require_arg(fc_units >= 1, "ModelConfig: fc_units must be >= 1");
    detail::require_arg(post_resblock_units == fc_units,
                        "ModelConfig: post_resblock_units must equal fc_units (the "
                        "post-ResBlock exists to match the FC width)");
  }
};

/// Scaled Laplacians for the levels the network touches, finest first:
/// entry i serves block i, entry n_blocks serves the post-ResBlock.
template <typename T>
struct LevelStack {
  std::vector<CsrMatrixT<T>> scaled;
  std::vector<std::size_t> sizes;

  template <typename U>
  LevelStack<U> cast() const {
    LevelStack<U> out;
    out.sizes = sizes;
    out.scaled.reserve(scaled.size());
    for (const auto& m : scaled) out.scaled.push_back(m.template cast<U>());
    return out;
  }
};

namespace detail {

inline CsrMatrix scaled_for(const SparseGraph& g, LambdaMaxMode mode) {
  NormalizedLaplacian lap(g);
  if (mode == LambdaMaxMode::fixed2) lap.set_lambda_max(2.0);
  return scale_laplacian(lap);
}

}  // namespace detail

inline LevelStack<double> build_level_stack(const MeshHierarchy& h, std::size_t n_blocks,
                                            LambdaMaxMode mode) {
  detail::require_arg(n_blocks <= h.finest(),
                      "build_level_stack: n_blocks exceeds hierarchy depth");
  LevelStack<double> stack;
  for (std::size_t i = 0; i <= n_blocks; ++i) {
    const auto& lv = h.levels[h.finest() - i];
    stack.scaled.push_back(detail::scaled_for(lv.graph, mode));
    stack.sizes.push_back(lv.centers.size());
  }
  return stack;
}

/// Multi-structure variant: per level, the structures' graphs are composed
/// block-diagonally (in the given order) and scaled as one operator. All
/// hierarchies must share the same depth so sibling pairs stay aligned.
inline LevelStack<double> build_level_stack(const std::vector<const MeshHierarchy*>& hs,
                                            std::size_t n_blocks, LambdaMaxMode mode) {
  detail::require_arg(!hs.empty(), "build_level_stack: no hierarchies");
  if (hs.size() == 1) return build_level_stack(*hs[0], n_blocks, mode);
  const std::size_t depth = hs[0]->finest();
  for (const auto* h : hs) {
    detail::require_arg(h->finest() == depth,
                        "build_level_stack: hierarchies must share depth for block "
                        "composition");
  }
  detail::require_arg(n_blocks <= depth, "build_level_stack: n_blocks exceeds hierarchy depth");
  LevelStack<double> stack;
  for (std::size_t i = 0; i <= n_blocks; ++i) {
    std::vector<SparseGraph> parts;
    std::size_t total = 0;
    for (const auto* h : hs) {
      const auto& g = h->levels[depth - i].graph;
      total += g.n_vertices();
      parts.push_back(g);
    }
    stack.scaled.push_back(detail::scaled_for(block_diagonalize(parts).graph, mode));
    stack.sizes.push_back(total);
  }
  return stack;
}

/// Pre-activation residual block: two BN -> ReLU -> ChebConv stages on the
/// main path, plus an order-1 convolution skip (a per-vertex channel map
/// without bias) whenever the channel count changes, identity otherwise.
template <typename T>
class ResBlock {
 public:
  ResBlock() = default;

  ResBlock(std::size_t f_in, std::size_t f_out, std::size_t order, bool with_bias)
      : bn1(f_in), bn2(f_out),
        conv1(order, f_in, f_out, with_bias), conv2(order, f_out, f_out, with_bias),
        f_in_(f_in), f_out_(f_out) {
    if (f_in != f_out) skip.emplace(1, f_in, f_out, false);
  }

  void init(Rng& rng) {
    conv1.init(rng);
    conv2.init(rng);
    if (skip) skip->init(rng);
  }

  std::vector<Mat<T>> forward(const CsrMatrixT<T>& ls, const std::vector<Mat<T>>& x,
                              bool training) {
    std::vector<Mat<T>> h = bn1.forward(x, training);
    h = relu1.forward(h);
    h = conv1.forward(ls, h);
    h = bn2.forward(h, training);
    h = relu2.forward(h);
    h = conv2.forward(ls, h);
    if (skip) {
      std::vector<Mat<T>> s = skip->forward(ls, x);
      for (std::size_t i = 0; i < h.size(); ++i) h[i] += s[i];
    } else {
      for (std::size_t i = 0; i < h.size(); ++i) h[i] += x[i];
    }
    return h;
  }

  std::vector<Mat<T>> backward(const std::vector<Mat<T>>& d_out) {
    std::vector<Mat<T>> d = conv2.backward(d_out);
    d = relu2.backward(d);
    d = bn2.backward(d);
    d = conv1.backward(d);
    d = relu1.backward(d);
    d = bn1.backward(d);
    if (skip) {
      std::vector<Mat<T>> ds = skip->backward(d_out);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += ds[i];
    } else {
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += d_out[i];
    }
    return d;
  }

  void zero_grad() {
    bn1.zero_grad();
    bn2.zero_grad();
    conv1.zero_grad();
    conv2.zero_grad();
    if (skip) skip->zero_grad();
  }

  double kink_margin() const { return std::min(relu1.kink_margin(), relu2.kink_margin()); }

  void collect(const std::string& prefix, std::vector<TensorRef<T>>& refs) {
    bn1.collect(prefix + ".bn1", refs);
    conv1.collect(prefix + ".conv1", refs);
    bn2.collect(prefix + ".bn2", refs);
    conv2.collect(prefix + ".conv2", refs);
    if (skip) skip->collect(prefix + ".skip", refs);
  }

  void collect_state(const std::string& prefix, std::vector<TensorRef<T>>& refs) {
    refs.push_back({prefix + ".bn1.running_mean", &bn1.running_mean, nullptr});
    refs.push_back({prefix + ".bn1.running_var", &bn1.running_var, nullptr});
    refs.push_back({prefix + ".bn2.running_mean", &bn2.running_mean, nullptr});
    refs.push_back({prefix + ".bn2.running_var", &bn2.running_var, nullptr});
  }

  BatchNorm<T> bn1, bn2;
  ReLU<T> relu1, relu2;
  ChebConv<T> conv1, conv2;
  std::optional<ChebConv<T>> skip;

 private:
  std::size_t f_in_ = 0, f_out_ = 0;
};

/// The full classifier: n_blocks alternating (ResBlock, max-pool) stages,
/// a post-ResBlock widening to fc_units channels, then flatten and one
/// fully connected layer to two logits.
template <typename T>
class ResGcnModel {
 public:
  using value_type = T;

  ResGcnModel(const ModelConfig& cfg, LevelStack<T> stack, std::size_t input_features)
      : cfg_(cfg), stack_(std::move(stack)), f_in_(input_features) {
    cfg_.validate();
    detail::require_arg(f_in_ >= 1, "ResGcnModel: need at least one input feature");
    detail::require_arg(stack_.scaled.size() == cfg_.n_blocks + 1,
                        "ResGcnModel: level stack must cover n_blocks + 1 levels");
    for (std::size_t i = 0; i < cfg_.n_blocks; ++i) {
      detail::require_arg(stack_.sizes[i] == 2 * stack_.sizes[i + 1],
                          "ResGcnModel: consecutive levels must halve the vertex count");
    }
    std::size_t f = f_in_;
    for (std::size_t i = 0; i < cfg_.n_blocks; ++i) {
      blocks_.emplace_back(f, cfg_.kernels_per_conv, cfg_.cheb_order, cfg_.bias_enabled);
      f = cfg_.kernels_per_conv;
    }
    pools_.resize(cfg_.n_blocks);
    post_ = ResBlock<T>(f, cfg_.fc_units, cfg_.cheb_order, cfg_.bias_enabled);
    fc_ = Dense<T>(stack_.sizes[cfg_.n_blocks] * cfg_.fc_units, 2);

    for (std::size_t i = 0; i < cfg_.n_blocks; ++i) {
      blocks_[i].collect("block" + std::to_string(i), refs_);
      blocks_[i].collect_state("block" + std::to_string(i), state_refs_);
    }
    post_.collect("post", refs_);
    post_.collect_state("post", state_refs_);
    fc_.collect("fc", refs_);
  }

  // The tensor registry points into this object's layers.
  ResGcnModel(const ResGcnModel&) = delete;
  ResGcnModel& operator=(const ResGcnModel&) = delete;

  void init(Rng& rng) {
    for (auto& b : blocks_) b.init(rng);
    post_.init(rng);
    fc_.init(rng);
  }

  std::vector<Mat<T>> forward(const std::vector<Mat<T>>& x, bool training) {
    for (const auto& xs : x) {
      detail::require_arg(xs.rows() == stack_.sizes[0] && xs.cols() == f_in_,
                          "ResGcnModel::forward: input shape mismatch");
    }
    std::vector<Mat<T>> cur = x;
    for (std::size_t i = 0; i < cfg_.n_blocks; ++i) {
      cur = blocks_[i].forward(stack_.scaled[i], cur, training);
      cur = pools_[i].forward(cur);
    }
    cur = post_.forward(stack_.scaled[cfg_.n_blocks], cur, training);
    post_out_ = cur;

    std::vector<Mat<T>> flat;
    flat.reserve(cur.size());
    for (const auto& m : cur) {
      Mat<T> row(1, m.size());
      row.data() = m.data();
      flat.push_back(std::move(row));
    }
    return fc_.forward(flat);
  }

  std::vector<Mat<T>> backward(const std::vector<Mat<T>>& d_logits) {
    std::vector<Mat<T>> d = fc_.backward(d_logits);
    const std::size_t rows = stack_.sizes[cfg_.n_blocks];
    for (auto& m : d) {
      Mat<T> shaped(rows, cfg_.fc_units);
      shaped.data() = m.data();
      m = std::move(shaped);
    }
    d = post_.backward(d);
    for (std::size_t i = cfg_.n_blocks; i-- > 0;) {
      d = pools_[i].backward(d);
      d = blocks_[i].backward(d);
    }
    return d;
  }

  void zero_grad() {
    for (auto& b : blocks_) b.zero_grad();
    post_.zero_grad();
    fc_.zero_grad();
  }

  std::vector<TensorRef<T>>& tensors() { return refs_; }
  std::vector<TensorRef<T>>& state_tensors() { return state_refs_; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& r : refs_) n += r.value->size();
    return n;
  }

  /// Feature maps of the last convolutional stage (post-ResBlock outputs),
  /// one per sample of the latest forward pass.
  const std::vector<Mat<T>>& post_activation() const { return post_out_; }

  /// Gradient of the class-c logit with respect to the post-ResBlock
  /// output: the logit is linear in it (flatten + FC), so the gradient is
  /// the reshaped FC weight column, identical for every sample.
  Mat<T> post_activation_gradient(int class_id) const {
    detail::require_arg(class_id == 0 || class_id == 1,
                        "post_activation_gradient: class must be 0 or 1");
    const std::size_t rows = stack_.sizes[cfg_.n_blocks];
    Mat<T> g(rows, cfg_.fc_units);
    for (std::size_t v = 0; v < rows; ++v) {
      for (std::size_t k = 0; k < cfg_.fc_units; ++k) {
        g(v, k) = fc_.weight(v * cfg_.fc_units + k, static_cast<std::size_t>(class_id));
      }
    }
    return g;
  }

  /// Distance of the last forward pass to the nearest ReLU kink or
  /// max-pool tie, across every nonlinearity in the network.
  double kink_margin() const {
    double m = post_.kink_margin();
    for (const auto& b : blocks_) m = std::min(m, b.kink_margin());
    for (const auto& p : pools_) m = std::min(m, p.kink_margin());
    return m;
  }

  std::size_t cam_level_size() const { return stack_.sizes[cfg_.n_blocks]; }
  std::size_t input_size() const { return stack_.sizes[0]; }
  std::size_t input_features() const { return f_in_; }
  const ModelConfig& config() const { return cfg_; }
  const LevelStack<T>& levels() const { return stack_; }

 private:
  ModelConfig cfg_;
  LevelStack<T> stack_;
  std::size_t f_in_ = 0;
  std::vector<ResBlock<T>> blocks_;
  std::vector<GraphMaxPool<T>> pools_;
  ResBlock<T> post_;
  Dense<T> fc_;
  std::vector<Mat<T>> post_out_;
  std::vector<TensorRef<T>> refs_;
  std::vector<TensorRef<T>> state_refs_;
};

}  // namespace meshgcn
