#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "meshgcn/core.hpp"
#include "meshgcn/layers.hpp"
#include "meshgcn/rng.hpp"

namespace meshgcn {

/// Parameter count of a uniform-width MLP: input_dim -> width x depth -> 2.
inline std::size_t mlp_param_count(std::size_t input_dim, std::size_t width,
                                   std::size_t hidden_depth) {
  detail::require_arg(hidden_depth >= 1 && width >= 1 && input_dim >= 1,
                      "mlp_param_count: dimensions must be >= 1");
  std::size_t n = (input_dim + 1) * width;
  n += (hidden_depth - 1) * (width + 1) * width;
  n += (width + 1) * 2;
  return n;
}

struct MlpWidthPlan {
  std::size_t width = 1;
  std::size_t param_count = 0;
  std::size_t target = 0;
  bool within_5pct = false;
};

/// Picks the uniform hidden width whose total parameter count lands closest
/// to the target. The count is monotone in the width, so the search walks
/// up to the first width at or above the target and compares it with its
/// predecessor. Falls outside 5% only when no integer width can reach it.
inline MlpWidthPlan solve_mlp_width(std::size_t input_dim, std::size_t hidden_depth,
                                    std::size_t target_params) {
  detail::require_arg(target_params >= 1, "solve_mlp_width: target must be >= 1");
  MlpWidthPlan plan;
  plan.target = target_params;
  std::size_t w = 1;
  while (mlp_param_count(input_dim, w, hidden_depth) < target_params) ++w;
  plan.width = w;
  plan.param_count = mlp_param_count(input_dim, w, hidden_depth);
  if (w > 1) {
    const std::size_t below = mlp_param_count(input_dim, w - 1, hidden_depth);
    const std::size_t over_gap = plan.param_count - target_params;
    const std::size_t under_gap = target_params - below;
    if (under_gap <= over_gap) {
      plan.width = w - 1;
      plan.param_count = below;
    }
  }
  const double rel = std::abs(static_cast<double>(plan.param_count) -
                              static_cast<double>(target_params)) /
                     static_cast<double>(target_params);
  plan.within_5pct = rel <= 0.05;
  return plan;
}

/// Fully connected baseline with the same training interface as the graph
/// model: inputs arrive as vertex-by-feature matrices and are flattened
/// into one row per sample.
template <typename T>
class MlpModel {
 public:
  using value_type = T;

  MlpModel(std::size_t input_rows, std::size_t input_cols, std::size_t hidden_depth,
           std::size_t width)
      : input_rows_(input_rows), input_cols_(input_cols) {
    detail::require_arg(input_rows >= 1 && input_cols >= 1,
                        "MlpModel: input dimensions must be >= 1");
    detail::require_arg(hidden_depth >= 1, "MlpModel: need at least one hidden layer");
    const std::size_t d = input_rows * input_cols;
    layers_.emplace_back(d, width);
    for (std::size_t l = 1; l < hidden_depth; ++l) layers_.emplace_back(width, width);
    layers_.emplace_back(width, 2);
    relus_.resize(hidden_depth);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      layers_[l].collect("layer" + std::to_string(l), refs_);
    }
  }

  MlpModel(const MlpModel&) = delete;
  MlpModel& operator=(const MlpModel&) = delete;

  void init(Rng& rng) {
    for (auto& l : layers_) l.init(rng);
  }

  std::vector<Mat<T>> forward(const std::vector<Mat<T>>& x, bool /*training*/) {
    std::vector<Mat<T>> cur;
    cur.reserve(x.size());
    for (const auto& xs : x) {
      detail::require_arg(xs.rows() == input_rows_ && xs.cols() == input_cols_,
                          "MlpModel::forward: input shape mismatch");
      Mat<T> row(1, xs.size());
      row.data() = xs.data();
      cur.push_back(std::move(row));
    }
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
      cur = layers_[l].forward(cur);
      cur = relus_[l].forward(cur);
    }
    return layers_.back().forward(cur);
  }

  std::vector<Mat<T>> backward(const std::vector<Mat<T>>& d_logits) {
    std::vector<Mat<T>> d = layers_.back().backward(d_logits);
    for (std::size_t l = layers_.size() - 1; l-- > 0;) {
      d = relus_[l].backward(d);
      d = layers_[l].backward(d);
    }
    for (auto& m : d) {
      Mat<T> shaped(input_rows_, input_cols_);
      shaped.data() = m.data();
      m = std::move(shaped);
    }
    return d;
  }

  void zero_grad() {
    for (auto& l : layers_) l.zero_grad();
  }

  std::vector<TensorRef<T>>& tensors() { return refs_; }
  std::vector<TensorRef<T>>& state_tensors() { return state_refs_; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& r : refs_) n += r.value->size();
    return n;
  }

 private:
  std::size_t input_rows_;
  std::size_t input_cols_;
  std::vector<Dense<T>> layers_;
  std::vector<ReLU<T>> relus_;
  std::vector<TensorRef<T>> refs_;
  std::vector<TensorRef<T>> state_refs_;
};

}  // namespace meshgcn
