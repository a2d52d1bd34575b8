#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "meshgcn/core.hpp"
#include "meshgcn/rng.hpp"

namespace meshgcn {

/// Batch normalization over channels, with one mean/variance per channel
/// computed jointly across samples and vertices. Running statistics follow
/// the biased batch estimates with momentum 0.9.
template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;

  explicit BatchNorm(std::size_t channels)
      : gamma(1, channels, T(1)), dgamma(1, channels),
        beta(1, channels), dbeta(1, channels),
        running_mean(1, channels, T(0)), running_var(1, channels, T(1)),
        channels_(channels) {}

  std::size_t channels() const { return channels_; }

  std::vector<Mat<T>> forward(const std::vector<Mat<T>>& batch, bool training) {
    detail::require_arg(!batch.empty(), "BatchNorm::forward: empty batch");
    for (const auto& x : batch) {
      detail::require_arg(x.cols() == channels_, "BatchNorm::forward: channel mismatch");
    }
    training_ = training;
    std::vector<Mat<T>> out;
    out.reserve(batch.size());
    if (!training) {
      inv_std_.assign(channels_, 0.0);
      for (std::size_t c = 0; c < channels_; ++c) {
        inv_std_[c] = 1.0 / std::sqrt(static_cast<double>(running_var(0, c)) + kEps);
      }
      for (const auto& x : batch) {
        Mat<T> y(x.rows(), channels_);
        for (std::size_t n = 0; n < x.rows(); ++n) {
          for (std::size_t c = 0; c < channels_; ++c) {
            const double xhat =
                (static_cast<double>(x(n, c)) - static_cast<double>(running_mean(0, c))) *
                inv_std_[c];
            y(n, c) = static_cast<T>(static_cast<double>(gamma(0, c)) * xhat +
                                     static_cast<double>(beta(0, c)));
          }
        }
        out.push_back(std::move(y));
      }
      xhat_.clear();
      return out;
    }

    detail::require_arg(batch.size() >= 2, "BatchNorm::forward: training needs batch >= 2");
    std::size_t m = 0;
    std::vector<double> mean(channels_, 0.0), var(channels_, 0.0);
    for (const auto& x : batch) {
      m += x.rows();
      for (std::size_t n = 0; n < x.rows(); ++n) {
        for (std::size_t c = 0; c < channels_; ++c) mean[c] += static_cast<double>(x(n, c));
      }
    }
    for (auto& v : mean) v /= static_cast<double>(m);
    for (const auto& x : batch) {
      for (std::size_t n = 0; n < x.rows(); ++n) {
        for (std::size_t c = 0; c < channels_; ++c) {
          const double d = static_cast<double>(x(n, c)) - mean[c];
          var[c] += d * d;
        }
      }
    }
    for (auto& v : var) v /= static_cast<double>(m);

    m_ = m;
    inv_std_.assign(channels_, 0.0);
    for (std::size_t c = 0; c < channels_; ++c) inv_std_[c] = 1.0 / std::sqrt(var[c] + kEps);
    for (std::size_t c = 0; c < channels_; ++c) {
      running_mean(0, c) = static_cast<T>(kMomentum * static_cast<double>(running_mean(0, c)) +
                                          (1.0 - kMomentum) * mean[c]);
      running_var(0, c) = static_cast<T>(kMomentum * static_cast<double>(running_var(0, c)) +
                                         (1.0 - kMomentum) * var[c]);
    }

    xhat_.clear();
    xhat_.reserve(batch.size());
    for (const auto& x : batch) {
      Mat<T> xh(x.rows(), channels_);
      Mat<T> y(x.rows(), channels_);
      for (std::size_t n = 0; n < x.rows(); ++n) {
        for (std::size_t c = 0; c < channels_; ++c) {
          const double v = (static_cast<double>(x(n, c)) - mean[c]) * inv_std_[c];
          xh(n, c) = static_cast<T>(v);
          y(n, c) = static_cast<T>(static_cast<double>(gamma(0, c)) * v +
                                   static_cast<double>(beta(0, c)));
        }
      }
      xhat_.push_back(std::move(xh));
      out.push_back(std::move(y));
    }
    return out;
  }

  std::vector<Mat<T>> backward(const std::vector<Mat<T>>& d_out) {
    std::vector<Mat<T>> d_in;
    d_in.reserve(d_out.size());
    if (!training_) {
      for (const auto& dy : d_out) {
        Mat<T> dx(dy.rows(), channels_);
        for (std::size_t n = 0; n < dy.rows(); ++n) {
          for (std::size_t c = 0; c < channels_; ++c) {
            dx(n, c) = static_cast<T>(static_cast<double>(dy(n, c)) *
                                      static_cast<double>(gamma(0, c)) * inv_std_[c]);
          }
        }
        d_in.push_back(std::move(dx));
      }
      return d_in;
    }

    detail::require_state(xhat_.size() == d_out.size(), "BatchNorm::backward: no cached pass");
    std::vector<double> sum_dy(channels_, 0.0), sum_dy_xhat(channels_, 0.0);
    for (std::size_t s = 0; s < d_out.size(); ++s) {
      const auto& dy = d_out[s];
      const auto& xh = xhat_[s];
      for (std::size_t n = 0; n < dy.rows(); ++n) {
        for (std::size_t c = 0; c < channels_; ++c) {
          const double g = static_cast<double>(dy(n, c));
          sum_dy[c] += g;
          sum_dy_xhat[c] += g * static_cast<double>(xh(n, c));
        }
      }
    }
    for (std::size_t c = 0; c < channels_; ++c) {
      dbeta(0, c) += static_cast<T>(sum_dy[c]);
      dgamma(0, c) += static_cast<T>(sum_dy_xhat[c]);
    }
    const double inv_m = 1.0 / static_cast<double>(m_);
    for (std::size_t s = 0; s < d_out.size(); ++s) {
      const auto& dy = d_out[s];
      const auto& xh = xhat_[s];
      Mat<T> dx(dy.rows(), channels_);
      for (std::size_t n = 0; n < dy.rows(); ++n) {
        for (std::size_t c = 0; c < channels_; ++c) {
          const double term = static_cast<double>(dy(n, c)) - inv_m * sum_dy[c] -
                              static_cast<double>(xh(n, c)) * inv_m * sum_dy_xhat[c];
          dx(n, c) = static_cast<T>(static_cast<double>(gamma(0, c)) * inv_std_[c] * term);
        }
      }
      d_in.push_back(std::move(dx));
    }
    return d_in;
  }

  void zero_grad() {
    dgamma.fill(T(0));
    dbeta.fill(T(0));
  }

  void collect(const std::string& prefix, std::vector<TensorRef<T>>& refs) {
    refs.push_back({prefix + ".gamma", &gamma, &dgamma});
    refs.push_back({prefix + ".beta", &beta, &dbeta});
  }

  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.9;

  Mat<T> gamma, dgamma;
  Mat<T> beta, dbeta;
  Mat<T> running_mean, running_var;

 private:
  std::size_t channels_ = 0;
  bool training_ = false;
  std::size_t m_ = 0;
  std::vector<double> inv_std_;
  std::vector<Mat<T>> xhat_;
};

template <typename T>
class ReLU {
 public:
  std::vector<Mat<T>> forward(const std::vector<Mat<T>>& batch) {
    mask_.clear();
    mask_.reserve(batch.size());
    kink_margin_ = std::numeric_limits<double>::infinity();
    std::vector<Mat<T>> out;
    out.reserve(batch.size());
    for (const auto& x : batch) {
      Mat<T> y(x.rows(), x.cols());
      std::vector<char> m(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        const bool pos = x.data()[i] > T(0);
        m[i] = pos;
        y.data()[i] = pos ? x.data()[i] : T(0);
        kink_margin_ = std::min(kink_margin_, std::abs(static_cast<double>(x.data()[i])));
      }
      mask_.push_back(std::move(m));
      out.push_back(std::move(y));
    }
    return out;
  }

  /// Smallest |pre-activation| of the last forward pass: the distance to
  /// the nearest ReLU kink, used to reject finite-difference instances.
  double kink_margin() const { return kink_margin_; }

  std::vector<Mat<T>> backward(const std::vector<Mat<T>>& d_out) {
    detail::require_state(mask_.size() == d_out.size(), "ReLU::backward: no cached pass");
    std::vector<Mat<T>> d_in;
    d_in.reserve(d_out.size());
    for (std::size_t s = 0; s < d_out.size(); ++s) {
      Mat<T> dx(d_out[s].rows(), d_out[s].cols());
      for (std::size_t i = 0; i < dx.size(); ++i) {
        dx.data()[i] = mask_[s][i] ? d_out[s].data()[i] : T(0);
      }
      d_in.push_back(std::move(dx));
    }
    return d_in;
  }

 private:
  std::vector<std::vector<char>> mask_;
  double kink_margin_ = std::numeric_limits<double>::infinity();
};

/// Pools sibling vertex pairs (2p, 2p+1) to their parent p by elementwise
/// max. Gradient flows to the max child only; ties go to the lower index.
template <typename T>
class GraphMaxPool {
 public:
  std::vector<Mat<T>> forward(const std::vector<Mat<T>>& batch) {
    argmax_.clear();
    argmax_.reserve(batch.size());
    kink_margin_ = std::numeric_limits<double>::infinity();
    std::vector<Mat<T>> out;
    out.reserve(batch.size());
    for (const auto& x : batch) {
      detail::require_arg(x.rows() % 2 == 0, "GraphMaxPool::forward: odd vertex count");
      const std::size_t parents = x.rows() / 2;
      Mat<T> y(parents, x.cols());
      std::vector<char> arg(parents * x.cols());
      for (std::size_t p = 0; p < parents; ++p) {
        for (std::size_t c = 0; c < x.cols(); ++c) {
          const T a = x(2 * p, c);
          const T b = x(2 * p + 1, c);
          const bool take_b = b > a;
          arg[p * x.cols() + c] = take_b;
          y(p, c) = take_b ? b : a;
          kink_margin_ = std::min(kink_margin_, std::abs(static_cast<double>(a - b)));
        }
      }
      argmax_.push_back(std::move(arg));
      out.push_back(std::move(y));
    }
    return out;
  }

  /// Smallest sibling gap |a - b| of the last forward pass: the distance to
  /// the nearest max-pool tie.
  double kink_margin() const { return kink_margin_; }

  std::vector<Mat<T>> backward(const std::vector<Mat<T>>& d_out) {
    detail::require_state(argmax_.size() == d_out.size(), "GraphMaxPool::backward: no cached pass");
    std::vector<Mat<T>> d_in;
    d_in.reserve(d_out.size());
    for (std::size_t s = 0; s < d_out.size(); ++s) {
      const auto& dy = d_out[s];
      Mat<T> dx(dy.rows() * 2, dy.cols());
      for (std::size_t p = 0; p < dy.rows(); ++p) {
        for (std::size_t c = 0; c < dy.cols(); ++c) {
          const std::size_t child = 2 * p + (argmax_[s][p * dy.cols() + c] ? 1 : 0);
          dx(child, c) = dy(p, c);
        }
      }
      d_in.push_back(std::move(dx));
    }
    return d_in;
  }

 private:
  std::vector<std::vector<char>> argmax_;
  double kink_margin_ = std::numeric_limits<double>::infinity();
};

/// Fully connected layer on row vectors: y = x W + b, W shaped in x out.
template <typename T>
class Dense {
 public:
  Dense() = default;

  Dense(std::size_t d_in, std::size_t d_out)
      : weight(d_in, d_out), dweight(d_in, d_out),
        bias(1, d_out), dbias(1, d_out),
        d_in_(d_in), d_out_(d_out) {}

  void init(Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(d_in_ + d_out_));
    for (std::size_t i = 0; i < weight.size(); ++i) {
      weight.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
    }
    bias.fill(T(0));
  }

  std::size_t d_in() const { return d_in_; }
  std::size_t d_out() const { return d_out_; }

  std::vector<Mat<T>> forward(const std::vector<Mat<T>>& batch) {
    input_ = batch;
    std::vector<Mat<T>> out;
    out.reserve(batch.size());
    for (const auto& x : batch) {
      detail::require_arg(x.rows() == 1 && x.cols() == d_in_, "Dense::forward: expected 1 x d_in");
      Mat<T> y = matmul(x, weight);
      for (std::size_t j = 0; j < d_out_; ++j) y(0, j) += bias(0, j);
      out.push_back(std::move(y));
    }
    return out;
  }

  std::vector<Mat<T>> backward(const std::vector<Mat<T>>& d_out) {
    detail::require_state(input_.size() == d_out.size(), "Dense::backward: no cached pass");
    std::vector<Mat<T>> d_in;
    d_in.reserve(d_out.size());
    for (std::size_t s = 0; s < d_out.size(); ++s) {
      const auto& dy = d_out[s];
      const auto& x = input_[s];
      for (std::size_t i = 0; i < d_in_; ++i) {
        const T xi = x(0, i);
        for (std::size_t j = 0; j < d_out_; ++j) dweight(i, j) += xi * dy(0, j);
      }
      for (std::size_t j = 0; j < d_out_; ++j) dbias(0, j) += dy(0, j);
      Mat<T> dx(1, d_in_);
      for (std::size_t i = 0; i < d_in_; ++i) {
        T acc = T(0);
        for (std::size_t j = 0; j < d_out_; ++j) acc += dy(0, j) * weight(i, j);
        dx(0, i) = acc;
      }
      d_in.push_back(std::move(dx));
    }
    return d_in;
  }

  void zero_grad() {
    dweight.fill(T(0));
    dbias.fill(T(0));
  }

  void collect(const std::string& prefix, std::vector<TensorRef<T>>& refs) {
    refs.push_back({prefix + ".weight", &weight, &dweight});
    refs.push_back({prefix + ".bias", &bias, &dbias});
  }

  Mat<T> weight, dweight;
  Mat<T> bias, dbias;

 private:
  std::size_t d_in_ = 0, d_out_ = 0;
  std::vector<Mat<T>> input_;
};

constexpr double kBceClip = 1e-7;

/// Binary cross-entropy of predicted positive-class probabilities against
/// 0/1 labels, with predictions clamped to [clip, 1 - clip].
inline double bce_loss(const std::vector<double>& y_hat, const std::vector<int>& y,
                       double clip = kBceClip) {
  detail::require_arg(!y_hat.empty() && y_hat.size() == y.size(), "bce_loss: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    detail::require_arg(y[i] == 0 || y[i] == 1, "bce_loss: labels must be 0 or 1");
    const double p = std::min(std::max(y_hat[i], clip), 1.0 - clip);
    acc += y[i] == 1 ? std::log(p) : std::log(1.0 - p);
  }
  return -acc / static_cast<double>(y.size());
}

template <typename T>
struct HeadResult {
  double loss = 0.0;
  std::vector<double> prob_positive;   // softmax probability of class 1
  std::vector<Mat<T>> d_logits;        // gradient of the mean loss
  double clamp_margin = 0.0;           // min distance of any p1 to a clip boundary
};

/// Softmax over two logits followed by BCE on the positive-class
/// probability. Computed in 64-bit regardless of the working precision.
/// Where the clamp is active the gradient is zero, matching the clamped
/// loss's own subgradient.
template <typename T>
HeadResult<T> softmax_bce_head(const std::vector<Mat<T>>& logits, const std::vector<int>& labels,
                               double clip = kBceClip) {
  detail::require_arg(!logits.empty() && logits.size() == labels.size(),
                      "softmax_bce_head: size mismatch");
  HeadResult<T> out;
  out.prob_positive.reserve(logits.size());
  out.d_logits.reserve(logits.size());
  out.clamp_margin = std::numeric_limits<double>::infinity();
  const double inv_b = 1.0 / static_cast<double>(logits.size());
  for (std::size_t s = 0; s < logits.size(); ++s) {
    detail::require_arg(logits[s].rows() == 1 && logits[s].cols() == 2,
                        "softmax_bce_head: expected 1 x 2 logits");
    detail::require_arg(labels[s] == 0 || labels[s] == 1,
                        "softmax_bce_head: labels must be 0 or 1");
    const double z0 = static_cast<double>(logits[s](0, 0));
    const double z1 = static_cast<double>(logits[s](0, 1));
    const double zmax = std::max(z0, z1);
    const double e0 = std::exp(z0 - zmax);
    const double e1 = std::exp(z1 - zmax);
    const double p1 = e1 / (e0 + e1);
    out.prob_positive.push_back(p1);

    const bool clamped = p1 < clip || p1 > 1.0 - clip;
    const double p = std::min(std::max(p1, clip), 1.0 - clip);
    out.loss += labels[s] == 1 ? -std::log(p) : -std::log(1.0 - p);
    out.clamp_margin = std::min(out.clamp_margin,
                                std::min(std::abs(p1 - clip), std::abs(1.0 - clip - p1)));

    Mat<T> dz(1, 2);
    if (!clamped) {
      // d(BCE)/d(z1) through the softmax pair reduces to (p1 - y)/B.
      const double dz1 = inv_b * (p1 - static_cast<double>(labels[s]));
      dz(0, 0) = static_cast<T>(-dz1);
      dz(0, 1) = static_cast<T>(dz1);
    }
    out.d_logits.push_back(std::move(dz));
  }
  out.loss *= inv_b;
  return out;
}

/// Per-feature affine rescaling of unmasked entries to [-1, 1] using
/// extrema taken from a reference set; masked entries stay zero and are
/// excluded from the extrema. A constant feature maps to zero.
template <typename T>
struct MinMaxNormalizer {
  std::vector<double> min_v, max_v;

  static MinMaxNormalizer fit(const std::vector<Mat<T>>& samples,
                              const Mat<T>* mask = nullptr) {
    detail::require_arg(!samples.empty(), "MinMaxNormalizer::fit: empty sample set");
    const std::size_t f = samples[0].cols();
    MinMaxNormalizer norm;
    norm.min_v.assign(f, std::numeric_limits<double>::infinity());
    norm.max_v.assign(f, -std::numeric_limits<double>::infinity());
    for (const auto& x : samples) {
      detail::require_arg(x.cols() == f, "MinMaxNormalizer::fit: feature count mismatch");
      for (std::size_t n = 0; n < x.rows(); ++n) {
        for (std::size_t c = 0; c < f; ++c) {
          if (mask && (*mask)(n, c) == T(0)) continue;
          const double v = static_cast<double>(x(n, c));
          norm.min_v[c] = std::min(norm.min_v[c], v);
          norm.max_v[c] = std::max(norm.max_v[c], v);
        }
      }
    }
    for (std::size_t c = 0; c < f; ++c) {
      detail::require_state(std::isfinite(norm.min_v[c]),
                            "MinMaxNormalizer::fit: feature " + std::to_string(c) +
                                " has no unmasked entries");
    }
    return norm;
  }

  Mat<T> apply(const Mat<T>& x, const Mat<T>* mask = nullptr) const {
    detail::require_arg(x.cols() == min_v.size(), "MinMaxNormalizer::apply: feature mismatch");
    Mat<T> y(x.rows(), x.cols());
    for (std::size_t n = 0; n < x.rows(); ++n) {
      for (std::size_t c = 0; c < x.cols(); ++c) {
        if (mask && (*mask)(n, c) == T(0)) {
          y(n, c) = T(0);
          continue;
        }
        const double span = max_v[c] - min_v[c];
        if (span == 0.0) {
          y(n, c) = T(0);
        } else {
          y(n, c) = static_cast<T>(
              2.0 * (static_cast<double>(x(n, c)) - min_v[c]) / span - 1.0);
        }
      }
    }
    return y;
  }
};

}  // namespace meshgcn
