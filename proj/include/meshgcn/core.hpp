#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

namespace meshgcn {

/// Dense row-major matrix over float or double, sized at runtime.
template <typename T>
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, T fill_value = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill_value) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Mat& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  template <typename U>
  Mat<U> cast() const {
    Mat<U> out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) {
      out.data()[i] = static_cast<U>(data_[i]);
    }
    return out;
  }

  Mat& operator+=(const Mat& other) {
    if (!same_shape(other)) throw std::invalid_argument("Mat::operator+=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  Mat& operator*=(T s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// Named view of one parameter tensor and its gradient buffer. Layers expose
/// these so the optimizer and checkpoint code can walk every tensor in a
/// fixed order without knowing layer internals.
template <typename T>
struct TensorRef {
  std::string name;
  Mat<T>* value = nullptr;
  Mat<T>* grad = nullptr;
};

/// C = A * B for small dense matrices.
template <typename T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  Mat<T> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const T aik = a(i, k);
      if (aik == T(0)) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) {
        c(i, j) += aik * b(k, j);
      }
    }
  }
  return c;
}

namespace detail {

inline void require_arg(bool cond, const std::string& message) {
  if (!cond) throw std::invalid_argument(message);
}

inline void require_state(bool cond, const std::string& message) {
  if (!cond) throw std::runtime_error(message);
}

}  // namespace detail

/// Shortest round-trip decimal formatting (used everywhere output must be
/// reproducible byte for byte).
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string format_float(float v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0;
  auto first = s.data();
  auto last = s.data() + s.size();
  while (first != last && (*first == ' ' || *first == '\t')) ++first;
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc()) throw std::runtime_error("failed to parse number: '" + s + "'");
  return v;
}

}  // namespace meshgcn
