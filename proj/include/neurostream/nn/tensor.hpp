#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "neurostream/core/types.hpp"

namespace neurostream::nn {

struct ShapeMismatch : Error {
  using Error::Error;
};

inline std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

// Dense n-dimensional array, row-major.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    data_.assign(count(shape_), T(0));
  }
  Tensor(std::vector<std::size_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_))
      throw ShapeMismatch("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_str(shape_));
  }

  static std::size_t count(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  const std::vector<T>& values() const { return data_; }
  std::size_t numel() const { return data_.size(); }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }

  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T(0)); }

  // Reallocates (zero-filled) only when the element count changes.
  void resize(std::vector<std::size_t> shape) {
    const std::size_t n = count(shape);
    shape_ = std::move(shape);
    if (data_.size() != n) data_.assign(n, T(0));
  }

  Tensor reshaped(std::vector<std::size_t> shape) const {
    if (count(shape) != numel())
      throw ShapeMismatch("reshape " + shape_str(shape_) + " -> " + shape_str(shape));
    return Tensor(std::move(shape), data_);
  }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out;
    out.reserve(data_.size());
    for (const T& v : data_) out.push_back(static_cast<U>(v));
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

// Deterministic value generation on top of mt19937; the mapping to floats is
// hand-rolled so float and double instantiations draw the same sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed)
      : gen_(static_cast<std::uint32_t>(seed ^ (seed >> 32))) {}

  double u01() {
    const std::uint64_t a = gen_() >> 5;  // 27 bits
    const std::uint64_t b = gen_() >> 6;  // 26 bits
    return (static_cast<double>(a) * 67108864.0 + static_cast<double>(b)) /
           9007199254740992.0;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * u01() - 1.0;
      v = 2.0 * u01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  std::uint32_t next_u32() { return gen_(); }

  // Integer in [0, n); n must be >= 1.
  std::size_t below(std::size_t n) {
    return static_cast<std::size_t>(u01() * static_cast<double>(n)) % n;
  }

  template <typename T>
  void fill_uniform(Tensor<T>& t, double lo, double hi) {
    T* p = t.ptr();
    for (std::size_t i = 0; i < t.numel(); ++i) p[i] = static_cast<T>(uniform(lo, hi));
  }

  template <typename T>
  void fill_normal(Tensor<T>& t, double mean, double stddev) {
    T* p = t.ptr();
    for (std::size_t i = 0; i < t.numel(); ++i)
      p[i] = static_cast<T>(mean + stddev * normal());
  }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) std::swap(first[i - 1], first[below(i)]);
  }

 private:
  std::mt19937 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace neurostream::nn
