#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "graft/error.hpp"

namespace graft {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

inline std::size_t shape_numel(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  std::size_t n = 1;
  for (auto d : shape) {
    if (d == 0) throw ShapeError("non-positive dimension in shape " + shape_string(shape));
    n *= d;
  }
  return n;
}

// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
      throw ShapeError("shape " + shape_string(shape_) + " does not match " +
                       std::to_string(data_.size()) + " elements");
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  // Number of elements in one slice along the leading dimension.
  std::size_t row_size() const { return shape_.empty() ? 0 : data_.size() / shape_[0]; }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }

  // Slice j along the leading dimension; for a conv weight this is filter j.
  std::span<const double> row(std::size_t j) const {
    return std::span<const double>(data_).subspan(j * row_size(), row_size());
  }
  std::span<double> row(std::size_t j) {
    return std::span<double>(data_).subspan(j * row_size(), row_size());
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// xoshiro256** seeded through splitmix64. The stream is fully specified by
// the 64-bit seed, so results reproduce across compilers and platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
  }

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n) by rejection; n > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Derives an independent stream from a seed and a list of integers.
  static std::uint64_t mix(std::uint64_t seed, std::initializer_list<std::uint64_t> salt) {
    std::uint64_t x = seed;
    std::uint64_t h = splitmix64(x);
    for (auto s : salt) {
      x = h ^ (s + 0x9e3779b97f4a7c15ULL);
      h = splitmix64(x);
    }
    return h;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t state_[4]{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline Tensor gaussian_sample(Rng& rng, double mean, double stddev, const Shape& shape) {
  if (!(stddev >= 0.0) || !std::isfinite(stddev)) throw DomainError("gaussian stddev must be >= 0");
  Tensor t(shape);
  for (double& v : t.values()) v = mean + stddev * rng.normal();
  return t;
}

// alpha * a + (1 - alpha) * b, elementwise, alpha strictly inside (0, 1).
inline Tensor linear_blend(const Tensor& a, const Tensor& b, double alpha) {
  if (a.shape() != b.shape())
    throw ShapeError("linear_blend shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("blend coefficient must lie in (0, 1)");
  const double beta = 1.0 - alpha;
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = alpha * a[i] + beta * b[i];
  return out;
}

}  // namespace graft
