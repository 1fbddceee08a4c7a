#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "graft/error.hpp"
#include "graft/tensor.hpp"

namespace graft {

struct Dataset {
  Tensor images;  // [n, channels, H, W]
  std::vector<int> labels;
  int class_count = 0;
  std::uint64_t generator_seed = 0;

  std::size_t size() const { return labels.size(); }

  void validate() const {
    if (images.rank() != 4) throw ShapeError("dataset images must be [n, channels, H, W]");
    if (images.dim(0) != labels.size()) throw ShapeError("dataset image count does not match label count");
    for (int y : labels)
      if (y < 0 || y >= class_count) throw ValidationError("dataset label out of range");
  }

  // Gathers the listed samples into a batch tensor and label vector.
  std::pair<Tensor, std::vector<int>> gather(std::span<const std::size_t> indices) const {
    Shape shape = images.shape();
    shape[0] = indices.size();
    Tensor batch(shape);
    std::vector<int> y(indices.size());
    const std::size_t stride = images.row_size();
    for (std::size_t i = 0; i < indices.size(); ++i) {
      auto src = images.row(indices[i]);
      std::copy(src.begin(), src.end(), batch.values().begin() + static_cast<std::ptrdiff_t>(i * stride));
      y[i] = labels[indices[i]];
    }
    return {std::move(batch), std::move(y)};
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct SyntheticOptions {
  std::size_t channels = 1;
  double noise = 0.6;          // stddev of additive pixel noise
  double angle_jitter = 0.35;  // fraction of the inter-class angle spacing
};

// Oriented sinusoidal gratings. Class c has mean orientation c * pi / classes,
// jittered per sample; frequency and phase are random; gaussian pixel noise
// is added on top. Labels cycle 0, 1, ..., classes-1 so every prefix is balanced.
inline Dataset make_synthetic(int class_count, std::size_t n_per_class, std::size_t height, std::size_t width,
                              std::uint64_t seed, const SyntheticOptions& opt = {}) {
  if (class_count < 2) throw ConfigError("synthetic dataset needs at least two classes");
  if (n_per_class == 0 || height == 0 || width == 0 || opt.channels == 0)
    throw ConfigError("synthetic dataset dimensions must be positive");
  const std::size_t n = n_per_class * static_cast<std::size_t>(class_count);
  Dataset d;
  d.class_count = class_count;
  d.generator_seed = seed;
  d.images = Tensor({n, opt.channels, height, width});
  d.labels.resize(n);
  Rng rng(Rng::mix(seed, {0xda7a}));
  const double spacing = std::numbers::pi / class_count;
  const double cy = (static_cast<double>(height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(width) - 1.0) / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(class_count));
    d.labels[i] = label;
    const double theta = label * spacing + opt.angle_jitter * spacing * rng.uniform(-1.0, 1.0);
    const double freq = rng.uniform(0.12, 0.3);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double ct = std::cos(theta), st = std::sin(theta);
    auto img = d.images.row(i);
    for (std::size_t c = 0; c < opt.channels; ++c)
      for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
          const double u = (static_cast<double>(x) - cx) * ct + (static_cast<double>(y) - cy) * st;
          img[(c * height + y) * width + x] =
              std::sin(2.0 * std::numbers::pi * freq * u + phase) + opt.noise * rng.normal();
        }
  }
  return d;
}

// Reads a CIFAR-10 binary batch: 3073-byte records, one label byte followed by
// 3072 pixel bytes (1024 R, 1024 G, 1024 B, row-major 32x32). Pixels scale to [0, 1].
inline Dataset load_cifar10_batch(const std::filesystem::path& path, std::size_t max_records = 0) {
  constexpr std::size_t record = 3073;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.empty() || bytes.size() % record != 0)
    throw TruncatedError(path.string() + ": size " + std::to_string(bytes.size()) + " is not a multiple of 3073");
  std::size_t n = bytes.size() / record;
  if (max_records && max_records < n) n = max_records;
  Dataset d;
  d.class_count = 10;
  d.images = Tensor({n, 3, 32, 32});
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* r = bytes.data() + i * record;
    if (r[0] > 9) throw ManifestError(path.string() + ": label byte " + std::to_string(r[0]) + " out of range");
    d.labels[i] = r[0];
    auto img = d.images.row(i);
    for (std::size_t k = 0; k < 3072; ++k) img[k] = r[1 + k] / 255.0;
  }
  return d;
}

}  // namespace graft
