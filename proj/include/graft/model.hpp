#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "graft/error.hpp"
#include "graft/tensor.hpp"

namespace graft {

enum class LayerKind { conv, dense };

inline const char* to_string(LayerKind kind) { return kind == LayerKind::conv ? "conv" : "dense"; }

inline LayerKind parse_layer_kind(const std::string& s) {
  if (s == "conv") return LayerKind::conv;
  if (s == "dense") return LayerKind::dense;
  throw KindError("unknown layer kind '" + s + "'");
}

// conv weights: [out, in, K, K]; dense weights: [out, in]; bias: [out].
struct LayerWeights {
  std::string name;
  LayerKind kind = LayerKind::conv;
  Tensor weights;
  Tensor bias;

  std::size_t out_channels() const { return weights.dim(0); }
  std::size_t in_channels() const { return weights.dim(1); }
  std::size_t kernel() const { return kind == LayerKind::conv ? weights.dim(2) : 1; }
  std::size_t filter_count() const { return weights.rows(); }

  friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

struct ModelSnapshot {
  std::vector<LayerWeights> layers;
  int epoch = 0;
  int worker_id = 0;
  std::string tag;

  const LayerWeights& layer(const std::string& name) const {
    for (const auto& l : layers)
      if (l.name == name) return l;
    throw ValidationError("no layer named '" + name + "'");
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.numel() + l.bias.numel();
    return n;
  }

  std::size_t class_count() const { return layers.back().out_channels(); }
  std::size_t input_channels() const { return layers.front().in_channels(); }

  friend bool operator==(const ModelSnapshot&, const ModelSnapshot&) = default;
};

// Checks structural invariants: unique names, conv layers before dense layers,
// square odd kernels, bias shapes, and chained channel counts.
inline void validate_model(const ModelSnapshot& model) {
  if (model.layers.empty()) throw ValidationError("model has no layers");
  bool seen_dense = false;
  std::size_t channels = 0;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& l = model.layers[i];
    for (std::size_t j = 0; j < i; ++j)
      if (model.layers[j].name == l.name) throw ValidationError("duplicate layer name '" + l.name + "'");
    const auto& s = l.weights.shape();
    if (l.kind == LayerKind::conv) {
      if (seen_dense) throw ValidationError("conv layer '" + l.name + "' after a dense layer");
      if (s.size() != 4) throw ShapeError("conv layer '" + l.name + "' weights must be rank 4");
      if (s[2] != s[3]) throw ShapeError("conv layer '" + l.name + "' kernel is not square");
      if (s[2] % 2 == 0) throw ShapeError("conv layer '" + l.name + "' kernel size must be odd");
    } else {
      seen_dense = true;
      if (s.size() != 2) throw ShapeError("dense layer '" + l.name + "' weights must be rank 2");
    }
    if (l.bias.shape() != Shape{s[0]})
      throw ShapeError("layer '" + l.name + "' bias shape " + shape_string(l.bias.shape()));
    if (i > 0 && s[1] != channels)
      throw ShapeError("layer '" + l.name + "' expects " + std::to_string(s[1]) + " inputs, previous layer has " +
                       std::to_string(channels));
    channels = s[0];
  }
  if (!seen_dense) throw ValidationError("model needs a dense classifier layer");
}

// Returns a description of the first difference, or nullopt when the two
// snapshots have identical layer names, kinds and shapes.
inline std::optional<std::string> architecture_mismatch(const ModelSnapshot& a, const ModelSnapshot& b) {
  if (a.layers.size() != b.layers.size())
    return "layer count " + std::to_string(a.layers.size()) + " vs " + std::to_string(b.layers.size());
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto& x = a.layers[i];
    const auto& y = b.layers[i];
    if (x.name != y.name) return "layer " + std::to_string(i) + " name '" + x.name + "' vs '" + y.name + "'";
    if (x.kind != y.kind) return "layer '" + x.name + "' kind differs";
    if (x.weights.shape() != y.weights.shape())
      return "layer '" + x.name + "' weight shape " + shape_string(x.weights.shape()) + " vs " +
             shape_string(y.weights.shape());
    if (x.bias.shape() != y.bias.shape()) return "layer '" + x.name + "' bias shape differs";
  }
  return std::nullopt;
}

inline bool architecture_compatible(const ModelSnapshot& a, const ModelSnapshot& b) {
  return !architecture_mismatch(a, b).has_value();
}

inline std::string describe_architecture(const ModelSnapshot& model) {
  std::ostringstream out;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& l = model.layers[i];
    if (i) out << ';';
    out << l.name << ':' << to_string(l.kind) << shape_string(l.weights.shape());
  }
  return out.str();
}

struct ConvSpec {
  std::size_t out_channels = 16;
  std::size_t kernel = 3;
  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

// Stack of same-padded conv+ReLU layers, global average pool, dense classifier.
struct ArchSpec {
  std::size_t in_channels = 1;
  std::size_t height = 8;
  std::size_t width = 8;
  std::vector<ConvSpec> convs{{16, 3}, {32, 3}};
  std::size_t class_count = 3;

  void validate() const {
    if (in_channels == 0 || height == 0 || width == 0) throw ConfigError("arch.input dimensions must be positive");
    if (convs.size() < 2) throw ConfigError("arch.convs needs at least two conv layers");
    for (const auto& c : convs) {
      if (c.out_channels == 0) throw ConfigError("arch.convs: out_channels must be positive");
      if (c.kernel == 0 || c.kernel % 2 == 0) throw ConfigError("arch.convs: kernel size must be odd");
    }
    if (class_count < 2) throw ConfigError("arch.classes must be >= 2");
  }

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

// He-style init: weights ~ N(0, sqrt(2 / fan_in)), zero biases.
inline ModelSnapshot build_model(const ArchSpec& arch, std::uint64_t init_seed) {
  arch.validate();
  Rng rng(Rng::mix(init_seed, {0x1417}));
  ModelSnapshot model;
  std::size_t channels = arch.in_channels;
  for (std::size_t i = 0; i < arch.convs.size(); ++i) {
    const auto& c = arch.convs[i];
    const double fan_in = static_cast<double>(channels * c.kernel * c.kernel);
    LayerWeights l;
    l.name = "conv" + std::to_string(i + 1);
    l.kind = LayerKind::conv;
    l.weights = gaussian_sample(rng, 0.0, std::sqrt(2.0 / fan_in), {c.out_channels, channels, c.kernel, c.kernel});
    l.bias = Tensor::zeros({c.out_channels});
    model.layers.push_back(std::move(l));
    channels = c.out_channels;
  }
  LayerWeights fc;
  fc.name = "fc";
  fc.kind = LayerKind::dense;
  fc.weights = gaussian_sample(rng, 0.0, std::sqrt(1.0 / static_cast<double>(channels)), {arch.class_count, channels});
  fc.bias = Tensor::zeros({arch.class_count});
  model.layers.push_back(std::move(fc));
  return model;
}

namespace detail {

// Per-sample activations kept for the backward pass.
struct SampleTrace {
  std::vector<std::vector<double>> cols;       // im2col of each conv layer's input
  std::vector<std::vector<double>> conv_out;   // post-ReLU, one per conv layer
  std::vector<double> pooled;
  std::vector<std::vector<double>> dense_out;  // post-activation, last entry = logits
};

// Unfolds a same-padded K x K neighbourhood of every pixel:
// cols[(c * K + ky) * K + kx][y * w + x] = in[c][y + ky - K/2][x + kx - K/2], 0 outside.
inline void im2col(const double* in, std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
                   std::vector<double>& cols) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t hw = h * w;
  cols.assign(channels * k * k * hw, 0.0);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* row = cols.data() + ((c * k + ky) * k + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - pad;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t x = 0; x < w; ++x) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + kx) - pad;
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
            row[y * w + x] = in[(c * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)];
          }
        }
      }
}

// Adjoint of im2col: scatters column gradients back onto the input map.
inline void col2im(const std::vector<double>& dcols, std::size_t channels, std::size_t h, std::size_t w,
                   std::size_t k, double* din) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* row = dcols.data() + ((c * k + ky) * k + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - pad;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t x = 0; x < w; ++x) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + kx) - pad;
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
            din[(c * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)] += row[y * w + x];
          }
        }
      }
}

// out[o][p] = b[o] + sum_k W[o][k] * cols[k][p]
inline void conv_forward(const LayerWeights& l, const std::vector<double>& cols, std::size_t hw, double* out) {
  const std::size_t oc = l.weights.dim(0);
  const std::size_t patch = l.weights.row_size();
  const double* W = l.weights.values().data();
  for (std::size_t o = 0; o < oc; ++o) {
    double* dst = out + o * hw;
    std::fill(dst, dst + hw, l.bias[o]);
    for (std::size_t kk = 0; kk < patch; ++kk) {
      const double wv = W[o * patch + kk];
      const double* src = cols.data() + kk * hw;
      for (std::size_t p = 0; p < hw; ++p) dst[p] += wv * src[p];
    }
  }
}

// Accumulates weight and bias gradients from dout [oc][hw]; fills dcols when
// it is non-null.
inline void conv_backward(const LayerWeights& l, const std::vector<double>& cols, std::size_t hw, const double* dout,
                          double* dW, double* db, std::vector<double>* dcols) {
  const std::size_t oc = l.weights.dim(0);
  const std::size_t patch = l.weights.row_size();
  const double* W = l.weights.values().data();
  if (dcols) dcols->assign(patch * hw, 0.0);
  std::vector<double> cols_t(patch * hw);
  for (std::size_t kk = 0; kk < patch; ++kk)
    for (std::size_t p = 0; p < hw; ++p) cols_t[p * patch + kk] = cols[kk * hw + p];
  for (std::size_t o = 0; o < oc; ++o) {
    const double* g = dout + o * hw;
    double bsum = 0.0;
    for (std::size_t p = 0; p < hw; ++p) bsum += g[p];
    db[o] += bsum;
    double* dw = dW + o * patch;
    for (std::size_t p = 0; p < hw; ++p) {
      const double gv = g[p];
      if (gv == 0.0) continue;
      const double* src = cols_t.data() + p * patch;
      for (std::size_t kk = 0; kk < patch; ++kk) dw[kk] += gv * src[kk];
    }
    if (dcols) {
      for (std::size_t kk = 0; kk < patch; ++kk) {
        const double wv = W[o * patch + kk];
        double* dst = dcols->data() + kk * hw;
        for (std::size_t p = 0; p < hw; ++p) dst[p] += wv * g[p];
      }
    }
  }
}

inline void forward_sample(const ModelSnapshot& model, const double* input, std::size_t h, std::size_t w,
                           SampleTrace& trace) {
  const std::size_t hw = h * w;
  trace.conv_out.clear();
  trace.cols.clear();
  trace.dense_out.clear();
  const double* cur = input;
  std::size_t channels = model.input_channels();
  std::size_t li = 0;
  for (; li < model.layers.size() && model.layers[li].kind == LayerKind::conv; ++li) {
    const auto& l = model.layers[li];
    std::vector<double> out(l.out_channels() * hw);
    trace.cols.emplace_back();
    im2col(cur, l.in_channels(), h, w, l.kernel(), trace.cols.back());
    conv_forward(l, trace.cols.back(), hw, out.data());
    for (double& v : out) v = v > 0.0 ? v : 0.0;
    trace.conv_out.push_back(std::move(out));
    cur = trace.conv_out.back().data();
    channels = l.out_channels();
  }
  trace.pooled.assign(channels, 0.0);
  const double inv = 1.0 / static_cast<double>(hw);
  for (std::size_t c = 0; c < channels; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += cur[c * hw + i];
    trace.pooled[c] = s * inv;
  }
  const std::vector<double>* vin = &trace.pooled;
  for (; li < model.layers.size(); ++li) {
    const auto& l = model.layers[li];
    const std::size_t out_n = l.out_channels(), in_n = l.in_channels();
    std::vector<double> out(out_n);
    const double* W = l.weights.values().data();
    for (std::size_t o = 0; o < out_n; ++o) {
      double s = l.bias[o];
      for (std::size_t i = 0; i < in_n; ++i) s += W[o * in_n + i] * (*vin)[i];
      out[o] = s;
    }
    if (li + 1 < model.layers.size())
      for (double& v : out) v = v > 0.0 ? v : 0.0;
    trace.dense_out.push_back(std::move(out));
    vin = &trace.dense_out.back();
  }
}

inline void check_batch(const ModelSnapshot& model, const Tensor& batch) {
  if (batch.rank() != 4) throw ShapeError("batch must be [n, channels, H, W], got " + shape_string(batch.shape()));
  if (batch.dim(1) != model.input_channels())
    throw ShapeError("batch has " + std::to_string(batch.dim(1)) + " channels, model expects " +
                     std::to_string(model.input_channels()));
}

}  // namespace detail

// Logits [n, classes]. Each row depends only on its own sample.
inline Tensor forward(const ModelSnapshot& model, const Tensor& batch) {
  validate_model(model);
  detail::check_batch(model, batch);
  const std::size_t n = batch.dim(0), h = batch.dim(2), w = batch.dim(3);
  const std::size_t sample = batch.row_size();
  const std::size_t classes = model.class_count();
  Tensor logits({n, classes});
  detail::SampleTrace trace;
  for (std::size_t s = 0; s < n; ++s) {
    detail::forward_sample(model, batch.values().data() + s * sample, h, w, trace);
    const auto& z = trace.dense_out.back();
    std::copy(z.begin(), z.end(), logits.values().begin() + static_cast<std::ptrdiff_t>(s * classes));
  }
  return logits;
}

struct LayerGradient {
  Tensor weights;
  Tensor bias;
};

struct LossAndGradients {
  double loss = 0.0;  // mean cross-entropy over the batch
  std::vector<LayerGradient> grads;
  std::size_t correct = 0;
};

inline double softmax_cross_entropy(std::span<const double> z, std::size_t label, std::span<double> dz) {
  double zmax = z[0];
  for (double v : z) zmax = std::max(zmax, v);
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    dz[i] = std::exp(z[i] - zmax);
    sum += dz[i];
  }
  for (std::size_t i = 0; i < z.size(); ++i) dz[i] /= sum;
  const double loss = -(z[label] - zmax - std::log(sum));
  dz[label] -= 1.0;
  return loss;
}

// Mean softmax cross-entropy and its gradient with respect to every parameter.
inline LossAndGradients loss_and_gradients(const ModelSnapshot& model, const Tensor& batch,
                                           std::span<const int> labels) {
  validate_model(model);
  detail::check_batch(model, batch);
  const std::size_t n = batch.dim(0), h = batch.dim(2), w = batch.dim(3), hw = h * w;
  if (labels.size() != n) throw ShapeError("label count does not match batch size");
  const std::size_t classes = model.class_count();
  const std::size_t sample = batch.row_size();

  LossAndGradients out;
  for (const auto& l : model.layers)
    out.grads.push_back({Tensor::zeros(l.weights.shape()), Tensor::zeros(l.bias.shape())});

  std::size_t conv_count = 0;
  while (conv_count < model.layers.size() && model.layers[conv_count].kind == LayerKind::conv) ++conv_count;

  detail::SampleTrace trace;
  std::vector<double> dz(classes);
  std::vector<double> dcols;
  for (std::size_t s = 0; s < n; ++s) {
    const double* x = batch.values().data() + s * sample;
    detail::forward_sample(model, x, h, w, trace);
    const auto& z = trace.dense_out.back();
    const auto label = static_cast<std::size_t>(labels[s]);
    if (label >= classes) throw ShapeError("label out of range");
    out.loss += softmax_cross_entropy(z, label, dz);
    if (static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin()) == label) ++out.correct;

    // dense stack, last to first
    std::vector<double> grad = dz;
    for (std::size_t li = model.layers.size(); li-- > conv_count;) {
      const auto& l = model.layers[li];
      const std::size_t out_n = l.out_channels(), in_n = l.in_channels();
      const std::vector<double>& vin = li == conv_count ? trace.pooled : trace.dense_out[li - conv_count - 1];
      double* dW = out.grads[li].weights.values().data();
      double* db = out.grads[li].bias.values().data();
      std::vector<double> gin(in_n, 0.0);
      const double* W = l.weights.values().data();
      for (std::size_t o = 0; o < out_n; ++o) {
        db[o] += grad[o];
        for (std::size_t i = 0; i < in_n; ++i) {
          dW[o * in_n + i] += grad[o] * vin[i];
          gin[i] += W[o * in_n + i] * grad[o];
        }
      }
      if (li > conv_count) {
        const auto& act = trace.dense_out[li - conv_count - 1];
        for (std::size_t i = 0; i < in_n; ++i)
          if (act[i] <= 0.0) gin[i] = 0.0;
      }
      grad = std::move(gin);
    }
    if (conv_count == 0) continue;

    // global average pool
    const std::size_t channels = model.layers[conv_count - 1].out_channels();
    std::vector<double> dmap(channels * hw);
    const double inv = 1.0 / static_cast<double>(hw);
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < hw; ++i) dmap[c * hw + i] = grad[c] * inv;

    for (std::size_t li = conv_count; li-- > 0;) {
      const auto& l = model.layers[li];
      const auto& act = trace.conv_out[li];
      for (std::size_t i = 0; i < dmap.size(); ++i)
        if (act[i] <= 0.0) dmap[i] = 0.0;
      detail::conv_backward(l, trace.cols[li], hw, dmap.data(), out.grads[li].weights.values().data(),
                            out.grads[li].bias.values().data(), li > 0 ? &dcols : nullptr);
      if (li == 0) break;
      dmap.assign(l.in_channels() * hw, 0.0);
      detail::col2im(dcols, l.in_channels(), h, w, l.kernel(), dmap.data());
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.loss *= inv_n;
  for (auto& g : out.grads) {
    for (double& v : g.weights.values()) v *= inv_n;
    for (double& v : g.bias.values()) v *= inv_n;
  }
  return out;
}

inline double mean_loss(const ModelSnapshot& model, const Tensor& batch, std::span<const int> labels) {
  const Tensor logits = forward(model, batch);
  const std::size_t classes = logits.dim(1);
  std::vector<double> scratch(classes);
  double total = 0.0;
  for (std::size_t s = 0; s < logits.dim(0); ++s)
    total += softmax_cross_entropy(logits.row(s), static_cast<std::size_t>(labels[s]), scratch);
  return total / static_cast<double>(logits.dim(0));
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::vector<std::pair<std::string, double>> per_layer;  // max over weights and bias of each layer
};

// Compares analytic gradients to central differences (step 1e-5).
// Relative error is |a - n| / max(|a|, |n|, 1e-6); the floor keeps
// vanishing gradients from turning round-off into large ratios.
// At most `samples_per_layer` parameters per layer are checked, chosen by seed.
inline GradCheckResult grad_check_by_layer(const ModelSnapshot& model, const Tensor& batch,
                                           std::span<const int> labels, std::size_t samples_per_layer = 64,
                                           std::uint64_t seed = 0) {
  const double step = 1e-5;
  const auto analytic = loss_and_gradients(model, batch, labels);
  GradCheckResult result;
  Rng rng(Rng::mix(seed, {0x6ead}));
  ModelSnapshot probe = model;
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    double layer_max = 0.0;
    for (int part = 0; part < 2; ++part) {
      Tensor& param = part == 0 ? probe.layers[li].weights : probe.layers[li].bias;
      const Tensor& grad = part == 0 ? analytic.grads[li].weights : analytic.grads[li].bias;
      std::vector<std::size_t> idx;
      if (param.numel() <= samples_per_layer) {
        for (std::size_t i = 0; i < param.numel(); ++i) idx.push_back(i);
      } else {
        for (std::size_t i = 0; i < samples_per_layer; ++i) idx.push_back(rng.below(param.numel()));
      }
      for (std::size_t i : idx) {
        const double orig = param[i];
        param[i] = orig + step;
        const double up = mean_loss(probe, batch, labels);
        param[i] = orig - step;
        const double down = mean_loss(probe, batch, labels);
        param[i] = orig;
        const double numeric = (up - down) / (2.0 * step);
        const double a = grad[i];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
        layer_max = std::max(layer_max, std::abs(a - numeric) / denom);
      }
    }
    result.per_layer.emplace_back(model.layers[li].name, layer_max);
    result.max_rel_error = std::max(result.max_rel_error, layer_max);
  }
  return result;
}

inline double grad_check(const ModelSnapshot& model, const Tensor& batch, std::span<const int> labels) {
  return grad_check_by_layer(model, batch, labels).max_rel_error;
}

}  // namespace graft
