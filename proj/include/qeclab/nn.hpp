#pragma once

// Small convolutional/dense network engine: shape inference, batched forward
// and reverse-mode passes over im2col + GEMM, Adam, and a training loop.
//
// Spatial activations are stored channel-major across the batch, i.e. a
// row-major (C) x (B*H*W) matrix; flat activations are column-per-sample
// (D) x (B) matrices. Kernels are [out, in, kh, kw] row-major.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace qeclab::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Matrix = Eigen::MatrixXd;

/// Storage is aligned to Eigen's packet boundary so that vectorized
/// reductions take the same path on every run.
using AlignedVector = std::vector<double, Eigen::aligned_allocator<double>>;

struct Tensor {
  std::vector<std::size_t> shape;
  AlignedVector data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> extents, double fill = 0.0) : shape(std::move(extents)) {
    data.assign(element_count(shape), fill);
  }
  static std::size_t element_count(const std::vector<std::size_t>& extents) {
    return std::accumulate(extents.begin(), extents.end(), std::size_t{1}, std::multiplies<>());
  }
  std::size_t size() const { return data.size(); }
};

enum class Padding { Same, Valid };

struct Conv2D {
  int filters = 64;
  int kernel_h = 3;
  int kernel_w = 3;
  int stride = 1;
  int dilation = 1;
  Padding padding = Padding::Valid;
};
struct Dense {
  int units = 0;
};
struct Flatten {};
enum class ActivationKind { Relu, Softmax };
struct Activation {
  ActivationKind kind = ActivationKind::Relu;
};

using LayerSpec = std::variant<Conv2D, Dense, Flatten, Activation>;

struct Shape3 {
  int channels = 1;
  int height = 1;
  int width = 1;
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

struct ModelSpec {
  Shape3 input;
  std::vector<LayerSpec> layers;
  int output_classes = 4;
};

/// Output shape after a layer: spatial (C,H,W) or flat (units).
struct LayerShape {
  bool flat = false;
  int channels = 0;
  int height = 1;
  int width = 1;
  int size() const { return flat ? channels : channels * height * width; }
};

inline int effective_extent(int kernel, int dilation) { return (kernel - 1) * dilation + 1; }

/// Total zero padding before/after along one axis.
inline std::pair<int, int> padding_for(Padding p, int kernel, int dilation) {
  if (p == Padding::Valid) return {0, 0};
  const int total = effective_extent(kernel, dilation) - 1;
  return {total / 2, total - total / 2};
}

inline int conv_output_extent(int in, int kernel, int stride, int dilation, Padding p) {
  const auto [lo, hi] = padding_for(p, kernel, dilation);
  const int span = in + lo + hi - effective_extent(kernel, dilation);
  if (span < 0) return 0;
  return span / stride + 1;
}

/// Per-layer output shapes; throws if the stack is not a valid classifier.
inline std::vector<LayerShape> infer_shapes(const ModelSpec& spec) {
  if (spec.input.channels < 1 || spec.input.height < 1 || spec.input.width < 1) {
    throw std::invalid_argument("model input shape must be positive");
  }
  std::vector<LayerShape> shapes;
  LayerShape cur{false, spec.input.channels, spec.input.height, spec.input.width};
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    if (const auto* c = std::get_if<Conv2D>(&layer)) {
      if (cur.flat) throw std::invalid_argument("conv2d cannot follow a flat layer");
      if (c->filters < 1 || c->kernel_h < 1 || c->kernel_w < 1) throw std::invalid_argument("bad conv2d extents");
      if (c->stride < 1 || c->dilation < 1) throw std::invalid_argument("stride and dilation must be >= 1");
      const int h = conv_output_extent(cur.height, c->kernel_h, c->stride, c->dilation, c->padding);
      const int w = conv_output_extent(cur.width, c->kernel_w, c->stride, c->dilation, c->padding);
      if (h < 1 || w < 1) throw std::invalid_argument("conv2d output extent is not positive");
      cur = {false, c->filters, h, w};
    } else if (const auto* d = std::get_if<Dense>(&layer)) {
      if (!cur.flat) throw std::invalid_argument("dense layer needs a flat input (add flatten)");
      if (d->units < 1) throw std::invalid_argument("dense units must be >= 1");
      cur = {true, d->units, 1, 1};
    } else if (std::holds_alternative<Flatten>(layer)) {
      cur = {true, cur.size(), 1, 1};
    } else {
      const auto& a = std::get<Activation>(layer);
      if (a.kind == ActivationKind::Softmax && i + 1 != spec.layers.size()) {
        throw std::invalid_argument("softmax is only allowed as the final activation");
      }
    }
    shapes.push_back(cur);
  }
  return shapes;
}

/// Checks that the stack ends in Dense(output_classes) + softmax.
inline void validate(const ModelSpec& spec) {
  const auto shapes = infer_shapes(spec);
  const auto n = spec.layers.size();
  if (n < 2) throw std::invalid_argument("model needs at least a dense output and softmax");
  const auto* last = std::get_if<Activation>(&spec.layers[n - 1]);
  const auto* head = std::get_if<Dense>(&spec.layers[n - 2]);
  if (!last || last->kind != ActivationKind::Softmax || !head || head->units != spec.output_classes) {
    throw std::invalid_argument("model must end with dense(" + std::to_string(spec.output_classes) +
                                ") followed by softmax");
  }
}

inline bool has_parameters(const LayerSpec& l) {
  return std::holds_alternative<Conv2D>(l) || std::holds_alternative<Dense>(l);
}

/// Parameter tensor extents in file order: kernel then bias per layer.
inline std::vector<std::vector<std::size_t>> parameter_shapes(const ModelSpec& spec) {
  const auto shapes = infer_shapes(spec);
  std::vector<std::vector<std::size_t>> out;
  LayerShape in{false, spec.input.channels, spec.input.height, spec.input.width};
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (const auto* c = std::get_if<Conv2D>(&spec.layers[i])) {
      out.push_back({static_cast<std::size_t>(c->filters), static_cast<std::size_t>(in.channels),
                     static_cast<std::size_t>(c->kernel_h), static_cast<std::size_t>(c->kernel_w)});
      out.push_back({static_cast<std::size_t>(c->filters)});
    } else if (const auto* d = std::get_if<Dense>(&spec.layers[i])) {
      out.push_back({static_cast<std::size_t>(d->units), static_cast<std::size_t>(in.size())});
      out.push_back({static_cast<std::size_t>(d->units)});
    }
    in = shapes[i];
  }
  return out;
}

inline std::size_t param_count(const ModelSpec& spec) {
  std::size_t total = 0;
  for (const auto& s : parameter_shapes(spec)) total += Tensor::element_count(s);
  return total;
}

struct Parameters {
  std::vector<Tensor> tensors;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }
  void set_zero() {
    for (auto& t : tensors) std::fill(t.data.begin(), t.data.end(), 0.0);
  }
};

inline Parameters zero_parameters(const ModelSpec& spec) {
  Parameters p;
  for (const auto& s : parameter_shapes(spec)) p.tensors.emplace_back(s, 0.0);
  return p;
}

/// He-style uniform fan-in initialization, biases zero.
inline Parameters init_parameters(const ModelSpec& spec, std::uint64_t seed) {
  Parameters p = zero_parameters(spec);
  std::mt19937_64 rng(seed);
  for (std::size_t t = 0; t < p.tensors.size(); t += 2) {
    auto& kernel = p.tensors[t];
    const std::size_t fan_in = kernel.size() / kernel.shape[0];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& w : kernel.data) w = (static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0) * limit;
  }
  return p;
}

inline void check_parameters(const ModelSpec& spec, const Parameters& params) {
  const auto shapes = parameter_shapes(spec);
  if (shapes.size() != params.tensors.size()) throw std::invalid_argument("parameter tensor count mismatch");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (shapes[i] != params.tensors[i].shape) throw std::invalid_argument("parameter tensor shape mismatch");
  }
}

namespace detail {

struct ConvGeometry {
  int in_c, in_h, in_w;
  int out_c, out_h, out_w;
  int kh, kw, stride, dilation, pad_top, pad_left;
  int batch;

  int k_rows() const { return in_c * kh * kw; }
  long n_cols() const { return static_cast<long>(batch) * out_h * out_w; }
};

inline ConvGeometry conv_geometry(const Conv2D& c, const LayerShape& in, const LayerShape& out, int batch) {
  return {in.channels,
          in.height,
          in.width,
          out.channels,
          out.height,
          out.width,
          c.kernel_h,
          c.kernel_w,
          c.stride,
          c.dilation,
          padding_for(c.padding, c.kernel_h, c.dilation).first,
          padding_for(c.padding, c.kernel_w, c.dilation).first,
          batch};
}

/// cols(row=(c,i,j), col=(b,oy,ox)) = input[c][b][oy*s + i*dil - pad][ox*s + j*dil - pad]
inline void im2col(const double* in, const ConvGeometry& g, RowMatrix& cols) {
  cols.resize(g.k_rows(), g.n_cols());
  const long plane = static_cast<long>(g.in_h) * g.in_w;
  for (int c = 0; c < g.in_c; ++c) {
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        double* dst = cols.row((c * g.kh + i) * g.kw + j).data();
        for (int b = 0; b < g.batch; ++b) {
          const double* src = in + (static_cast<long>(c) * g.batch + b) * plane;
          for (int oy = 0; oy < g.out_h; ++oy) {
            const int iy = oy * g.stride + i * g.dilation - g.pad_top;
            if (iy < 0 || iy >= g.in_h) {
              std::fill(dst, dst + g.out_w, 0.0);
              dst += g.out_w;
              continue;
            }
            const double* row = src + static_cast<long>(iy) * g.in_w;
            for (int ox = 0; ox < g.out_w; ++ox) {
              const int ix = ox * g.stride + j * g.dilation - g.pad_left;
              *dst++ = (ix >= 0 && ix < g.in_w) ? row[ix] : 0.0;
            }
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-adds column gradients back to the input layout.
inline void col2im(const RowMatrix& cols, const ConvGeometry& g, double* in_grad) {
  const long plane = static_cast<long>(g.in_h) * g.in_w;
  std::fill(in_grad, in_grad + plane * g.in_c * g.batch, 0.0);
  for (int c = 0; c < g.in_c; ++c) {
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        const double* src = cols.row((c * g.kh + i) * g.kw + j).data();
        for (int b = 0; b < g.batch; ++b) {
          double* dst = in_grad + (static_cast<long>(c) * g.batch + b) * plane;
          for (int oy = 0; oy < g.out_h; ++oy) {
            const int iy = oy * g.stride + i * g.dilation - g.pad_top;
            if (iy < 0 || iy >= g.in_h) {
              src += g.out_w;
              continue;
            }
            double* row = dst + static_cast<long>(iy) * g.in_w;
            for (int ox = 0; ox < g.out_w; ++ox, ++src) {
              const int ix = ox * g.stride + j * g.dilation - g.pad_left;
              if (ix >= 0 && ix < g.in_w) row[ix] += *src;
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Single-sample convolution: input [C,H,W], kernels [F,C,kh,kw], bias [F].
inline Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, int stride, int dilation,
                     Padding padding) {
  if (input.shape.size() != 3 || kernels.shape.size() != 4 || bias.shape.size() != 1) {
    throw std::invalid_argument("conv2d expects [C,H,W] input, [F,C,kh,kw] kernels and [F] bias");
  }
  if (kernels.shape[1] != input.shape[0] || bias.shape[0] != kernels.shape[0]) {
    throw std::invalid_argument("conv2d channel mismatch");
  }
  if (stride < 1 || dilation < 1) throw std::invalid_argument("stride and dilation must be >= 1");
  const Conv2D spec{static_cast<int>(kernels.shape[0]), static_cast<int>(kernels.shape[2]),
                    static_cast<int>(kernels.shape[3]), stride, dilation, padding};
  const LayerShape in{false, static_cast<int>(input.shape[0]), static_cast<int>(input.shape[1]),
                      static_cast<int>(input.shape[2])};
  const int oh = conv_output_extent(in.height, spec.kernel_h, stride, dilation, padding);
  const int ow = conv_output_extent(in.width, spec.kernel_w, stride, dilation, padding);
  if (oh < 1 || ow < 1) throw std::invalid_argument("conv2d output extent is not positive");
  const LayerShape out{false, spec.filters, oh, ow};
  const auto g = detail::conv_geometry(spec, in, out, 1);
  RowMatrix cols;
  detail::im2col(input.data.data(), g, cols);
  Eigen::Map<const RowMatrix> w(kernels.data.data(), spec.filters, g.k_rows());
  Tensor result({static_cast<std::size_t>(spec.filters), static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
  Eigen::Map<RowMatrix> o(result.data.data(), spec.filters, g.n_cols());
  o.noalias() = w * cols;
  for (int f = 0; f < spec.filters; ++f) o.row(f).array() += bias.data[f];
  return result;
}

/// Batched executor bound to one model. Holds activations and scratch for the
/// most recent forward pass so that backward can reuse them.
class Network {
 public:
  explicit Network(ModelSpec spec) : spec_(std::move(spec)), shapes_(infer_shapes(spec_)) {
    validate(spec_);
    LayerShape in{false, spec_.input.channels, spec_.input.height, spec_.input.width};
    int tensor = 0;
    bool seen_params = false;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      inputs_.push_back(in);
      param_index_.push_back(has_parameters(spec_.layers[i]) ? tensor : -1);
      needs_input_grad_.push_back(seen_params);
      if (has_parameters(spec_.layers[i])) {
        tensor += 2;
        seen_params = true;
      }
      in = shapes_[i];
    }
    acts_.resize(spec_.layers.size() + 1);
    cols_.resize(spec_.layers.size());
  }

  const ModelSpec& spec() const { return spec_; }
  int input_size() const { return spec_.input.channels * spec_.input.height * spec_.input.width; }
  int classes() const { return spec_.output_classes; }

  /// `batch` samples stored back to back as [C,H,W] each. Returns a
  /// (classes x batch) probability matrix, column per sample.
  const Matrix& forward(const Parameters& params, std::span<const double> inputs, int batch) {
    if (batch < 1 || inputs.size() != static_cast<std::size_t>(batch) * input_size()) {
      throw std::invalid_argument("forward: input size does not match model input shape");
    }
    if (params.tensors.size() != parameter_shapes_count()) throw std::invalid_argument("parameter count mismatch");
    batch_ = batch;
    // Input layout [C][B][H*W].
    const int c_in = spec_.input.channels;
    const long plane = static_cast<long>(spec_.input.height) * spec_.input.width;
    auto& a0 = acts_[0];
    a0.flat = false;
    a0.spatial.resize(c_in, batch * plane);
    for (int b = 0; b < batch; ++b) {
      for (int c = 0; c < c_in; ++c) {
        const double* src = inputs.data() + (static_cast<long>(b) * c_in + c) * plane;
        std::copy(src, src + plane, a0.spatial.row(c).data() + b * plane);
      }
    }
    for (std::size_t l = 0; l < spec_.layers.size(); ++l) forward_layer(l, params);
    return acts_.back().dense;
  }

  /// Accumulates d(mean cross-entropy)/d(params) into `grads` for the last
  /// forward batch. Softmax must be the final layer (fused with the loss).
  void backward(const Parameters& params, std::span<const int> labels, Parameters& grads) {
    if (labels.size() != static_cast<std::size_t>(batch_)) throw std::invalid_argument("label count mismatch");
    Matrix delta = acts_.back().dense;
    for (int b = 0; b < batch_; ++b) {
      const int y = labels[b];
      if (y < 0 || y >= spec_.output_classes) throw std::invalid_argument("label out of range");
      delta(y, b) -= 1.0;
    }
    delta /= static_cast<double>(batch_);
    Grad g;
    g.flat = true;
    g.dense = std::move(delta);
    for (std::size_t l = spec_.layers.size() - 1; l-- > 0;) {
      // Layer index l + 1 was the softmax; start from the dense head.
      if (!backward_layer(l, params, g, grads)) break;
    }
  }

 private:
  struct Act {
    bool flat = false;
    RowMatrix spatial;  // C x (B*H*W)
    Matrix dense;       // D x B
  };
  struct Grad {
    bool flat = false;
    RowMatrix spatial;
    Matrix dense;
  };

  std::size_t parameter_shapes_count() const {
    std::size_t n = 0;
    for (const auto& l : spec_.layers) n += has_parameters(l) ? 2 : 0;
    return n;
  }

  void forward_layer(std::size_t l, const Parameters& params) {
    const auto& layer = spec_.layers[l];
    const Act& in = acts_[l];
    Act& out = acts_[l + 1];
    const LayerShape& os = shapes_[l];
    if (const auto* c = std::get_if<Conv2D>(&layer)) {
      const auto g = detail::conv_geometry(*c, inputs_[l], os, batch_);
      detail::im2col(in.spatial.data(), g, cols_[l]);
      const int t = param_index_[l];
      Eigen::Map<const RowMatrix> w(params.tensors[t].data.data(), g.out_c, g.k_rows());
      Eigen::Map<const Eigen::VectorXd> bias(params.tensors[t + 1].data.data(), g.out_c);
      out.flat = false;
      out.spatial.resize(g.out_c, g.n_cols());
      out.spatial.noalias() = w * cols_[l];
      out.spatial.colwise() += bias;
    } else if (const auto* d = std::get_if<Dense>(&layer)) {
      const int t = param_index_[l];
      const int in_dim = inputs_[l].size();
      Eigen::Map<const RowMatrix> w(params.tensors[t].data.data(), d->units, in_dim);
      Eigen::Map<const Eigen::VectorXd> bias(params.tensors[t + 1].data.data(), d->units);
      out.flat = true;
      out.dense.resize(d->units, batch_);
      out.dense.noalias() = w * in.dense;
      out.dense.colwise() += bias;
    } else if (std::holds_alternative<Flatten>(layer)) {
      out.flat = true;
      if (in.flat) {
        out.dense = in.dense;
        return;
      }
      const LayerShape& is = inputs_[l];
      const long plane = static_cast<long>(is.height) * is.width;
      out.dense.resize(is.size(), batch_);
      for (int b = 0; b < batch_; ++b) {
        double* dst = out.dense.col(b).data();
        for (int c = 0; c < is.channels; ++c) {
          const double* src = in.spatial.row(c).data() + b * plane;
          std::copy(src, src + plane, dst + c * plane);
        }
      }
    } else {
      const auto& a = std::get<Activation>(layer);
      out.flat = in.flat;
      if (a.kind == ActivationKind::Relu) {
        if (in.flat) {
          out.dense = in.dense.cwiseMax(0.0);
        } else {
          out.spatial = in.spatial.cwiseMax(0.0);
        }
      } else {
        if (!in.flat) throw std::invalid_argument("softmax expects a flat input");
        out.dense.resize(in.dense.rows(), in.dense.cols());
        for (Eigen::Index b = 0; b < in.dense.cols(); ++b) {
          const double mx = in.dense.col(b).maxCoeff();
          out.dense.col(b) = (in.dense.col(b).array() - mx).exp().matrix();
          out.dense.col(b) /= out.dense.col(b).sum();
        }
      }
    }
  }

  // Transforms g (gradient w.r.t. output of layer l) into the gradient w.r.t.
  // its input. Returns false once no earlier layer needs gradients.
  bool backward_layer(std::size_t l, const Parameters& params, Grad& g, Parameters& grads) {
    const auto& layer = spec_.layers[l];
    const Act& in = acts_[l];
    const Act& out = acts_[l + 1];
    const bool need_input = needs_input_grad_[l];
    if (const auto* c = std::get_if<Conv2D>(&layer)) {
      const auto geo = detail::conv_geometry(*c, inputs_[l], shapes_[l], batch_);
      const int t = param_index_[l];
      Eigen::Map<RowMatrix> dw(grads.tensors[t].data.data(), geo.out_c, geo.k_rows());
      Eigen::Map<Eigen::VectorXd> db(grads.tensors[t + 1].data.data(), geo.out_c);
      dw.noalias() += g.spatial * cols_[l].transpose();
      db += g.spatial.rowwise().sum();
      if (!need_input) return false;
      Eigen::Map<const RowMatrix> w(params.tensors[t].data.data(), geo.out_c, geo.k_rows());
      scratch_.noalias() = w.transpose() * g.spatial;
      RowMatrix next(geo.in_c, static_cast<long>(batch_) * geo.in_h * geo.in_w);
      detail::col2im(scratch_, geo, next.data());
      g.spatial = std::move(next);
      g.flat = false;
    } else if (const auto* d = std::get_if<Dense>(&layer)) {
      const int t = param_index_[l];
      const int in_dim = inputs_[l].size();
      Eigen::Map<RowMatrix> dw(grads.tensors[t].data.data(), d->units, in_dim);
      Eigen::Map<Eigen::VectorXd> db(grads.tensors[t + 1].data.data(), d->units);
      dw.noalias() += g.dense * in.dense.transpose();
      db += g.dense.rowwise().sum();
      if (!need_input) return false;
      Eigen::Map<const RowMatrix> w(params.tensors[t].data.data(), d->units, in_dim);
      Matrix next = w.transpose() * g.dense;
      g.dense = std::move(next);
    } else if (std::holds_alternative<Flatten>(layer)) {
      if (!need_input) return false;
      if (in.flat) return true;
      const LayerShape& is = inputs_[l];
      const long plane = static_cast<long>(is.height) * is.width;
      RowMatrix next(is.channels, batch_ * plane);
      for (int b = 0; b < batch_; ++b) {
        const double* src = g.dense.col(b).data();
        for (int c = 0; c < is.channels; ++c) {
          std::copy(src + c * plane, src + (c + 1) * plane, next.row(c).data() + b * plane);
        }
      }
      g.spatial = std::move(next);
      g.flat = false;
    } else {
      const auto& a = std::get<Activation>(layer);
      if (a.kind == ActivationKind::Softmax) throw std::logic_error("softmax must be the final layer");
      if (!need_input) return false;
      // ReLU subgradient at exactly zero is zero.
      if (out.flat) {
        g.dense = g.dense.cwiseProduct((out.dense.array() > 0.0).cast<double>().matrix());
      } else {
        g.spatial = g.spatial.cwiseProduct((out.spatial.array() > 0.0).cast<double>().matrix());
      }
    }
    return true;
  }

  ModelSpec spec_;
  std::vector<LayerShape> shapes_;
  std::vector<LayerShape> inputs_;
  std::vector<int> param_index_;
  std::vector<bool> needs_input_grad_;
  std::vector<Act> acts_;
  std::vector<RowMatrix> cols_;
  RowMatrix scratch_;
  int batch_ = 0;
};

inline constexpr double kLogFloor = 1e-12;

inline double loss_xent(std::span<const double> probabilities, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= probabilities.size()) {
    throw std::invalid_argument("label out of range");
  }
  return -std::log(std::max(probabilities[label], kLogFloor));
}

/// Class probabilities for one [C,H,W] input.
inline std::vector<double> forward(const ModelSpec& spec, const Parameters& params, std::span<const double> input) {
  check_parameters(spec, params);
  Network net(spec);
  const Matrix& probs = net.forward(params, input, 1);
  return {probs.data(), probs.data() + probs.rows()};
}

/// Gradient of loss_xent(forward(input), label) with respect to every parameter.
inline Parameters backward(const ModelSpec& spec, const Parameters& params, std::span<const double> input,
                           int label) {
  check_parameters(spec, params);
  Network net(spec);
  net.forward(params, input, 1);
  Parameters grads = zero_parameters(spec);
  const int labels[1] = {label};
  net.backward(params, labels, grads);
  return grads;
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step = 0;

  static AdamState for_parameters(const Parameters& p) {
    AdamState s;
    for (const auto& t : p.tensors) {
      s.m.emplace_back(t.size(), 0.0);
      s.v.emplace_back(t.size(), 0.0);
    }
    return s;
  }
};

inline void adam_step(Parameters& params, const Parameters& grads, AdamState& state, const AdamConfig& cfg) {
  if (state.m.size() != params.tensors.size()) state = AdamState::for_parameters(params);
  if (grads.tensors.size() != params.tensors.size()) throw std::invalid_argument("gradient shape mismatch");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    const auto n = static_cast<Eigen::Index>(params.tensors[i].size());
    if (grads.tensors[i].size() != params.tensors[i].size()) throw std::invalid_argument("gradient shape mismatch");
    Eigen::Map<Eigen::ArrayXd> p(params.tensors[i].data.data(), n);
    Eigen::Map<const Eigen::ArrayXd> g(grads.tensors[i].data.data(), n);
    Eigen::Map<Eigen::ArrayXd> m(state.m[i].data(), n);
    Eigen::Map<Eigen::ArrayXd> v(state.v[i].data(), n);
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.square();
    p -= cfg.learning_rate * (m / c1) / ((v / c2).sqrt() + cfg.epsilon);
  }
}

/// Random-access labelled samples, each [C,H,W] doubles.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual Shape3 shape() const = 0;
  virtual void fill(std::size_t index, double* out) const = 0;
  virtual int label(std::size_t index) const = 0;
};

struct TrainConfig {
  int batch_size = 32;
  int epochs = 20;
  AdamConfig adam;
  std::uint64_t seed = 0;
  const Parameters* init_parameters = nullptr;  // warm start
  std::size_t eval_limit = 0;                   // 0 = whole eval set
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double eval_loss = 0.0;
  double eval_accuracy = 0.0;
  bool has_eval = false;
};

struct TrainResult {
  Parameters params;
  std::vector<EpochStats> history;
};

struct EvalStats {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
};

inline EvalStats evaluate(Network& net, const Parameters& params, const SampleSource& data, std::size_t limit = 0,
                          int batch = 256) {
  const std::size_t n = limit ? std::min(limit, data.size()) : data.size();
  const int in_size = net.input_size();
  std::vector<double> buf;
  EvalStats stats;
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch)) {
    const int b = static_cast<int>(std::min<std::size_t>(batch, n - start));
    buf.resize(static_cast<std::size_t>(b) * in_size);
    for (int k = 0; k < b; ++k) data.fill(start + k, buf.data() + static_cast<std::size_t>(k) * in_size);
    const Matrix& probs = net.forward(params, buf, b);
    for (int k = 0; k < b; ++k) {
      const int y = data.label(start + k);
      Eigen::Index arg = 0;
      probs.col(k).maxCoeff(&arg);
      stats.loss += -std::log(std::max(probs(y, k), kLogFloor));
      stats.accuracy += (arg == y);
    }
  }
  stats.count = n;
  if (n) {
    stats.loss /= static_cast<double>(n);
    stats.accuracy /= static_cast<double>(n);
  }
  return stats;
}

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch Adam over shuffled epochs. Single-threaded and bit-reproducible
/// for a fixed seed.
inline TrainResult train(const ModelSpec& spec, const SampleSource& train_set, const TrainConfig& cfg,
                         const SampleSource* eval_set = nullptr, const EpochCallback& on_epoch = {}) {
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (train_set.size() == 0) throw std::invalid_argument("training set is empty");
  if (!(train_set.shape() == spec.input)) throw std::invalid_argument("dataset shape does not match model input");
  if (eval_set && !(eval_set->shape() == spec.input)) throw std::invalid_argument("eval set shape mismatch");

  TrainResult result;
  if (cfg.init_parameters) {
    check_parameters(spec, *cfg.init_parameters);
    result.params = *cfg.init_parameters;
  } else {
    result.params = init_parameters(spec, cfg.seed);
  }
  Network net(spec);
  Parameters grads = zero_parameters(spec);
  AdamState adam = AdamState::for_parameters(result.params);
  const int in_size = net.input_size();
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x5851f42d4c957f2dULL);
  std::vector<double> buf;
  std::vector<int> labels;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    double correct = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const int b = static_cast<int>(std::min<std::size_t>(cfg.batch_size, order.size() - start));
      buf.resize(static_cast<std::size_t>(b) * in_size);
      labels.resize(static_cast<std::size_t>(b));
      for (int k = 0; k < b; ++k) {
        train_set.fill(order[start + k], buf.data() + static_cast<std::size_t>(k) * in_size);
        labels[k] = train_set.label(order[start + k]);
      }
      const Matrix& probs = net.forward(result.params, buf, b);
      for (int k = 0; k < b; ++k) {
        Eigen::Index arg = 0;
        probs.col(k).maxCoeff(&arg);
        loss_sum += -std::log(std::max(probs(labels[k], k), kLogFloor));
        correct += (arg == labels[k]);
      }
      grads.set_zero();
      net.backward(result.params, labels, grads);
      adam_step(result.params, grads, adam, cfg.adam);
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(order.size());
    stats.train_accuracy = correct / static_cast<double>(order.size());
    if (eval_set && eval_set->size() > 0) {
      const EvalStats ev = evaluate(net, result.params, *eval_set, cfg.eval_limit);
      stats.eval_loss = ev.loss;
      stats.eval_accuracy = ev.accuracy;
      stats.has_eval = true;
    }
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

}  // namespace qeclab::nn
