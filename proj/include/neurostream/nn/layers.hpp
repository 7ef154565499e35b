#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "neurostream/nn/ops.hpp"
#include "neurostream/nn/tensor.hpp"

// Concrete layer classes: parameters + gradient buffers + the saved forward
// context. No virtual dispatch — the model wires a fixed pipeline. Backward
// consumes the saved context exactly once (second call throws ContextMismatch).

namespace neurostream::nn {

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;
};

// Non-trainable state included (running statistics) — checkpoint granularity.
template <typename T>
struct StateRef {
  std::string name;
  Tensor<T>* value = nullptr;
};

namespace detail {

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  if (dst.shape() != src.shape())
    throw ShapeMismatch("gradient accumulate: " + shape_str(dst.shape()) + " vs " +
                        shape_str(src.shape()));
  T* d = dst.ptr();
  const T* s = src.ptr();
  for (std::size_t i = 0; i < dst.numel(); ++i) d[i] += s[i];
}

}  // namespace detail

// Appends `count` zero columns on the right of the last axis.
template <typename T>
Tensor<T> pad_last_dim(const Tensor<T>& x, std::size_t count) {
  auto shape = x.shape();
  if (shape.empty()) throw ShapeMismatch("pad_last_dim on 0-D tensor");
  const std::size_t w = shape.back();
  shape.back() = w + count;
  Tensor<T> y(shape);
  const std::size_t rows = w == 0 ? 0 : x.numel() / w;
  const T* xp = x.ptr();
  T* yp = y.ptr();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < w; ++i) yp[r * (w + count) + i] = xp[r * w + i];
  return y;
}

template <typename T>
Tensor<T> crop_last_dim(const Tensor<T>& x, std::size_t count) {
  auto shape = x.shape();
  if (shape.empty() || shape.back() <= count)
    throw ShapeMismatch("crop_last_dim: axis too small");
  const std::size_t w = shape.back();
  shape.back() = w - count;
  Tensor<T> y(shape);
  const std::size_t rows = x.numel() / w;
  const T* xp = x.ptr();
  T* yp = y.ptr();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i + count < w; ++i) yp[r * (w - count) + i] = xp[r * w + i];
  return y;
}

template <typename T>
class Conv3d {
 public:
  Conv3d(std::size_t in_ch, std::size_t out_ch, Dims3 kernel, Dims3 stride = {1, 1, 1},
         Dims3 pad = {0, 0, 0})
      : in_ch_(in_ch),
        kernel_(kernel),
        stride_(stride),
        pad_(pad),
        weight_({out_ch, in_ch, kernel.d, kernel.h, kernel.w}),
        bias_({out_ch}),
        grad_weight_(weight_.shape()),
        grad_bias_({out_ch}) {}

  void init(Rng& rng) {
    const double fan_in =
        static_cast<double>(in_ch_ * kernel_.d * kernel_.h * kernel_.w);
    rng.fill_uniform(weight_, -std::sqrt(6.0 / fan_in), std::sqrt(6.0 / fan_in));
    rng.fill_uniform(bias_, -1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    saved_input_ = x;
    Tensor<T> out;
    conv3d_forward_into(x, weight_, bias_, stride_, pad_, out, scratch_);
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    if (saved_input_.numel() == 0) throw ContextMismatch("conv3d backward without forward");
    auto g = conv3d_backward(saved_input_, weight_, true, stride_, pad_, grad_out);
    detail::accumulate(grad_weight_, g.weight);
    detail::accumulate(grad_bias_, g.bias);
    saved_input_ = Tensor<T>();
    return std::move(g.input);
  }

  void zero_grad() {
    grad_weight_.zero();
    grad_bias_.zero();
  }
  std::vector<ParamRef<T>> params(const std::string& prefix) {
    return {{prefix + ".weight", &weight_, &grad_weight_},
            {prefix + ".bias", &bias_, &grad_bias_}};
  }
  std::vector<StateRef<T>> state(const std::string& prefix) {
    return {{prefix + ".weight", &weight_}, {prefix + ".bias", &bias_}};
  }
  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  std::size_t in_ch_;
  Dims3 kernel_, stride_, pad_;
  Tensor<T> weight_, bias_, grad_weight_, grad_bias_;
  Tensor<T> saved_input_, scratch_;
};

template <typename T>
class ConvTranspose3d {
 public:
  ConvTranspose3d(std::size_t in_ch, std::size_t out_ch, Dims3 kernel,
                  Dims3 stride = {1, 1, 1}, Dims3 pad = {0, 0, 0},
                  Dims3 output_pad = {0, 0, 0})
      : in_ch_(in_ch),
        kernel_(kernel),
        stride_(stride),
        pad_(pad),
        output_pad_(output_pad),
        weight_({in_ch, out_ch, kernel.d, kernel.h, kernel.w}),
        bias_({out_ch}),
        grad_weight_(weight_.shape()),
        grad_bias_({out_ch}) {}

  void init(Rng& rng) {
    const double fan_in =
        static_cast<double>(in_ch_ * kernel_.d * kernel_.h * kernel_.w);
    rng.fill_uniform(weight_, -std::sqrt(6.0 / fan_in), std::sqrt(6.0 / fan_in));
    rng.fill_uniform(bias_, -1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    saved_input_ = x;
    return conv3d_transpose_forward(x, weight_, bias_, stride_, pad_, output_pad_);
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    if (saved_input_.numel() == 0)
      throw ContextMismatch("conv3d_transpose backward without forward");
    auto g = conv3d_transpose_backward(saved_input_, weight_, true, stride_, pad_,
                                       output_pad_, grad_out);
    detail::accumulate(grad_weight_, g.weight);
    detail::accumulate(grad_bias_, g.bias);
    saved_input_ = Tensor<T>();
    return std::move(g.input);
  }

  void zero_grad() {
    grad_weight_.zero();
    grad_bias_.zero();
  }
  std::vector<ParamRef<T>> params(const std::string& prefix) {
    return {{prefix + ".weight", &weight_, &grad_weight_},
            {prefix + ".bias", &bias_, &grad_bias_}};
  }
  std::vector<StateRef<T>> state(const std::string& prefix) {
    return {{prefix + ".weight", &weight_}, {prefix + ".bias", &bias_}};
  }
  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  std::size_t in_ch_;
  Dims3 kernel_, stride_, pad_, output_pad_;
  Tensor<T> weight_, bias_, grad_weight_, grad_bias_;
  Tensor<T> saved_input_;
};

template <typename T>
class BatchNorm3d {
 public:
  explicit BatchNorm3d(std::size_t channels, T momentum = T(0.1), T eps = T(1e-5))
      : momentum_(momentum),
        eps_(eps),
        gamma_({channels}),
        beta_({channels}),
        grad_gamma_({channels}),
        grad_beta_({channels}),
        running_mean_({channels}),
        running_var_({channels}) {
    gamma_.fill(T(1));
    running_var_.fill(T(1));
  }

  void init(Rng&) {}  // deterministic: gamma 1, beta 0

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    auto y = batchnorm_forward(x, gamma_, beta_, running_mean_, running_var_, training,
                               momentum_, eps_, &ctx_);
    has_ctx_ = true;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    if (!has_ctx_) throw ContextMismatch("batchnorm backward without forward");
    auto g = batchnorm_backward(ctx_, gamma_, grad_out);
    detail::accumulate(grad_gamma_, g.gamma);
    detail::accumulate(grad_beta_, g.beta);
    has_ctx_ = false;
    return std::move(g.input);
  }

  void zero_grad() {
    grad_gamma_.zero();
    grad_beta_.zero();
  }
  std::vector<ParamRef<T>> params(const std::string& prefix) {
    return {{prefix + ".weight", &gamma_, &grad_gamma_},
            {prefix + ".bias", &beta_, &grad_beta_}};
  }
  std::vector<StateRef<T>> state(const std::string& prefix) {
    return {{prefix + ".weight", &gamma_},
            {prefix + ".bias", &beta_},
            {prefix + ".running_mean", &running_mean_},
            {prefix + ".running_var", &running_var_}};
  }
  Tensor<T>& running_mean() { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }

 private:
  T momentum_, eps_;
  Tensor<T> gamma_, beta_, grad_gamma_, grad_beta_;
  Tensor<T> running_mean_, running_var_;
  BatchNormContext<T> ctx_;
  bool has_ctx_ = false;
};

template <typename T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    saved_input_ = x;
    return relu_forward(x);
  }
  Tensor<T> backward(const Tensor<T>& grad_out) {
    if (saved_input_.numel() == 0) throw ContextMismatch("relu backward without forward");
    auto g = relu_backward(saved_input_, grad_out);
    saved_input_ = Tensor<T>();
    return g;
  }

 private:
  Tensor<T> saved_input_;
};

template <typename T>
class MaxPool3d {
 public:
  MaxPool3d(Dims3 kernel, Dims3 stride, Dims3 pad = {0, 0, 0})
      : kernel_(kernel), stride_(stride), pad_(pad) {}

  Tensor<T> forward(const Tensor<T>& x) {
    auto [y, ind] = maxpool3d_forward(x, kernel_, stride_, pad_);
    indices_ = std::move(ind);
    has_ctx_ = true;
    return std::move(y);
  }
  Tensor<T> backward(const Tensor<T>& grad_out) {
    if (!has_ctx_) throw ContextMismatch("maxpool backward without forward");
    has_ctx_ = false;
    return maxpool3d_backward(indices_, grad_out);
  }
  const PoolIndices& indices() const { return indices_; }
  Dims3 kernel() const { return kernel_; }
  Dims3 stride() const { return stride_; }
  Dims3 pad() const { return pad_; }

 private:
  Dims3 kernel_, stride_, pad_;
  PoolIndices indices_;
  bool has_ctx_ = false;
};

template <typename T>
class MaxUnpool3d {
 public:
  MaxUnpool3d(Dims3 kernel, Dims3 stride, Dims3 pad = {0, 0, 0})
      : kernel_(kernel), stride_(stride), pad_(pad) {}

  Tensor<T> forward(const Tensor<T>& x, const PoolIndices& indices) {
    indices_ = indices;
    has_ctx_ = true;
    return maxunpool3d_forward(x, indices_, kernel_, stride_, pad_);
  }
  Tensor<T> backward(const Tensor<T>& grad_out) {
    if (!has_ctx_) throw ContextMismatch("maxunpool backward without forward");
    has_ctx_ = false;
    return maxunpool3d_backward(indices_, grad_out);
  }

 private:
  Dims3 kernel_, stride_, pad_;
  PoolIndices indices_;
  bool has_ctx_ = false;
};

template <typename T>
class Linear {
 public:
  Linear(std::size_t in_features, std::size_t out_features)
      : in_features_(in_features),
        weight_({out_features, in_features}),
        bias_({out_features}),
        grad_weight_(weight_.shape()),
        grad_bias_({out_features}) {}

  void init(Rng& rng) {
    const double fan_in = static_cast<double>(in_features_);
    rng.fill_uniform(weight_, -std::sqrt(6.0 / fan_in), std::sqrt(6.0 / fan_in));
    rng.fill_uniform(bias_, -1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    saved_input_ = x;
    return linear_forward(x, weight_, bias_);
  }
  Tensor<T> backward(const Tensor<T>& grad_out) {
    if (saved_input_.numel() == 0) throw ContextMismatch("linear backward without forward");
    auto g = linear_backward(saved_input_, weight_, true, grad_out);
    detail::accumulate(grad_weight_, g.weight);
    detail::accumulate(grad_bias_, g.bias);
    saved_input_ = Tensor<T>();
    return std::move(g.input);
  }

  void zero_grad() {
    grad_weight_.zero();
    grad_bias_.zero();
  }
  std::vector<ParamRef<T>> params(const std::string& prefix) {
    return {{prefix + ".weight", &weight_, &grad_weight_},
            {prefix + ".bias", &bias_, &grad_bias_}};
  }
  std::vector<StateRef<T>> state(const std::string& prefix) {
    return {{prefix + ".weight", &weight_}, {prefix + ".bias", &bias_}};
  }
  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  std::size_t in_features_;
  Tensor<T> weight_, bias_, grad_weight_, grad_bias_;
  Tensor<T> saved_input_;
};

}  // namespace neurostream::nn
