#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "neurostream/core/types.hpp"
#include "neurostream/nn/checkpoint.hpp"
#include "neurostream/nn/layers.hpp"

// The convolutional autoencoder over (16, 10, 9) chunks.
//
// encoder: conv(1->16) -> BN -> ReLU -> conv(16->32) -> BN -> ReLU
//          -> pad width 9->10 -> maxpool(2,2,2) -> flatten -> linear(6400->code)
// decoder: linear(code->6400) -> reshape -> maxunpool -> crop width 10->9
//          -> deconv(32->16) -> BN -> ReLU -> deconv(16->1)
//
// One instance is single-threaded; run distinct instances on distinct threads.

namespace neurostream::ae {

struct AutoencoderConfig {
  std::size_t code_size = core::kLatentSize;
};

// How the decoder places pooled values when unpooling: indices saved by the
// paired encoder pass, or each value at its window origin (index-free).
enum class UnpoolMode { saved_indices, window_origin };

template <typename T>
class Autoencoder {
 public:
  static constexpr std::size_t kConvChannels1 = 16;
  static constexpr std::size_t kConvChannels2 = 32;
  static constexpr std::size_t kPooledD = core::kChunkTimesteps / 2;  // 8
  static constexpr std::size_t kPooledH = core::kGridRows / 2;        // 5
  static constexpr std::size_t kPooledW = (core::kGridCols + 1) / 2;  // 5
  static constexpr std::size_t kFlatSize =
      kConvChannels2 * kPooledD * kPooledH * kPooledW;  // 6400

  explicit Autoencoder(AutoencoderConfig cfg = {})
      : cfg_(cfg),
        conv1_(1, kConvChannels1, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}),
        bn1_(kConvChannels1),
        conv2_(kConvChannels1, kConvChannels2, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}),
        bn2_(kConvChannels2),
        pool_({2, 2, 2}, {2, 2, 2}),
        fc_enc_(kFlatSize, cfg.code_size),
        fc_dec_(cfg.code_size, kFlatSize),
        unpool_({2, 2, 2}, {2, 2, 2}),
        deconv1_(kConvChannels2, kConvChannels1, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}),
        bn3_(kConvChannels1),
        deconv2_(kConvChannels1, 1, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}),
        code_size_state_({1}) {
    if (cfg_.code_size < 1) throw Error("autoencoder code size must be >= 1");
    code_size_state_.fill(static_cast<T>(cfg_.code_size));
    if (cfg_.code_size == core::kLatentSize && compression_ratio() != 11.25)
      throw Error("autoencoder: compression ratio invariant violated");
  }

  const AutoencoderConfig& config() const { return cfg_; }
  double compression_ratio() const {
    return static_cast<double>(core::kChunkScalars) / static_cast<double>(cfg_.code_size);
  }

  void init(std::uint64_t seed) {
    nn::Rng rng(seed);
    conv1_.init(rng);
    bn1_.init(rng);
    conv2_.init(rng);
    bn2_.init(rng);
    fc_enc_.init(rng);
    fc_dec_.init(rng);
    deconv1_.init(rng);
    bn3_.init(rng);
    deconv2_.init(rng);
  }

  // (N, 1, 16, 10, 9) -> (N, code_size)
  nn::Tensor<T> encode_batch(const nn::Tensor<T>& x, bool training) {
    check_input_shape(x);
    batch_ = x.dim(0);
    auto h = conv1_.forward(x);
    h = relu1_.forward(bn1_.forward(h, training));
    h = conv2_.forward(h);
    h = relu2_.forward(bn2_.forward(h, training));
    h = nn::pad_last_dim(h, 1);  // width 9 -> 10 so 2x2x2 windows tile evenly
    h = pool_.forward(h);
    return fc_enc_.forward(h.reshaped({batch_, kFlatSize}));
  }

  // (N, code_size) -> (N, 1, 16, 10, 9)
  nn::Tensor<T> decode_batch(const nn::Tensor<T>& z, bool training,
                             UnpoolMode mode = UnpoolMode::saved_indices) {
    if (z.ndim() != 2 || z.dim(1) != cfg_.code_size)
      throw nn::ShapeMismatch("decoder expects (N, " + std::to_string(cfg_.code_size) +
                              ") codes, got " + nn::shape_str(z.shape()));
    const std::size_t n = z.dim(0);
    auto h = fc_dec_.forward(z);
    h = h.reshaped({n, kConvChannels2, kPooledD, kPooledH, kPooledW});
    if (mode == UnpoolMode::saved_indices) {
      if (pool_.indices().output_shape != h.shape())
        throw nn::ContextMismatch(
            "decoder has no pool indices matching batch size " + std::to_string(n) +
            "; encode first or use window-origin unpooling");
      h = unpool_.forward(h, pool_.indices());
    } else {
      const std::vector<std::size_t> padded{n, kConvChannels2, core::kChunkTimesteps,
                                            core::kGridRows, core::kGridCols + 1};
      h = unpool_.forward(
          h, nn::origin_pool_indices(padded, h.shape(), pool_.stride(), pool_.pad()));
    }
    h = nn::crop_last_dim(h, 1);  // width 10 -> 9
    h = deconv1_.forward(h);
    h = relu3_.forward(bn3_.forward(h, training));
    return deconv2_.forward(h);
  }

  nn::Tensor<T> reconstruct(const nn::Tensor<T>& x, bool training) {
    return decode_batch(encode_batch(x, training), training, UnpoolMode::saved_indices);
  }

  // Backpropagates the reconstruction gradient through decoder and encoder,
  // accumulating parameter gradients; returns the gradient w.r.t. the input.
  nn::Tensor<T> backward(const nn::Tensor<T>& grad_recon) {
    auto g = deconv2_.backward(grad_recon);
    g = bn3_.backward(relu3_.backward(g));
    g = deconv1_.backward(g);
    g = nn::pad_last_dim(g, 1);
    g = unpool_.backward(g);
    g = fc_dec_.backward(g.reshaped({batch_, kFlatSize}));
    g = fc_enc_.backward(g);
    g = g.reshaped({batch_, kConvChannels2, kPooledD, kPooledH, kPooledW});
    g = pool_.backward(g);
    g = nn::crop_last_dim(g, 1);
    g = bn2_.backward(relu2_.backward(g));
    g = conv2_.backward(g);
    g = bn1_.backward(relu1_.backward(g));
    return conv1_.backward(g);
  }

  void zero_grad() {
    conv1_.zero_grad();
    bn1_.zero_grad();
    conv2_.zero_grad();
    bn2_.zero_grad();
    fc_enc_.zero_grad();
    fc_dec_.zero_grad();
    deconv1_.zero_grad();
    bn3_.zero_grad();
    deconv2_.zero_grad();
  }

  std::vector<nn::ParamRef<T>> params() {
    std::vector<nn::ParamRef<T>> out;
    for (auto&& group :
         {conv1_.params("encoder.conv1"), bn1_.params("encoder.bn1"),
          conv2_.params("encoder.conv2"), bn2_.params("encoder.bn2"),
          fc_enc_.params("encoder.fc"), fc_dec_.params("decoder.fc"),
          deconv1_.params("decoder.deconv1"), bn3_.params("decoder.bn1"),
          deconv2_.params("decoder.deconv2")})
      out.insert(out.end(), group.begin(), group.end());
    return out;
  }

  std::vector<nn::StateRef<T>> state() {
    std::vector<nn::StateRef<T>> out{{"config.code_size", &code_size_state_}};
    for (auto&& group :
         {conv1_.state("encoder.conv1"), bn1_.state("encoder.bn1"),
          conv2_.state("encoder.conv2"), bn2_.state("encoder.bn2"),
          fc_enc_.state("encoder.fc"), fc_dec_.state("decoder.fc"),
          deconv1_.state("decoder.deconv1"), bn3_.state("decoder.bn1"),
          deconv2_.state("decoder.deconv2")})
      out.insert(out.end(), group.begin(), group.end());
    return out;
  }

  void save(const std::string& path) { nn::checkpoint_save(path, state()); }
  void load(const std::string& path) {
    nn::checkpoint_load(path, state());
    const auto cs = static_cast<std::size_t>(code_size_state_.values()[0]);
    if (cs != cfg_.code_size)
      throw nn::CorruptCheckpoint("checkpoint tensor 'config.code_size' is " +
                                  std::to_string(cs) + ", model expects " +
                                  std::to_string(cfg_.code_size));
  }

  static Autoencoder from_checkpoint(const std::string& path) {
    const nn::CheckpointMap map = nn::checkpoint_read(path);
    const auto it = map.find("config.code_size");
    if (it == map.end() || it->second.data.size() != 1)
      throw nn::CorruptCheckpoint("checkpoint " + path +
                                  " is missing tensor 'config.code_size'");
    AutoencoderConfig cfg;
    cfg.code_size = static_cast<std::size_t>(it->second.data[0]);
    Autoencoder model(cfg);
    model.load(path);
    return model;
  }

  // Deployment path: one chunk in eval mode. Requires the default code size
  // because LatentCode carries exactly 128 values.
  core::LatentCode encode(const core::Chunk& chunk) {
    chunk.validate();
    if (cfg_.code_size != core::kLatentSize)
      throw core::ShapeError("latent codes require code size 128, model has " +
                             std::to_string(cfg_.code_size));
    const auto code = encode_batch(chunk_to_tensor(chunk), false);
    core::LatentCode lc;
    lc.values.assign(code.ptr(), code.ptr() + cfg_.code_size);
    lc.timestamp_ns = chunk.start_timestamp_ns;
    return lc;
  }

  core::Chunk decode(const core::LatentCode& code,
                     UnpoolMode mode = UnpoolMode::window_origin) {
    code.validate();
    if (cfg_.code_size != core::kLatentSize)
      throw core::ShapeError("latent codes require code size 128, model has " +
                             std::to_string(cfg_.code_size));
    nn::Tensor<T> z({1, cfg_.code_size});
    for (std::size_t i = 0; i < cfg_.code_size; ++i)
      z.ptr()[i] = static_cast<T>(code.values[i]);
    const auto y = decode_batch(z, false, mode);
    core::Chunk chunk;
    for (std::size_t i = 0; i < core::kChunkScalars; ++i)
      chunk.data[i] = static_cast<float>(y.ptr()[i]);
    chunk.start_timestamp_ns = code.timestamp_ns;
    return chunk;
  }

  static nn::Tensor<T> chunk_to_tensor(const core::Chunk& chunk) {
    nn::Tensor<T> x({1, 1, core::kChunkTimesteps, core::kGridRows, core::kGridCols});
    for (std::size_t i = 0; i < core::kChunkScalars; ++i)
      x.ptr()[i] = static_cast<T>(chunk.data[i]);
    return x;
  }

  static nn::Tensor<T> chunks_to_tensor(std::span<const core::Chunk> chunks) {
    nn::Tensor<T> x({chunks.size(), 1, core::kChunkTimesteps, core::kGridRows,
                     core::kGridCols});
    T* p = x.ptr();
    for (const core::Chunk& c : chunks) {
      for (std::size_t i = 0; i < core::kChunkScalars; ++i)
        p[i] = static_cast<T>(c.data[i]);
      p += core::kChunkScalars;
    }
    return x;
  }

  const nn::PoolIndices& last_indices() const { return pool_.indices(); }

 private:
  static void check_input_shape(const nn::Tensor<T>& x) {
    if (x.ndim() != 5 || x.dim(1) != 1 || x.dim(2) != core::kChunkTimesteps ||
        x.dim(3) != core::kGridRows || x.dim(4) != core::kGridCols)
      throw nn::ShapeMismatch("encoder expects (N, 1, 16, 10, 9), got " +
                              nn::shape_str(x.shape()));
  }

  AutoencoderConfig cfg_;
  nn::Conv3d<T> conv1_;
  nn::BatchNorm3d<T> bn1_;
  nn::ReLU<T> relu1_;
  nn::Conv3d<T> conv2_;
  nn::BatchNorm3d<T> bn2_;
  nn::ReLU<T> relu2_;
  nn::MaxPool3d<T> pool_;
  nn::Linear<T> fc_enc_;
  nn::Linear<T> fc_dec_;
  nn::MaxUnpool3d<T> unpool_;
  nn::ConvTranspose3d<T> deconv1_;
  nn::BatchNorm3d<T> bn3_;
  nn::ReLU<T> relu3_;
  nn::ConvTranspose3d<T> deconv2_;
  nn::Tensor<T> code_size_state_;
  std::size_t batch_ = 0;
};

}  // namespace neurostream::ae
