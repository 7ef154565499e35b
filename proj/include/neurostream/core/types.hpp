#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace neurostream {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace core {

struct ShapeError : Error {
  using Error::Error;
};
struct MissingChannel : Error {
  using Error::Error;
};

inline constexpr std::size_t kChunkTimesteps = 16;
inline constexpr std::size_t kGridRows = 10;
inline constexpr std::size_t kGridCols = 9;
inline constexpr std::size_t kChunkScalars = kChunkTimesteps * kGridRows * kGridCols;
inline constexpr std::size_t kLatentSize = 128;

// NeuroFrame flag bits.
inline constexpr std::uint32_t kFrameSettling = 1u << 0;

// One timestamped block of multichannel samples, the unit of transport on
// the bus. Samples are row-major (num_samples x num_channels), microvolts.
struct NeuroFrame {
  std::uint64_t seq = 0;
  std::uint64_t timestamp_ns = 0;  // since stream start
  double sampling_rate = 0.0;      // Hz
  std::uint32_t flags = 0;
  std::vector<std::string> channel_names;
  std::size_t num_samples = 0;
  std::vector<float> samples;

  std::size_t num_channels() const { return channel_names.size(); }

  float& at(std::size_t sample, std::size_t channel) {
    return samples[sample * channel_names.size() + channel];
  }
  float at(std::size_t sample, std::size_t channel) const {
    return samples[sample * channel_names.size() + channel];
  }

  bool settling() const { return (flags & kFrameSettling) != 0; }

  void validate() const {
    if (num_samples < 1) throw ShapeError("NeuroFrame: num_samples must be >= 1");
    if (sampling_rate <= 0.0) throw ShapeError("NeuroFrame: sampling_rate must be positive");
    if (samples.size() != num_samples * channel_names.size())
      throw ShapeError("NeuroFrame: sample matrix is not num_samples x num_channels");
    for (float v : samples)
      if (!std::isfinite(v)) throw ShapeError("NeuroFrame: non-finite sample value");
  }
};

// A (16, 10, 9) block of grid-rendered samples feeding the encoder.
struct Chunk {
  std::vector<float> data;  // row-major (t, row, col)
  std::uint64_t start_timestamp_ns = 0;

  Chunk() : data(kChunkScalars, 0.0f) {}

  float& at(std::size_t t, std::size_t r, std::size_t c) {
    return data[(t * kGridRows + r) * kGridCols + c];
  }
  float at(std::size_t t, std::size_t r, std::size_t c) const {
    return data[(t * kGridRows + r) * kGridCols + c];
  }

  void validate() const {
    if (data.size() != kChunkScalars) throw ShapeError("Chunk: expected 16x10x9 = 1440 scalars");
    for (float v : data)
      if (!std::isfinite(v)) throw ShapeError("Chunk: non-finite value");
  }
};

// The encoder's 128-value compressed representation of one chunk.
struct LatentCode {
  std::vector<float> values;
  std::uint64_t source_seq = 0;
  std::uint64_t timestamp_ns = 0;

  void validate() const {
    if (values.size() != kLatentSize) throw ShapeError("LatentCode: expected exactly 128 values");
    for (float v : values)
      if (!std::isfinite(v)) throw ShapeError("LatentCode: non-finite value");
  }
};

}  // namespace core
}  // namespace neurostream
