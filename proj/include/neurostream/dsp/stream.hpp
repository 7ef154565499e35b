#pragma once

#include <optional>

#include "neurostream/core/types.hpp"
#include "neurostream/dsp/design.hpp"

namespace neurostream::dsp {

struct ChannelCountChanged : Error {
  using Error::Error;
};
struct RateNotDivisible : Error {
  using Error::Error;
};

// Streams frames through a biquad cascade with per-channel state, so
// frame-by-frame filtering equals whole-signal filtering bit for bit.
// Internal state is double; samples stay float32 on the frame.
class StreamFilter {
 public:
  explicit StreamFilter(BiquadCascade cascade);

  core::NeuroFrame apply(const core::NeuroFrame& frame);
  void reset();

  const BiquadCascade& cascade() const { return cascade_; }

 private:
  BiquadCascade cascade_;
  std::size_t channels_ = 0;
  bool initialized_ = false;
  std::vector<double> z1_, z2_;  // [section][channel]
  std::uint64_t samples_seen_ = 0;
};

// Keeps every factor-th sample; the phase counter carries across frames.
class Decimator {
 public:
  explicit Decimator(unsigned factor = 4);

  // Empty when the frame is too short for any sample to survive this phase.
  std::optional<core::NeuroFrame> apply(const core::NeuroFrame& frame);
  void reset();

  unsigned factor() const { return factor_; }

 private:
  unsigned factor_;
  unsigned phase_ = 0;
  std::uint64_t out_seq_ = 0;
};

// The preprocessing chain: 50 Hz notch, Butterworth band-pass 0.5-60 Hz, 4x
// decimation. Frames within the first two seconds are flagged as settling.
struct DspChainConfig {
  double notch_hz = 50.0;
  double notch_q = 30.0;
  double band_low_hz = 0.5;
  double band_high_hz = 60.0;
  int band_order = 5;
  unsigned decimation = 4;
  double settling_seconds = 2.0;
};

class DspChain {
 public:
  DspChain(double fs, const DspChainConfig& config = {});

  std::optional<core::NeuroFrame> apply(const core::NeuroFrame& frame);
  void reset();

  double input_rate() const { return fs_; }
  double output_rate() const { return fs_ / config_.decimation; }
  const DspChainConfig& config() const { return config_; }

 private:
  double fs_;
  DspChainConfig config_;
  StreamFilter notch_;
  StreamFilter band_;
  Decimator decimator_;
  std::uint64_t samples_seen_ = 0;
};

}  // namespace neurostream::dsp
