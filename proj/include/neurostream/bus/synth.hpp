#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "neurostream/core/grid.hpp"
#include "neurostream/core/types.hpp"
#include "neurostream/nn/tensor.hpp"

namespace neurostream::bus {

// Synthetic multichannel EEG: two oscillatory sources (alpha over the
// parieto-occipital sites, beta over the frontal sites) whose gain decays
// exponentially with grid distance, two 1/f noise patches over the temporal
// sites, per-channel 1/f background, and a common-mode mains component.
// Amplitudes are in microvolts. Output is a pure function of the config.
struct SynthConfig {
  std::vector<std::string> channels;  // empty -> default grid, row-major order
  double sampling_rate = 512.0;
  std::uint64_t seed = 0;

  double alpha_hz = 10.0;
  double alpha_amp = 20.0;
  double beta_hz = 20.0;
  double beta_amp = 10.0;
  double line_hz = 50.0;
  double line_amp = 15.0;
  double patch_noise_amp = 8.0;
  double channel_noise_amp = 2.0;
  double spatial_lambda = 2.0;  // e-folding distance of source gain, in cells
};

class SyntheticEeg {
 public:
  explicit SyntheticEeg(SynthConfig config = {});

  const std::vector<std::string>& channels() const { return channels_; }
  double sampling_rate() const { return config_.sampling_rate; }

  // Appends num_samples rows (row-major, one column per channel) to out.
  void generate(std::size_t num_samples, std::vector<float>& out);

  // Packages the next num_samples rows as a frame with consecutive sequence
  // numbers and sample-accurate timestamps.
  core::NeuroFrame next_frame(std::size_t num_samples);

 private:
  struct Pink {  // Kellet's 3-pole pinking filter
    double b0 = 0, b1 = 0, b2 = 0;
    double step(double white);
  };

  SynthConfig config_;
  std::vector<std::string> channels_;
  std::vector<double> alpha_gain_, beta_gain_, patch1_gain_, patch2_gain_;
  double alpha_phase_ = 0, beta_phase_ = 0, line_phase_ = 0;
  Pink patch1_, patch2_;
  std::vector<Pink> channel_pink_;
  nn::Rng rng_;
  std::uint64_t sample_index_ = 0;
  std::uint64_t next_seq_ = 0;
};

// The default grid's labels ordered row-major by cell position.
std::vector<std::string> default_channel_order();

}  // namespace neurostream::bus
