#include "neurostream/bus/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace neurostream::bus {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double grid_distance(const core::ChannelGrid& grid, const std::string& label, double row,
                     double col) {
  const auto pos = grid.find(label);
  // Channels outside the default montage sit at a fixed moderate distance so
  // custom labels still receive some source signal.
  const double r = pos ? pos->row : 4.5;
  const double c = pos ? pos->col : 4.0;
  return std::hypot(r - row, c - col);
}

}  // namespace

std::vector<std::string> default_channel_order() {
  const auto& grid = core::default_grid();
  std::vector<std::pair<core::CellPos, std::string>> cells;
  cells.reserve(grid.channel_count());
  for (const auto& [label, pos] : grid.placement()) cells.emplace_back(pos, label);
  std::sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) {
    return std::pair(a.first.row, a.first.col) < std::pair(b.first.row, b.first.col);
  });
  std::vector<std::string> labels;
  labels.reserve(cells.size());
  for (auto& [pos, label] : cells) labels.push_back(std::move(label));
  return labels;
}

double SyntheticEeg::Pink::step(double white) {
  b0 = 0.99765 * b0 + white * 0.0990460;
  b1 = 0.96300 * b1 + white * 0.2965164;
  b2 = 0.57000 * b2 + white * 1.0526913;
  return b0 + b1 + b2 + white * 0.1848;
}

SyntheticEeg::SyntheticEeg(SynthConfig config)
    : config_(std::move(config)), rng_(config_.seed * 0x9e3779b9u + 17u) {
  if (config_.sampling_rate <= 0)
    throw core::ShapeError("synthetic sampling rate must be positive");
  channels_ = config_.channels.empty() ? default_channel_order() : config_.channels;
  if (channels_.empty()) throw core::ShapeError("synthetic generator needs at least one channel");

  // Source centers, in grid cells: alpha posterior midline, beta frontal
  // midline, broadband patches over the left and right temporal chains.
  const auto& grid = core::default_grid();
  const std::size_t n = channels_.size();
  alpha_gain_.resize(n);
  beta_gain_.resize(n);
  patch1_gain_.resize(n);
  patch2_gain_.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    const double inv = 1.0 / config_.spatial_lambda;
    alpha_gain_[c] = std::exp(-grid_distance(grid, channels_[c], 8.0, 4.0) * inv);
    beta_gain_[c] = std::exp(-grid_distance(grid, channels_[c], 1.0, 4.0) * inv);
    patch1_gain_[c] = std::exp(-grid_distance(grid, channels_[c], 4.0, 1.0) * inv);
    patch2_gain_[c] = std::exp(-grid_distance(grid, channels_[c], 4.0, 7.0) * inv);
  }

  alpha_phase_ = rng_.u01() * kTwoPi;
  beta_phase_ = rng_.u01() * kTwoPi;
  line_phase_ = rng_.u01() * kTwoPi;
  channel_pink_.resize(n);
}

void SyntheticEeg::generate(std::size_t num_samples, std::vector<float>& out) {
  const std::size_t n = channels_.size();
  out.reserve(out.size() + num_samples * n);
  for (std::size_t s = 0; s < num_samples; ++s) {
    const double t = static_cast<double>(sample_index_++) / config_.sampling_rate;
    const double alpha = config_.alpha_amp * std::sin(kTwoPi * config_.alpha_hz * t + alpha_phase_);
    const double beta = config_.beta_amp * std::sin(kTwoPi * config_.beta_hz * t + beta_phase_);
    const double line = config_.line_amp * std::sin(kTwoPi * config_.line_hz * t + line_phase_);
    const double p1 = config_.patch_noise_amp * patch1_.step(rng_.normal());
    const double p2 = config_.patch_noise_amp * patch2_.step(rng_.normal());
    for (std::size_t c = 0; c < n; ++c) {
      const double own = config_.channel_noise_amp * channel_pink_[c].step(rng_.normal());
      const double v = alpha_gain_[c] * alpha + beta_gain_[c] * beta + line +
                       patch1_gain_[c] * p1 + patch2_gain_[c] * p2 + own;
      out.push_back(static_cast<float>(v));
    }
  }
}

core::NeuroFrame SyntheticEeg::next_frame(std::size_t num_samples) {
  core::NeuroFrame frame;
  frame.seq = next_seq_++;
  frame.timestamp_ns =
      static_cast<std::uint64_t>(1e9 * static_cast<double>(sample_index_) / config_.sampling_rate);
  frame.sampling_rate = config_.sampling_rate;
  frame.num_samples = num_samples;
  frame.channel_names = channels_;
  frame.flags = 0;
  generate(num_samples, frame.samples);
  return frame;
}

}  // namespace neurostream::bus
