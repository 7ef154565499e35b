#include "neurostream/dsp/stream.hpp"

#include <cmath>

namespace neurostream::dsp {

StreamFilter::StreamFilter(BiquadCascade cascade) : cascade_(std::move(cascade)) {}

void StreamFilter::reset() {
  initialized_ = false;
  channels_ = 0;
  samples_seen_ = 0;
  z1_.clear();
  z2_.clear();
}

core::NeuroFrame StreamFilter::apply(const core::NeuroFrame& frame) {
  const std::size_t channels = frame.num_channels();
  if (!initialized_) {
    channels_ = channels;
    z1_.assign(cascade_.sections.size() * channels, 0.0);
    z2_.assign(cascade_.sections.size() * channels, 0.0);
    initialized_ = true;
  } else if (channels != channels_) {
    throw ChannelCountChanged("filter stream: channel count changed from " +
                              std::to_string(channels_) + " to " + std::to_string(channels));
  }

  core::NeuroFrame out = frame;
  const std::size_t sections = cascade_.sections.size();
  for (std::size_t ch = 0; ch < channels; ++ch) {
    for (std::size_t i = 0; i < frame.num_samples; ++i) {
      double x = static_cast<double>(frame.samples[i * channels + ch]);
      for (std::size_t s = 0; s < sections; ++s) {
        const BiquadSection& sec = cascade_.sections[s];
        double& z1 = z1_[s * channels + ch];
        double& z2 = z2_[s * channels + ch];
        // transposed direct form II
        const double y = sec.b0 * x + z1;
        z1 = sec.b1 * x - sec.a1 * y + z2;
        z2 = sec.b2 * x - sec.a2 * y;
        x = y;
      }
      out.samples[i * channels + ch] = static_cast<float>(x);
    }
  }
  samples_seen_ += frame.num_samples;
  return out;
}

Decimator::Decimator(unsigned factor) : factor_(factor) {
  if (factor_ < 1) throw RateNotDivisible("decimation factor must be >= 1");
}

void Decimator::reset() {
  phase_ = 0;
  out_seq_ = 0;
}

std::optional<core::NeuroFrame> Decimator::apply(const core::NeuroFrame& frame) {
  const double divided = frame.sampling_rate / factor_;
  if (std::abs(frame.sampling_rate - divided * factor_) > 1e-9 ||
      std::fmod(frame.sampling_rate, static_cast<double>(factor_)) != 0.0)
    throw RateNotDivisible("sampling rate " + std::to_string(frame.sampling_rate) +
                           " not divisible by " + std::to_string(factor_));

  const std::size_t channels = frame.num_channels();
  core::NeuroFrame out;
  out.sampling_rate = divided;
  out.channel_names = frame.channel_names;
  out.flags = frame.flags;

  bool first = true;
  for (std::size_t i = 0; i < frame.num_samples; ++i) {
    if (phase_ == 0) {
      if (first) {
        out.timestamp_ns = frame.timestamp_ns + static_cast<std::uint64_t>(std::llround(
                                                    1e9 * i / frame.sampling_rate));
        first = false;
      }
      out.samples.insert(out.samples.end(), frame.samples.begin() + i * channels,
                         frame.samples.begin() + (i + 1) * channels);
      ++out.num_samples;
    }
    phase_ = (phase_ + 1) % factor_;
  }
  if (out.num_samples == 0) return std::nullopt;
  out.seq = out_seq_++;
  return out;
}

DspChain::DspChain(double fs, const DspChainConfig& config)
    : fs_(fs),
      config_(config),
      notch_(design_notch(config.notch_hz, config.notch_q, fs)),
      band_(design_butterworth_bandpass(config.band_order, config.band_low_hz,
                                        config.band_high_hz, fs)),
      decimator_(config.decimation) {
  if (std::fmod(fs, static_cast<double>(config.decimation)) != 0.0)
    throw RateNotDivisible("chain input rate not divisible by decimation factor");
}

void DspChain::reset() {
  notch_.reset();
  band_.reset();
  decimator_.reset();
  samples_seen_ = 0;
}

std::optional<core::NeuroFrame> DspChain::apply(const core::NeuroFrame& frame) {
  core::NeuroFrame filtered = band_.apply(notch_.apply(frame));
  const bool settling =
      static_cast<double>(samples_seen_) / fs_ < config_.settling_seconds;
  samples_seen_ += frame.num_samples;
  auto out = decimator_.apply(filtered);
  if (out && settling) out->flags |= core::kFrameSettling;
  return out;
}

}  // namespace neurostream::dsp
