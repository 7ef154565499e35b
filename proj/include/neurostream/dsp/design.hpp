#pragma once

#include <complex>
#include <string>
#include <vector>

#include "neurostream/core/types.hpp"

namespace neurostream::dsp {

struct InvalidFrequency : Error {
  using Error::Error;
};

// One second-order section, a0 normalized to 1:
//   y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]
struct BiquadSection {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;

  bool stable() const;
};

struct BiquadCascade {
  std::vector<BiquadSection> sections;

  bool stable() const;
  std::complex<double> response(double freq_hz, double fs) const;
  double magnitude(double freq_hz, double fs) const;
  double magnitude_db(double freq_hz, double fs) const;  // floored at -300 dB
};

// Narrow band-reject biquad at center_hz with quality factor q (RBJ form):
// unity gain at DC and Nyquist, exact zero at the center frequency.
BiquadCascade design_notch(double center_hz, double q, double fs);

// Band-pass from an analog Butterworth prototype of the given order, warped
// through the bilinear transform; realized as `order` second-order sections.
BiquadCascade design_butterworth_bandpass(int order, double low_hz, double high_hz, double fs);

// Plain-text SOS table, one section per line: b0 b1 b2 a1 a2, 17 significant
// digits, for cross-implementation comparison.
std::string sos_to_text(const BiquadCascade& cascade);
BiquadCascade sos_from_text(const std::string& text);

}  // namespace neurostream::dsp
