#include "neurostream/dsp/design.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

namespace neurostream::dsp {

namespace {

using cd = std::complex<double>;
constexpr double kPi = std::numbers::pi;

// Roots of z^2 + a1 z + a2.
std::pair<cd, cd> section_poles(const BiquadSection& s) {
  const cd disc = std::sqrt(cd(s.a1 * s.a1 - 4.0 * s.a2, 0.0));
  return {(-s.a1 + disc) / 2.0, (-s.a1 - disc) / 2.0};
}

}  // namespace

bool BiquadSection::stable() const {
  auto [p1, p2] = section_poles(*this);
  return std::abs(p1) < 1.0 && std::abs(p2) < 1.0;
}

bool BiquadCascade::stable() const {
  return std::all_of(sections.begin(), sections.end(),
                     [](const BiquadSection& s) { return s.stable(); });
}

std::complex<double> BiquadCascade::response(double freq_hz, double fs) const {
  const double w = 2.0 * kPi * freq_hz / fs;
  const cd z1 = std::polar(1.0, -w);   // z^-1
  const cd z2 = std::polar(1.0, -2 * w);
  cd h(1.0, 0.0);
  for (const auto& s : sections)
    h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  return h;
}

double BiquadCascade::magnitude(double freq_hz, double fs) const {
  return std::abs(response(freq_hz, fs));
}

double BiquadCascade::magnitude_db(double freq_hz, double fs) const {
  const double mag = magnitude(freq_hz, fs);
  if (mag <= 1e-15) return -300.0;
  return std::max(-300.0, 20.0 * std::log10(mag));
}

BiquadCascade design_notch(double center_hz, double q, double fs) {
  if (fs <= 0.0 || center_hz <= 0.0 || center_hz >= fs / 2.0)
    throw InvalidFrequency("notch center must satisfy 0 < f < fs/2");
  if (q <= 0.0) throw InvalidFrequency("notch quality factor must be positive");

  const double w0 = 2.0 * kPi * center_hz / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;

  BiquadSection s;
  s.b0 = 1.0 / a0;
  s.b1 = -2.0 * std::cos(w0) / a0;
  s.b2 = 1.0 / a0;
  s.a1 = -2.0 * std::cos(w0) / a0;
  s.a2 = (1.0 - alpha) / a0;
  return BiquadCascade{{s}};
}

BiquadCascade design_butterworth_bandpass(int order, double low_hz, double high_hz, double fs) {
  if (order < 1) throw InvalidFrequency("bandpass order must be >= 1");
  if (fs <= 0.0 || low_hz <= 0.0 || low_hz >= high_hz || high_hz >= fs / 2.0)
    throw InvalidFrequency("bandpass edges must satisfy 0 < low < high < fs/2");

  const int n = order;

  // Analog low-pass prototype: n poles on the unit circle, left half-plane.
  std::vector<cd> proto;
  proto.reserve(n);
  for (int k = 0; k < n; ++k) {
    const double theta = kPi * (2.0 * k + n + 1.0) / (2.0 * n);
    proto.emplace_back(std::cos(theta), std::sin(theta));
  }

  // Pre-warped band edges and low-pass -> band-pass transform. Each prototype
  // pole splits in two; n zeros sit at s = 0.
  const double c = 2.0 * fs;
  const double w1 = c * std::tan(kPi * low_hz / fs);
  const double w2 = c * std::tan(kPi * high_hz / fs);
  const double bw = w2 - w1;
  const double w0 = std::sqrt(w1 * w2);

  std::vector<cd> analog_poles;
  analog_poles.reserve(2 * n);
  for (const cd& p : proto) {
    const cd scaled = p * (bw / 2.0);
    const cd split = std::sqrt(scaled * scaled - w0 * w0);
    analog_poles.push_back(scaled + split);
    analog_poles.push_back(scaled - split);
  }
  // gain from the transform: bw^n (n zeros at s=0 keep k real)
  double analog_gain = std::pow(bw, n);

  // Bilinear transform: s -> c (z-1)/(z+1). Analog zeros at 0 map to z = 1;
  // the n-pole excess contributes n zeros at z = -1.
  std::vector<cd> digital_poles;
  digital_poles.reserve(2 * n);
  cd gain_num = std::pow(cd(c, 0.0), n);  // prod(c - s_zero), zeros all at 0
  cd gain_den(1.0, 0.0);
  for (const cd& p : analog_poles) {
    digital_poles.push_back((c + p) / (c - p));
    gain_den *= (c - p);
  }
  const double gain = analog_gain * (gain_num / gain_den).real();

  // Group poles into conjugate pairs; leftovers are real and pair up sorted.
  std::vector<cd> upper;
  std::vector<double> real;
  for (const cd& p : digital_poles) {
    if (p.imag() > 1e-10)
      upper.push_back(p);
    else if (p.imag() >= -1e-10)
      real.push_back(p.real());
  }
  std::sort(real.begin(), real.end());
  if (upper.size() * 2 + real.size() != static_cast<std::size_t>(2 * n) || real.size() % 2 != 0)
    throw Error("bandpass design: pole pairing failed");

  // Every section takes one zero at z=1 and one at z=-1: numerator z^2 - 1.
  BiquadCascade cascade;
  const double section_gain = std::pow(std::abs(gain), 1.0 / n) * (gain < 0.0 ? -1.0 : 1.0);
  auto add_section = [&](double a1, double a2) {
    BiquadSection s;
    s.b0 = section_gain;
    s.b1 = 0.0;
    s.b2 = -section_gain;
    s.a1 = a1;
    s.a2 = a2;
    cascade.sections.push_back(s);
  };
  for (const cd& p : upper) add_section(-2.0 * p.real(), std::norm(p));
  for (std::size_t i = 0; i + 1 < real.size(); i += 2)
    add_section(-(real[i] + real[i + 1]), real[i] * real[i + 1]);

  // Sections with poles nearest the unit circle go last.
  std::sort(cascade.sections.begin(), cascade.sections.end(),
            [](const BiquadSection& x, const BiquadSection& y) {
              auto radius = [](const BiquadSection& s) {
                auto [p1, p2] = section_poles(s);
                return std::max(std::abs(p1), std::abs(p2));
              };
              return radius(x) < radius(y);
            });
  return cascade;
}

std::string sos_to_text(const BiquadCascade& cascade) {
  std::string out;
  char line[256];
  for (const auto& s : cascade.sections) {
    std::snprintf(line, sizeof(line), "%.17g %.17g %.17g %.17g %.17g\n", s.b0, s.b1, s.b2, s.a1,
                  s.a2);
    out += line;
  }
  return out;
}

BiquadCascade sos_from_text(const std::string& text) {
  BiquadCascade cascade;
  std::istringstream stream(text);
  std::string line;
  while (std::getline(stream, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    BiquadSection s;
    std::istringstream row(line);
    if (!(row >> s.b0 >> s.b1 >> s.b2 >> s.a1 >> s.a2))
      throw Error("sos table: malformed line: " + line);
    cascade.sections.push_back(s);
  }
  return cascade;
}

}  // namespace neurostream::dsp
