#include "neurostream/bus/jitter.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace neurostream::bus {

JitterReport jitter_report(std::span<const std::uint64_t> timestamps_ns, double nominal_ms) {
  if (timestamps_ns.size() < 2)
    throw TooFewTimestamps("jitter report needs at least 2 timestamps, got " +
                           std::to_string(timestamps_ns.size()));

  JitterReport report;
  report.nominal_ms = nominal_ms;
  report.intervals_ms.reserve(timestamps_ns.size() - 1);
  for (std::size_t i = 1; i < timestamps_ns.size(); ++i) {
    // Signed difference: a non-monotonic series yields a negative interval
    // rather than a wrapped huge one.
    const double dt = static_cast<double>(static_cast<std::int64_t>(timestamps_ns[i]) -
                                          static_cast<std::int64_t>(timestamps_ns[i - 1]));
    report.intervals_ms.push_back(dt * 1e-6);
  }

  double sum = 0.0;
  for (double v : report.intervals_ms) sum += v;
  const double n = static_cast<double>(report.intervals_ms.size());
  report.mean_ms = sum / n;

  double sq = 0.0;
  std::size_t within = 0;
  std::map<long, std::size_t> bins;
  for (double v : report.intervals_ms) {
    const double d = v - report.mean_ms;
    sq += d * d;
    if (std::abs(v - nominal_ms) <= 1.0) ++within;
    ++bins[std::lround((v - nominal_ms) / 0.1)];
  }
  report.std_ms = std::sqrt(sq / n);
  report.fraction_within_1ms = static_cast<double>(within) / n;
  report.histogram.reserve(bins.size());
  for (const auto& [k, count] : bins)
    report.histogram.push_back({nominal_ms + 0.1 * static_cast<double>(k), count});
  return report;
}

std::string jitter_format(const JitterReport& report) {
  std::ostringstream os;
  os.precision(3);
  os << std::fixed;
  os << "intervals: " << report.intervals_ms.size() << "\n"
     << "nominal:   " << report.nominal_ms << " ms\n"
     << "mean:      " << report.mean_ms << " ms\n"
     << "std:       " << report.std_ms << " ms\n"
     << "within 1ms of nominal: " << 100.0 * report.fraction_within_1ms << " %\n";
  std::size_t peak = 1;
  for (const auto& bin : report.histogram) peak = std::max(peak, bin.count);
  for (const auto& bin : report.histogram) {
    const auto width = static_cast<std::size_t>(
        std::lround(40.0 * static_cast<double>(bin.count) / static_cast<double>(peak)));
    os << (bin.center_ms < 100 ? " " : "") << bin.center_ms << " ms | "
       << std::string(std::max<std::size_t>(width, 1), '#') << ' ' << bin.count << "\n";
  }
  return os.str();
}

}  // namespace neurostream::bus
