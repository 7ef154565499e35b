#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "neurostream/core/types.hpp"

namespace neurostream::bus {

struct TooFewTimestamps : Error {
  using Error::Error;
};

// Inter-arrival statistics for a timestamp series against a nominal period.
struct JitterReport {
  double nominal_ms = 0.0;
  std::vector<double> intervals_ms;  // consecutive timestamp differences
  double mean_ms = 0.0;
  double std_ms = 0.0;  // population standard deviation
  double fraction_within_1ms = 0.0;

  // 0.1 ms-wide bins centered on nominal + k * 0.1; only non-empty bins.
  struct Bin {
    double center_ms = 0.0;
    std::size_t count = 0;
  };
  std::vector<Bin> histogram;
};

// Requires at least two timestamps (one interval); throws TooFewTimestamps.
JitterReport jitter_report(std::span<const std::uint64_t> timestamps_ns,
                           double nominal_ms = 62.5);

// Human-readable multi-line rendering with an ASCII histogram.
std::string jitter_format(const JitterReport& report);

}  // namespace neurostream::bus
