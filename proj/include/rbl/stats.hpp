#pragma once

#include <cstdint>
#include <vector>

namespace rbl {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct MetricSummary {
  int n = 0;
  double mean = 0.0;
  double median = 0.0;
  double rmse = 0.0; // root of the mean square
  Interval mean_ci;
  Interval median_ci;
  Interval rmse_ci;
};

double mean_of(const std::vector<double>& v);
double median_of(std::vector<double> v);
double rms_of(const std::vector<double>& v);

// Percentile bootstrap (95%) of mean, median and RMS with `resamples` draws
// from a stream seeded by `seed`. Intervals are widened, if needed, to
// contain their point estimate. Empty input gives an all-zero summary with n = 0.
MetricSummary summarize(const std::vector<double>& values, std::uint64_t seed, int resamples = 1000);

// 95% percentile-bootstrap interval of the mean.
Interval bootstrap_mean_ci(const std::vector<double>& values, std::uint64_t seed, int resamples = 1000);

} // namespace rbl
