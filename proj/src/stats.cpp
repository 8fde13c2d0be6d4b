#include "rbl/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rbl/random.hpp"

namespace rbl {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double rms_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s / static_cast<double>(v.size()));
}

namespace {

// Linear-interpolated quantile of sorted data.
double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.size() == 1) return sorted.front();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(i);
  if (i + 1 >= sorted.size()) return sorted.back();
  return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

Interval percentile_interval(std::vector<double> draws, double point) {
  std::sort(draws.begin(), draws.end());
  Interval iv{quantile(draws, 0.025), quantile(draws, 0.975)};
  iv.lo = std::min(iv.lo, point);
  iv.hi = std::max(iv.hi, point);
  return iv;
}

} // namespace

MetricSummary summarize(const std::vector<double>& values, std::uint64_t seed, int resamples) {
  MetricSummary s;
  s.n = static_cast<int>(values.size());
  if (values.empty()) return s;
  s.mean = mean_of(values);
  s.median = median_of(values);
  s.rmse = rms_of(values);

  Rng rng(seed);
  std::vector<double> means, medians, rmses, sample(values.size());
  means.reserve(static_cast<std::size_t>(resamples));
  medians.reserve(static_cast<std::size_t>(resamples));
  rmses.reserve(static_cast<std::size_t>(resamples));
  for (int b = 0; b < resamples; ++b) {
    for (auto& x : sample) x = values[rng.below(values.size())];
    means.push_back(mean_of(sample));
    rmses.push_back(rms_of(sample));
    medians.push_back(median_of(sample));
  }
  s.mean_ci = percentile_interval(std::move(means), s.mean);
  s.median_ci = percentile_interval(std::move(medians), s.median);
  s.rmse_ci = percentile_interval(std::move(rmses), s.rmse);
  return s;
}

Interval bootstrap_mean_ci(const std::vector<double>& values, std::uint64_t seed, int resamples) {
  if (values.empty()) return {};
  Rng rng(seed);
  std::vector<double> means, sample(values.size());
  for (int b = 0; b < resamples; ++b) {
    for (auto& x : sample) x = values[rng.below(values.size())];
    means.push_back(mean_of(sample));
  }
  return percentile_interval(std::move(means), mean_of(values));
}

} // namespace rbl
