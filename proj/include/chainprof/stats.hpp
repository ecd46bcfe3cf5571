// stats.hpp - aggregation of repeated measurements into mean, sample
// standard deviation, and two-sided 95% Student-t confidence intervals.
#pragma once

#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "chainprof/core_model.hpp"

namespace chainprof::stats {

// Regularized incomplete beta function I_x(a, b), a, b > 0, x in [0, 1].
double incomplete_beta(double a, double b, double x);

// CDF of Student's t distribution with `df` degrees of freedom.
double student_t_cdf(double t, double df);

// Inverse CDF; p in (0, 1). Absolute accuracy better than 1e-10.
double student_t_quantile(double p, double df);

// Mean, sample std (n-1), and t(0.975, n-1) * std / sqrt(n) half-width.
// Throws InsufficientSamples for n < 2 and NonFinite for NaN/inf input.
AggregatedMetric aggregate(std::span<const double> samples);

// Point estimate for a single sample: std 0, degenerate interval, has_ci false.
AggregatedMetric point_estimate(double value);

// Group key: (config_index, node, metric).
using GroupKey = std::tuple<std::size_t, std::string, std::string>;
using ProfileTables = std::map<GroupKey, AggregatedMetric>;

// One AggregatedMetric per (config_index, node, metric). Groups with a single
// sample become point estimates. Records whose config index is not in
// `config_count` or whose metric is not in `metrics` are ignored.
ProfileTables aggregate_bundle(std::span<const MeasurementRecord> records, std::size_t config_count,
                               std::span<const MetricSpec> metrics);

}  // namespace chainprof::stats
