// normalizer.hpp - host-relative normalization of performance profiles.
//
// Every value of metric m is divided by the host baseline b_m, producing
// dimensionless ratios. Rows are summarized by the geometric mean of their
// ratios, with lower-is-better metrics inverted first, so ratios of scores
// do not depend on which baseline was chosen.
#pragma once

#include <span>
#include <vector>

#include "chainprof/config_io.hpp"
#include "chainprof/core_model.hpp"

namespace chainprof {

// Throws SpecError when a metric of `profile` has no baseline or a
// non-positive one.
PerformanceProfile normalize_profile(const PerformanceProfile& profile, const BaselineVector& baseline);

// exp(mean(log v)); throws SpecError if any value is <= 0 or the list is empty.
double geometric_mean_score(std::span<const double> values);

// Score of one normalized row. Lower-is-better metrics contribute 1/ratio.
double row_score(const PerformanceProfile& normalized, std::size_t config_index);

// Baseline of 1.0 for every metric of `profiles`.
BaselineVector unit_baseline(const std::vector<PerformanceProfile>& profiles, const HostDescriptor& host);

}  // namespace chainprof
