// predictor.hpp - scaling-model fits, behavior classification, SLA queries,
// and chain bottleneck analysis.
//
// Three candidate models are fitted to a one-dimensional marginal
// (resource value x -> metric mean y):
//   constant  y = a
//   linear    y = a + b x                 (ordinary least squares)
//   plateau   y = a + b min(x, k)         (k grid-searched over interior x)
// The model with minimum SSE wins; a simpler model is kept when the more
// complex one improves SSE by no more than the tie band. Without per-point
// standard errors the band is 1e-9 relative; with them it also admits SSE
// differences explainable by measurement noise at the 99% level.
#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chainprof/config_io.hpp"

namespace chainprof {

enum class ModelKind { constant, linear, plateau };
enum class BehaviorClass { insensitive, scaling, saturating };

std::string_view model_kind_name(ModelKind k);
std::string_view behavior_class_name(BehaviorClass c);

inline constexpr double kInsensitiveRelativeChange = 0.01;

struct FitPoint {
    double x = 0.0;
    double y = 0.0;
    // Standard error of y; 0 when unknown or noise-free.
    double se = 0.0;
};

struct ScalingModel {
    ModelKind kind = ModelKind::constant;
    double a = 0.0;
    double b = 0.0;
    double knee = 0.0;  // plateau only
    double sse = 0.0;
    BehaviorClass behavior = BehaviorClass::insensitive;
    // |b| * (x_max - x_min) / |mean y| for linear models, |b| * (k - x_min) / |mean y| for plateaus.
    double relative_change = 0.0;
    std::string resource_dimension;
    std::string metric;

    double evaluate(double x) const;
    // Saturation point for plateau models.
    std::optional<double> saturation_point() const {
        return kind == ModelKind::plateau ? std::optional<double>(knee) : std::nullopt;
    }
};

// Points must be sorted by x with at least 3 distinct x values; throws
// SpecError otherwise.
ScalingModel fit_scaling_model(std::span<const FitPoint> points, const std::string& dimension = {},
                               const std::string& metric = {});

struct SlaAnswer {
    double allocation = 0.0;
    // Where the fitted curve crosses the target between the previous grid
    // point and `allocation`; informational only.
    std::optional<double> interpolated;
};

// Smallest tested grid point whose predicted value meets `target`
// (>= for higher-is-better, <= otherwise). Throws Unreachable.
SlaAnswer min_resource_for_sla(const ScalingModel& model, std::span<const double> grid, double target,
                               bool higher_is_better = true);

struct SensitivityResult {
    std::map<std::string, double> elasticity;
    // Empty when every elasticity is below 0.01.
    std::optional<std::string> bottleneck;
};

inline constexpr double kBottleneckElasticity = 0.01;

// Marginal points: configurations equal to `reference` except for `node`'s
// value in `dimension`. Sorted by x; duplicates keep configuration order.
struct MarginalPoint {
    double x = 0.0;
    std::size_t config_index = 0;
};
std::vector<MarginalPoint> marginal_sweep(const std::vector<ResourceConfiguration>& configs,
                                          const ResourceConfiguration& reference, const std::string& node,
                                          LimitDimension dimension);

// Elasticity of the end-to-end `metric` (from the NSP profile) with respect
// to each node's `dimension`: OLS slope * mean(x) / mean(y). Throws
// SpecError naming the node when its marginal sweep has < 2 distinct values.
SensitivityResult chain_sensitivity(const ProfileBundle& bundle, const std::string& metric, LimitDimension dimension,
                                    const ResourceConfiguration& reference);

}  // namespace chainprof
