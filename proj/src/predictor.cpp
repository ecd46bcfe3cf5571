#include "chainprof/predictor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "chainprof/errors.hpp"

namespace chainprof {

std::string_view model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::constant: return "constant";
        case ModelKind::linear: return "linear";
        case ModelKind::plateau: return "plateau";
    }
    return "?";
}

std::string_view behavior_class_name(BehaviorClass c) {
    switch (c) {
        case BehaviorClass::insensitive: return "insensitive";
        case BehaviorClass::scaling: return "scaling";
        case BehaviorClass::saturating: return "saturating";
    }
    return "?";
}

double ScalingModel::evaluate(double x) const {
    switch (kind) {
        case ModelKind::constant: return a;
        case ModelKind::linear: return a + b * x;
        case ModelKind::plateau: return a + b * std::min(x, knee);
    }
    return a;
}

namespace {

struct LineFit {
    double a = 0.0;
    double b = 0.0;
};

// OLS of y on z. Requires at least two distinct z.
LineFit least_squares(std::span<const double> z, std::span<const FitPoint> points) {
    const double n = static_cast<double>(points.size());
    double zm = 0.0, ym = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        zm += z[i];
        ym += points[i].y;
    }
    zm /= n;
    ym /= n;
    double szz = 0.0, szy = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        szz += (z[i] - zm) * (z[i] - zm);
        szy += (z[i] - zm) * (points[i].y - ym);
    }
    LineFit f;
    f.b = szz > 0 ? szy / szz : 0.0;
    f.a = ym - f.b * zm;
    return f;
}

double sse_of(const ScalingModel& m, std::span<const FitPoint> points) {
    double sse = 0.0;
    for (const auto& p : points) {
        const double r = p.y - m.evaluate(p.x);
        sse += r * r;
    }
    return sse;
}

constexpr int parameter_count(ModelKind k) {
    return k == ModelKind::constant ? 1 : k == ModelKind::linear ? 2 : 3;
}

// Upper 1% points of chi-square with 1 and 2 degrees of freedom.
constexpr std::array<double, 3> kChiSquare99 = {0.0, 6.634896601021214, 9.210340371976184};

}  // namespace

ScalingModel fit_scaling_model(std::span<const FitPoint> points, const std::string& dimension,
                               const std::string& metric) {
    if (!std::is_sorted(points.begin(), points.end(), [](const FitPoint& l, const FitPoint& r) { return l.x < r.x; })) {
        throw SpecError("", "fit points must be sorted by resource value");
    }
    std::vector<double> distinct;
    for (const auto& p : points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw NonFinite("fit point");
        if (distinct.empty() || distinct.back() != p.x) distinct.push_back(p.x);
    }
    if (distinct.size() < 3) throw SpecError("", "fewer than 3 distinct resource values");

    std::vector<double> xs;
    for (const auto& p : points) xs.push_back(p.x);

    std::array<ScalingModel, 3> candidates;
    auto& constant = candidates[0];
    constant.kind = ModelKind::constant;
    constant.a = std::accumulate(points.begin(), points.end(), 0.0,
                                 [](double acc, const FitPoint& p) { return acc + p.y; }) /
                 static_cast<double>(points.size());
    constant.sse = sse_of(constant, points);

    auto& linear = candidates[1];
    linear.kind = ModelKind::linear;
    const auto line = least_squares(xs, points);
    linear.a = line.a;
    linear.b = line.b;
    linear.sse = sse_of(linear, points);

    auto& plateau = candidates[2];
    plateau.kind = ModelKind::plateau;
    plateau.sse = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k + 1 < distinct.size(); ++k) {
        std::vector<double> z;
        for (double x : xs) z.push_back(std::min(x, distinct[k]));
        const auto f = least_squares(z, points);
        ScalingModel trial;
        trial.kind = ModelKind::plateau;
        trial.a = f.a;
        trial.b = f.b;
        trial.knee = distinct[k];
        trial.sse = sse_of(trial, points);
        if (trial.sse < plateau.sse) plateau = trial;
    }

    double sum_sq = 0.0, noise_var = 0.0;
    for (const auto& p : points) {
        sum_sq += p.y * p.y;
        noise_var += p.se * p.se;
    }
    noise_var /= static_cast<double>(points.size());

    const auto best = std::min_element(candidates.begin(), candidates.end(),
                                       [](const ScalingModel& l, const ScalingModel& r) { return l.sse < r.sse; });
    ScalingModel chosen = *best;
    for (const auto& c : candidates) {
        const int extra = parameter_count(best->kind) - parameter_count(c.kind);
        if (extra < 0) break;
        const double band = 1e-9 * best->sse + 1e-18 * sum_sq + kChiSquare99[extra] * noise_var;
        if (c.sse - best->sse <= band) {
            chosen = c;
            break;
        }
    }

    const double x_min = distinct.front();
    const double x_max = distinct.back();
    const double mean_y = constant.a;
    switch (chosen.kind) {
        case ModelKind::constant:
            chosen.behavior = BehaviorClass::insensitive;
            chosen.relative_change = 0.0;
            break;
        case ModelKind::linear:
            if (mean_y != 0.0) {
                chosen.relative_change = std::fabs(chosen.b) * (x_max - x_min) / std::fabs(mean_y);
                chosen.behavior = chosen.relative_change < kInsensitiveRelativeChange ? BehaviorClass::insensitive
                                                                                      : BehaviorClass::scaling;
            } else {
                chosen.relative_change = std::numeric_limits<double>::infinity();
                chosen.behavior = std::fabs(chosen.b) < 1e-12 ? BehaviorClass::insensitive : BehaviorClass::scaling;
            }
            break;
        case ModelKind::plateau:
            chosen.relative_change = mean_y != 0.0 ? std::fabs(chosen.b) * (chosen.knee - x_min) / std::fabs(mean_y)
                                                   : std::numeric_limits<double>::infinity();
            chosen.behavior = BehaviorClass::saturating;
            break;
    }
    chosen.resource_dimension = dimension;
    chosen.metric = metric;
    return chosen;
}

SlaAnswer min_resource_for_sla(const ScalingModel& model, std::span<const double> grid, double target,
                               bool higher_is_better) {
    if (grid.empty()) throw SpecError("", "empty resource grid");
    if (!std::is_sorted(grid.begin(), grid.end())) throw SpecError("", "resource grid must be sorted");
    const double tol = 1e-9 * std::max(1.0, std::fabs(target));
    auto meets = [&](double v) { return higher_is_better ? v >= target - tol : v <= target + tol; };

    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double v = model.evaluate(grid[i]);
        if (!meets(v)) continue;
        SlaAnswer answer{grid[i], std::nullopt};
        if (i > 0) {
            const double prev = model.evaluate(grid[i - 1]);
            if (v != prev) answer.interpolated = grid[i - 1] + (target - prev) / (v - prev) * (grid[i] - grid[i - 1]);
        }
        return answer;
    }
    std::string metric = model.metric.empty() ? "metric" : model.metric;
    throw Unreachable(metric + " target " + std::to_string(target) + " is not met at any tested allocation");
}

std::vector<MarginalPoint> marginal_sweep(const std::vector<ResourceConfiguration>& configs,
                                          const ResourceConfiguration& reference, const std::string& node,
                                          LimitDimension dimension) {
    std::vector<MarginalPoint> out;
    for (const auto& c : configs) {
        std::set<std::string> nodes;
        for (const auto& [n, l] : c.assignments) nodes.insert(n);
        for (const auto& [n, l] : reference.assignments) nodes.insert(n);
        nodes.insert(node);

        bool matches = true;
        for (const auto& n : nodes) {
            const auto mine = c.limits_for(n);
            const auto ref = reference.limits_for(n);
            if (n != node) {
                matches = mine == ref;
            } else {
                for (auto d : kAllDimensions) {
                    if (d != dimension && mine.get(d) != ref.get(d)) matches = false;
                }
                if (!mine.get(dimension)) matches = false;
            }
            if (!matches) break;
        }
        if (matches) out.push_back({*c.limits_for(node).get(dimension), c.index});
    }
    std::stable_sort(out.begin(), out.end(), [](const MarginalPoint& a, const MarginalPoint& b) { return a.x < b.x; });
    return out;
}

SensitivityResult chain_sensitivity(const ProfileBundle& bundle, const std::string& metric, LimitDimension dimension,
                                    const ResourceConfiguration& reference) {
    const PerformanceProfile* nsp = bundle.find_profile(ProfileScope::nsp);
    if (!nsp) throw SpecError("", "bundle has no NSP profile");
    if (!nsp->metrics.count(metric)) throw SpecError("", "metric '" + metric + "' is not an end-to-end metric");

    SensitivityResult result;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& node : bundle.topology.node_ids()) {
        std::vector<double> xs, ys;
        for (const auto& mp : marginal_sweep(bundle.configurations, reference, node, dimension)) {
            auto row = nsp->table.find(mp.config_index);
            if (row == nsp->table.end()) continue;
            auto cell = row->second.find(metric);
            if (cell == row->second.end()) continue;
            xs.push_back(mp.x);
            ys.push_back(cell->second.mean);
        }
        if (std::set<double>(xs.begin(), xs.end()).size() < 2) {
            throw SpecError("", "missing marginal sweep of " + std::string(dimension_name(dimension)) + " for node '" +
                                    node + "'");
        }
        const double n = static_cast<double>(xs.size());
        const double xm = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
        const double ym = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sxx += (xs[i] - xm) * (xs[i] - xm);
            sxy += (xs[i] - xm) * (ys[i] - ym);
        }
        const double slope = sxy / sxx;
        const double e = ym != 0.0 ? slope * xm / ym : 0.0;
        result.elasticity[node] = e;
        if (e > best) {
            best = e;
            result.bottleneck = node;
        }
    }
    if (!(best >= kBottleneckElasticity)) result.bottleneck.reset();
    return result;
}

}  // namespace chainprof
