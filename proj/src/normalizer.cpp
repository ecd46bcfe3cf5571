#include "chainprof/normalizer.hpp"

#include <cmath>

#include "chainprof/errors.hpp"

namespace chainprof {

PerformanceProfile normalize_profile(const PerformanceProfile& profile, const BaselineVector& baseline) {
    PerformanceProfile out = profile;
    out.normalized = true;
    for (auto& [name, info] : out.metrics) {
        auto it = baseline.baselines.find(name);
        if (it == baseline.baselines.end()) throw SpecError("/baselines/" + name, "missing baseline for metric '" + name + "'");
        if (!(it->second > 0) || !std::isfinite(it->second)) {
            throw SpecError("/baselines/" + name, "baseline for '" + name + "' must be > 0");
        }
        info.unit = "ratio";
    }
    for (auto& [index, row] : out.table) {
        for (auto& [name, agg] : row) {
            const double b = baseline.baselines.at(name);
            agg.mean /= b;
            agg.std /= b;
            agg.ci95_low /= b;
            agg.ci95_high /= b;
        }
    }
    return out;
}

double geometric_mean_score(std::span<const double> values) {
    if (values.empty()) throw SpecError("", "geometric mean of an empty list");
    double log_sum = 0.0;
    for (double v : values) {
        if (!(v > 0) || !std::isfinite(v)) throw SpecError("", "geometric mean needs positive finite values");
        log_sum += std::log(v);
    }
    return std::exp(log_sum / static_cast<double>(values.size()));
}

double row_score(const PerformanceProfile& normalized, std::size_t config_index) {
    auto row = normalized.table.find(config_index);
    if (row == normalized.table.end()) {
        throw SpecError("", "profile " + normalized.file_stem() + " has no row " + std::to_string(config_index));
    }
    std::vector<double> oriented;
    for (const auto& [name, agg] : row->second) {
        const bool higher = normalized.metrics.at(name).higher_is_better;
        oriented.push_back(higher ? agg.mean : 1.0 / agg.mean);
    }
    return geometric_mean_score(oriented);
}

BaselineVector unit_baseline(const std::vector<PerformanceProfile>& profiles, const HostDescriptor& host) {
    BaselineVector b;
    b.host = host;
    b.provenance = BaselineVector::Provenance::supplied;
    for (const auto& p : profiles) {
        for (const auto& [name, info] : p.metrics) b.baselines[name] = 1.0;
    }
    return b;
}

}  // namespace chainprof
