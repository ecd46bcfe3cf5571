// analysis.hpp - bundle-level analysis report built on the predictor.
//
// For every VNFP metric and every end-to-end (probe-sourced) NSP metric,
// each swept (node, dimension) marginal with at least 3 distinct values is
// fitted; SLA targets are answered per fit; chain sensitivity is computed
// per end-to-end metric and dimension where marginal sweeps exist.
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "chainprof/config_io.hpp"

namespace chainprof {

struct AnalysisOptions {
    // metric -> target value
    std::map<std::string, double> sla_targets;
    // Restrict fits to these dimensions; all when empty.
    std::set<LimitDimension> dimensions;
    // Configuration holding the non-swept coordinates of each marginal.
    std::size_t reference_config = 0;
};

struct PlotSeries {
    std::string file_name;
    std::string csv;
};

struct AnalysisReport {
    nlohmann::json document;
    std::vector<PlotSeries> plots;
};

AnalysisReport analyze_bundle(const ProfileBundle& bundle, const AnalysisOptions& options);

// Writes analysis/report.json and analysis/plots/*.csv under `bundle_dir`.
void write_analysis(const AnalysisReport& report, const std::filesystem::path& bundle_dir);

}  // namespace chainprof
