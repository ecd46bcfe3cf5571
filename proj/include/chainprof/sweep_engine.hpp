// sweep_engine.hpp - campaign orchestration.
//
// For every (configuration, repetition) pair in config-major order the
// engine asks the backend for one full run, extracts each metric into a
// MeasurementRecord, and, once all runs are done, aggregates profiles,
// writes the bundle, and triggers the post-process hook.
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "chainprof/backend.hpp"
#include "chainprof/config_io.hpp"

namespace chainprof {

inline constexpr const char* kBundleEnvVar = "CHAINPROF_BUNDLE";

struct RunPlanEntry {
    std::size_t config_index = 0;
    std::size_t repetition = 0;
    std::uint64_t seed = 0;
};

// Config-major, repetition-minor; seeds from derive_run_seed, pairwise distinct.
std::vector<RunPlanEntry> make_run_plan(std::size_t config_count, std::size_t repetitions, std::uint64_t seed);

// Reads `metric.key` from `metric.file` of `metric.source`. Numeric strings
// are accepted. Throws ExtractionError with a kind per failure.
double extract_metric(const RunResult& result, const MetricSpec& metric);

// NSP (probe-sourced metrics, or every metric in whitebox mode), one VNFP
// per node, and a TP when the topology names a variant. Sorted by file stem.
std::vector<PerformanceProfile> build_profiles(const std::vector<MeasurementRecord>& records,
                                               std::size_t config_count, const std::vector<MetricSpec>& metrics,
                                               const TopologyDescriptor& topology, const std::string& service,
                                               const HostDescriptor& host);

struct RunOptions {
    HostDescriptor host;
    // Bundle destination; nothing is written when empty.
    std::optional<std::filesystem::path> out_dir;
    // Concurrent runs, honored only by concurrency-safe backends.
    unsigned workers = 1;
};

struct CampaignResult {
    ProfileBundle bundle;
    std::string manifest_digest;
    std::vector<std::string> warnings;
    std::optional<int> hook_exit_code;
};

// Throws SpecError for limits the host cannot honor, DeployError/LimitError
// from the backend (fail-fast), IoError when the bundle cannot be written.
// Collection timeouts are flagged in the manifest and the campaign continues.
CampaignResult run_profiling(const ExperimentSpec& spec, Backend& backend, const RunOptions& options);

// Host baseline: mean of every metric over `spec.repetitions` runs of the
// all-unlimited configuration, provenance "measured".
BaselineVector measure_baseline(const ExperimentSpec& spec, Backend& backend, const HostDescriptor& host);

std::unique_ptr<Backend> make_backend(const ExperimentSpec& spec, const HostDescriptor& host);

// Runs `hook` with the bundle path as its single argument and in
// CHAINPROF_BUNDLE; stdout and stderr go to `log_file`. Returns the exit
// status (or 127 when the hook cannot be started).
int run_post_process(const std::string& hook, const std::filesystem::path& bundle_dir,
                     const std::filesystem::path& log_file);

HostDescriptor detect_host();

}  // namespace chainprof
