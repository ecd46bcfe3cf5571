// config_io.hpp - experiment specifications and profile bundles.
//
// Specs, manifests, profiles, and baselines are JSON documents; measurement
// records are a flat CSV file. Parsing is strict: unknown keys are rejected
// with the JSON pointer of the offending member.
//
// Bundle directory layout:
//   manifest.json          BundleManifest
//   records.csv            config_index,repetition,node,metric,value,unit
//   topology.json          TopologyDescriptor
//   configurations.json    enumerated ResourceConfigurations
//   spec.json              canonical experiment spec document
//   profiles/nsp.json, profiles/vnfp-<node>.json, profiles/tp-<variant>.json
//   normalized/...         same shapes after normalization, plus baseline.json
//   logs/                  post-process hook output (not covered by digests)
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "chainprof/backend.hpp"
#include "chainprof/core_model.hpp"

namespace chainprof {

struct ExperimentSpec {
    std::string name;
    std::size_t repetitions = 3;
    std::uint64_t seed = 0;
    TopologyDescriptor topology;
    ConfigurationSpace sweep;
    std::vector<MetricSpec> metrics;
    BackendConfig backend;
    std::map<std::string, SimVNFModel> sim_models;
    std::optional<std::string> post_process;
    double warmup_s = 0.0;
    // Per-run measurement duration; nullopt means backend-defined.
    std::optional<double> duration_s;

    const MetricSpec* find_metric(std::string_view name) const;
};

// Parses and fully validates a JSON experiment spec. Throws SyntaxError,
// SpecError (with JSON pointer), never returns a partially valid spec.
ExperimentSpec parse_experiment(std::string_view text);
ExperimentSpec load_experiment(const std::filesystem::path& path);

// Serializes a spec back to its document form (defaults made explicit).
nlohmann::json experiment_to_json(const ExperimentSpec& spec);

// Lowercase hex SHA-256 of the compact serialization (keys sorted).
std::string canonical_digest(const nlohmann::json& doc);
std::string sha256_hex(std::string_view bytes);

// ---------------------------------------------------------------------------

struct FlaggedRun {
    std::size_t config_index = 0;
    std::size_t repetition = 0;
    // Empty when the whole run failed.
    std::string node;
    std::string reason;

    bool operator==(const FlaggedRun&) const = default;
};

struct BundleManifest {
    std::string name;
    std::string spec_digest;
    HostDescriptor host;
    std::size_t config_count = 0;
    std::size_t repetitions = 0;
    std::size_t metric_count = 0;
    std::size_t record_count = 0;
    std::string cpu_time_interpretation;
    std::string seed_derivation;
    std::string backend;
    double warmup_s = 0.0;
    std::optional<double> duration_s;
    std::vector<FlaggedRun> flagged;
    std::string records_sha256;
    std::string created_at;

    // Field-wise equality excluding created_at.
    bool same_content(const BundleManifest& other) const;
};

struct BaselineVector {
    HostDescriptor host;
    std::map<std::string, double> baselines;
    enum class Provenance { measured, supplied } provenance = Provenance::supplied;

    bool operator==(const BaselineVector&) const = default;
};

struct ProfileBundle {
    BundleManifest manifest;
    std::vector<MeasurementRecord> records;
    TopologyDescriptor topology;
    std::vector<ResourceConfiguration> configurations;
    std::vector<MetricSpec> metrics;
    nlohmann::json spec_document;
    std::vector<PerformanceProfile> profiles;
    std::vector<PerformanceProfile> normalized;
    std::optional<BaselineVector> baseline;

    const PerformanceProfile* find_profile(ProfileScope scope, std::string_view subject = {}) const;
    // Field-wise equality excluding the manifest timestamp.
    bool same_content(const ProfileBundle& other) const;
};

// Records expected for the bundle's configuration/repetition/metric counts
// after removing flagged runs.
std::size_t expected_record_count(const ProfileBundle& bundle);

// Throws IntegrityError when manifest counts disagree with content.
void check_bundle_integrity(const ProfileBundle& bundle);

// Rounds to the 9 significant digits used by the records file.
double quantize_value(double value);
std::string render_value(double value);

std::string render_records(std::vector<MeasurementRecord> records);
std::vector<MeasurementRecord> parse_records(std::string_view text);

// Writes the layout above and returns the SHA-256 of the manifest bytes.
// Sets manifest.records_sha256 (and created_at when empty) on the copy it writes.
std::string write_bundle(const ProfileBundle& bundle, const std::filesystem::path& destination);
ProfileBundle load_bundle(const std::filesystem::path& source);

// JSON forms shared with other modules.
nlohmann::json to_json(const HostDescriptor& host);
HostDescriptor host_from_json(const nlohmann::json& doc, const std::string& path = "/host");
nlohmann::json to_json(const TopologyDescriptor& topo);
TopologyDescriptor topology_from_json(const nlohmann::json& doc, const std::string& path = "/topology");
nlohmann::json to_json(const ResourceLimits& limits);
ResourceLimits limits_from_json(const nlohmann::json& doc, const std::string& path);
nlohmann::json to_json(const ResourceConfiguration& config);
nlohmann::json to_json(const PerformanceProfile& profile);
PerformanceProfile profile_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const BaselineVector& baseline);
BaselineVector baseline_from_json(const nlohmann::json& doc);
BaselineVector load_baseline(const std::filesystem::path& path);

// Checks a profile document against the documented schema; returns the
// list of violations (empty when valid).
std::vector<std::string> check_profile_schema(const nlohmann::json& doc);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace chainprof
