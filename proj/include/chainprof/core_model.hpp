// core_model.hpp - domain types shared across the toolkit, their validation
// rules, and enumeration of the configuration space.
//
// All types are plain value objects. Validation is explicit (validate_*)
// rather than enforced in constructors so that parsers can report every
// problem in a document instead of stopping at the first one.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace chainprof {

// Limit dimensions in canonical order. Enumeration varies the last one fastest.
enum class LimitDimension { cpu_cores, cpu_time, mem_max, mem_swap_max, block_io_bw };

inline constexpr std::array<LimitDimension, 5> kAllDimensions = {
    LimitDimension::cpu_cores, LimitDimension::cpu_time, LimitDimension::mem_max,
    LimitDimension::mem_swap_max, LimitDimension::block_io_bw};

std::string_view dimension_name(LimitDimension d);
std::optional<LimitDimension> parse_dimension(std::string_view name);

// Per-node limits for one profiling run. Absent fields mean "unlimited".
//   cpu_cores     core count, >= 1
//   cpu_time      fraction of total machine CPU time, (0, 1]
//   mem_max       MiB, > 0
//   mem_swap_max  MiB, >= 0
//   block_io_bw   MiB/s, > 0, applied to reads and writes alike
struct ResourceLimits {
    std::optional<int> cpu_cores;
    std::optional<double> cpu_time;
    std::optional<double> mem_max;
    std::optional<double> mem_swap_max;
    std::optional<double> block_io_bw;

    std::optional<double> get(LimitDimension d) const;
    void set(LimitDimension d, double value);
    bool unlimited() const;

    bool operator==(const ResourceLimits&) const = default;
};

struct HostDescriptor {
    std::string cpu_model;
    int physical_cores = 1;
    std::int64_t total_mem_mb = 1;

    bool operator==(const HostDescriptor&) const = default;
};

// Real executors cannot hand out more cores than the host has; the
// simulated executor may, to model hyper-threading plateaus.
enum class ExecutorKind { simulated, real };

struct Issue {
    std::string field;
    std::string message;
};

struct ValidationResult {
    std::vector<Issue> errors;
    std::vector<Issue> warnings;

    bool ok() const { return errors.empty(); }
    void error(std::string field, std::string message) { errors.push_back({std::move(field), std::move(message)}); }
    void warn(std::string field, std::string message) { warnings.push_back({std::move(field), std::move(message)}); }
    // "field: message; field: message"
    std::string summary() const;
};

ValidationResult validate_limits(const ResourceLimits& limits, const HostDescriptor& host,
                                 ExecutorKind executor = ExecutorKind::simulated);

// ---------------------------------------------------------------------------
// Topology

struct NodeSpec {
    std::string id;
    std::string image;

    bool operator==(const NodeSpec&) const = default;
};

enum class ProbeRole { source, sink, measure };

std::string_view probe_role_name(ProbeRole r);
std::optional<ProbeRole> parse_probe_role(std::string_view name);

struct ProbeSpec {
    std::string id;
    ProbeRole role = ProbeRole::measure;
    std::string image;
    std::optional<std::vector<int>> isolated_cores;

    bool operator==(const ProbeSpec&) const = default;
};

struct LinkSpec {
    std::string from;
    std::string to;
    double delay_ms = 0.0;
    std::optional<double> bw_mbps;

    bool operator==(const LinkSpec&) const = default;
};

struct TopologyDescriptor {
    std::vector<NodeSpec> nodes;
    std::vector<ProbeSpec> probes;
    std::vector<LinkSpec> links;
    // Label for topology profiles (TP); empty when the campaign declares none.
    std::string variant;

    bool has_node(std::string_view id) const;
    bool has_probe(std::string_view id) const;
    bool has_endpoint(std::string_view id) const { return has_node(id) || has_probe(id); }
    const ProbeSpec* find_probe(std::string_view id) const;
    std::vector<std::string> node_ids() const;  // sorted

    bool operator==(const TopologyDescriptor&) const = default;
};

bool is_valid_identifier(std::string_view id);

// Checks ids, referential integrity, self-loops, duplicate links,
// connectivity, and probe roles. A topology without probes is accepted
// with a whitebox warning.
ValidationResult validate_topology(const TopologyDescriptor& topo);

// ---------------------------------------------------------------------------
// Metrics and measurements

struct MetricSpec {
    std::string name;
    std::string source;
    std::string file;
    std::string key;
    std::string unit;
    bool higher_is_better = true;

    bool operator==(const MetricSpec&) const = default;
};

struct MeasurementRecord {
    std::size_t config_index = 0;
    std::size_t repetition = 0;
    std::string node;
    std::string metric;
    double value = 0.0;
    std::string unit;

    bool operator==(const MeasurementRecord&) const = default;
};

// Canonical record order: (config_index, repetition, node, metric).
bool record_less(const MeasurementRecord& a, const MeasurementRecord& b);

struct AggregatedMetric {
    double mean = 0.0;
    double std = 0.0;
    std::size_t n = 0;
    double ci95_low = 0.0;
    double ci95_high = 0.0;
    // False for point estimates carried from groups with n < 2.
    bool has_ci = true;

    double half_width() const { return 0.5 * (ci95_high - ci95_low); }

    bool operator==(const AggregatedMetric&) const = default;
};

// ---------------------------------------------------------------------------
// Profiles

enum class ProfileScope { vnfp, nsp, tp };

std::string_view profile_scope_name(ProfileScope s);
std::optional<ProfileScope> parse_profile_scope(std::string_view name);

struct MetricInfo {
    std::string unit;
    bool higher_is_better = true;
    std::string source;

    bool operator==(const MetricInfo&) const = default;
};

using ProfileRow = std::map<std::string, AggregatedMetric>;

struct PerformanceProfile {
    ProfileScope scope = ProfileScope::nsp;
    std::string subject;
    HostDescriptor host;
    std::map<std::string, MetricInfo> metrics;
    std::map<std::size_t, ProfileRow> table;
    bool normalized = false;

    // File stem inside profiles/ and normalized/: nsp, vnfp-<id>, tp-<variant>.
    std::string file_stem() const;

    bool operator==(const PerformanceProfile&) const = default;
};

// ---------------------------------------------------------------------------
// Configuration space

struct ResourceConfiguration {
    std::size_t index = 0;
    std::map<std::string, ResourceLimits> assignments;

    // Limits for `node`, unlimited when the node is not assigned.
    ResourceLimits limits_for(const std::string& node) const;

    bool operator==(const ResourceConfiguration&) const = default;
};

enum class SweepMode { cartesian, explicit_list };

struct ConfigurationSpace {
    SweepMode mode = SweepMode::cartesian;
    // cartesian: node -> dimension -> ordered values
    std::map<std::string, std::map<LimitDimension, std::vector<double>>> dimensions;
    // explicit: full assignments, enumerated verbatim
    std::vector<std::map<std::string, ResourceLimits>> explicit_list;

    bool operator==(const ConfigurationSpace&) const = default;
};

// Number of configurations the space describes, without materializing them.
std::size_t configuration_count(const ConfigurationSpace& space);

// Odometer enumeration (cartesian) or verbatim copy (explicit), indices 0..N-1.
// Throws SpecError on empty dimension lists, unknown or probe node keys, and
// limit values that fail validate_limits.
std::vector<ResourceConfiguration> enumerate_configurations(const ConfigurationSpace& space,
                                                            const TopologyDescriptor& topo);

// One-line human rendering, e.g. "DB[cpu_time=0.05] LB[cpu_cores=2,cpu_time=0.2]".
std::string describe_configuration(const ResourceConfiguration& config);

// Fixed statement of how cpu_time is interpreted; recorded in every manifest.
inline constexpr std::string_view kCpuTimeInterpretation =
    "cpu_time is a fraction of total machine CPU time in (0,1]; container backend applies it as a "
    "CFS bandwidth quota of cpu_time x 100 ms per 100 ms period";

}  // namespace chainprof
