// backend.hpp - execution-backend contract.
//
// A backend performs one full deploy -> limit -> run -> collect -> teardown
// cycle per call to execute_run. Resources are always released before the
// call returns, on success and on every error path.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "chainprof/core_model.hpp"

namespace chainprof {

enum class BackendType { simulated, container };

std::string_view backend_type_name(BackendType t);

struct BackendConfig {
    BackendType type = BackendType::simulated;
    // Remote API of the container engine: http://host:port or unix:///path.
    std::optional<std::string> endpoint;
    // Host directory under which per-node result volumes are created.
    std::optional<std::string> volume_root;
    // Block device throttled for block_io_bw.
    std::string block_device = "/dev/sda";
    // Upper bound for one run, from start to result collection.
    double run_timeout_s = 600.0;

    bool operator==(const BackendConfig&) const = default;
};

// Synthetic performance model of one VNF for the simulated backend.
//   base_rate          primary-metric units/s at cpu_time=1 on one core
//   parallel_fraction  Amdahl parallel fraction p
//   max_threads        threads the function can actually use
//   cpu_bound          false: output independent of CPU limits
//   mem_floor_mb       output collapses to 0 below this mem_max
//   noise_std          relative standard deviation of multiplicative noise
struct SimVNFModel {
    double base_rate = 1.0;
    double parallel_fraction = 1.0;
    int max_threads = 1;
    bool cpu_bound = true;
    double mem_floor_mb = 0.0;
    double noise_std = 0.0;

    bool operator==(const SimVNFModel&) const = default;
};

ValidationResult validate_sim_model(const SimVNFModel& model);

// Result documents of one endpoint: file path (relative to the result
// volume) -> flat JSON object of key -> value.
struct NodeResult {
    std::map<std::string, nlohmann::json> files;
    std::string log;
    // Set when the backend could not collect this endpoint's results.
    std::optional<std::string> failure;
};

struct RunResult {
    std::map<std::string, NodeResult> nodes;
};

class Backend {
public:
    virtual ~Backend() = default;

    // Throws DeployError, LimitError, or CollectionTimeout.
    virtual RunResult execute_run(const TopologyDescriptor& topo, const ResourceConfiguration& config,
                                  std::size_t repetition, std::uint64_t run_seed) = 0;

    // True when independent runs may execute concurrently.
    virtual bool concurrency_safe() const = 0;

    virtual ExecutorKind executor_kind() const = 0;

    // Deployments currently alive; zero whenever no execute_run is in flight.
    virtual std::size_t live_deployments() const = 0;
};

}  // namespace chainprof
