// sim_backend.hpp - deterministic simulated execution backend.
//
// Each VNF node is an Amdahl-style throughput model (SimVNFModel); a chain's
// end-to-end throughput is the minimum over path node capacities and link
// bandwidths, and its latency the sum of path link delays.
//
// Synthesized result documents, all under kSimResultFile:
//   VNF node      {"throughput": capacity}
//   sink/measure  {"throughput": end-to-end throughput, "latency_ms": path delay}
//   source        {"throughput": end-to-end throughput}
#pragma once

#include <atomic>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "chainprof/backend.hpp"

namespace chainprof {

inline constexpr const char* kSimResultFile = "result.json";

// Output of one VNF model under `limits` for a given unit-normal noise draw:
//   not cpu_bound: raw = base_rate
//   cpu_bound:     t = min(cpu_cores, max_threads), S = 1 / ((1-p) + p/t),
//                  raw = base_rate * cpu_time * S
//   mem_max < mem_floor_mb: raw = 0
//   result = max(0, raw * (1 + noise_std * noise_draw))
double sim_evaluate(const SimVNFModel& model, const ResourceLimits& limits, double noise_draw);

struct ChainMetrics {
    double throughput = 0.0;
    double latency_ms = 0.0;
    // Endpoints along the path, source first.
    std::vector<std::string> path;
};

// Shortest (hop count) directed path from `source` to `sink`; nullopt if none.
std::optional<std::vector<std::string>> find_path(const std::vector<LinkSpec>& links, const std::string& source,
                                                  const std::string& sink);

// End-to-end metrics along the path from the first source probe to `sink`
// (or the first sink probe when empty). Throws SpecError when no
// source-to-sink path exists.
ChainMetrics sim_chain_metric(const TopologyDescriptor& topo, const std::map<std::string, double>& capacities,
                              const std::vector<LinkSpec>& links, const std::string& sink = {});

class SimulatedBackend : public Backend {
public:
    // Every VNF node of the topologies passed to execute_run needs a model.
    explicit SimulatedBackend(std::map<std::string, SimVNFModel> models);

    RunResult execute_run(const TopologyDescriptor& topo, const ResourceConfiguration& config,
                          std::size_t repetition, std::uint64_t run_seed) override;

    bool concurrency_safe() const override { return true; }
    ExecutorKind executor_kind() const override { return ExecutorKind::simulated; }
    std::size_t live_deployments() const override { return live_.load(); }

    std::size_t total_runs() const { return runs_.load(); }

private:
    std::map<std::string, SimVNFModel> models_;
    std::atomic<std::size_t> live_{0};
    std::atomic<std::size_t> runs_{0};
};

}  // namespace chainprof
