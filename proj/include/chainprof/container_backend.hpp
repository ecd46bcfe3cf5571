// container_backend.hpp - execution backend driving a container engine over
// its HTTP remote API (Docker-compatible).
//
// Limits map onto kernel resource controls through the engine:
//   cpu_cores    -> CpusetCpus (lowest free cores after probe reservations)
//   cpu_time     -> CpuQuota = cpu_time * CpuPeriod, CpuPeriod = 100000 us
//   mem_max      -> Memory
//   mem_swap_max -> MemorySwap = Memory + swap
//   block_io_bw  -> BlkioDeviceReadBps and BlkioDeviceWriteBps
// Links are shaped with a netem qdisc inside the sending endpoint.
// Each endpoint writes its result documents to /profiling/out, bind-mounted
// from <volume_root>/<run>/<endpoint>.
#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chainprof/backend.hpp"

namespace chainprof {

inline constexpr const char* kResultMountPath = "/profiling/out";
inline constexpr std::int64_t kCpuPeriodMicros = 100000;

// endpoint id -> pinned cores; endpoints without an entry are not pinned.
using CorePlan = std::map<std::string, std::vector<int>>;

// Reserves probe isolated_cores first, then gives each VNF with cpu_cores the
// lowest-numbered free cores. Throws LimitError on overlap or exhaustion.
CorePlan plan_cores(const TopologyDescriptor& topo, const ResourceConfiguration& config, const HostDescriptor& host);

// HostConfig member of a container-create request. Throws LimitError for
// combinations the engine cannot express (swap without a memory limit).
nlohmann::json host_config_for(const std::string& node, const ResourceLimits& limits, const std::vector<int>* cores,
                               const std::string& volume_host_path, const std::string& block_device);

// Traffic-shaping command for a link, run inside `link.from`; empty when the
// link has neither delay nor bandwidth limit.
std::vector<std::string> shaping_command(const LinkSpec& link, const std::string& interface = "eth0");

struct ContainerRunSettings {
    double warmup_s = 0.0;
    std::optional<double> duration_s;
};

class ContainerBackend : public Backend {
public:
    ContainerBackend(BackendConfig config, HostDescriptor host, ContainerRunSettings settings = {});
    ~ContainerBackend() override;

    RunResult execute_run(const TopologyDescriptor& topo, const ResourceConfiguration& config,
                          std::size_t repetition, std::uint64_t run_seed) override;

    bool concurrency_safe() const override { return false; }
    ExecutorKind executor_kind() const override { return ExecutorKind::real; }
    std::size_t live_deployments() const override { return live_.load(); }

private:
    class Engine;

    BackendConfig config_;
    HostDescriptor host_;
    ContainerRunSettings settings_;
    std::filesystem::path volume_root_;
    std::unique_ptr<Engine> engine_;
    std::atomic<std::size_t> live_{0};
};

}  // namespace chainprof
