#include "chainprof/sim_backend.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "chainprof/errors.hpp"
#include "chainprof/seeding.hpp"

namespace chainprof {

std::string_view backend_type_name(BackendType t) {
    return t == BackendType::container ? "container" : "simulated";
}

ValidationResult validate_sim_model(const SimVNFModel& m) {
    ValidationResult r;
    if (!(m.base_rate > 0) || !std::isfinite(m.base_rate)) r.error("base_rate", "base_rate must be > 0");
    if (!(m.parallel_fraction >= 0 && m.parallel_fraction <= 1)) {
        r.error("parallel_fraction", "parallel_fraction must be in [0,1]");
    }
    if (m.max_threads < 1) r.error("max_threads", "max_threads must be >= 1");
    if (!(m.mem_floor_mb >= 0) || !std::isfinite(m.mem_floor_mb)) r.error("mem_floor_mb", "mem_floor_mb must be >= 0");
    if (!(m.noise_std >= 0) || !std::isfinite(m.noise_std)) r.error("noise_std", "noise_std must be >= 0");
    return r;
}

double NormalStream::next_normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = next_unit();
    const double u2 = next_unit();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

double sim_evaluate(const SimVNFModel& model, const ResourceLimits& limits, double noise_draw) {
    double raw = model.base_rate;
    if (model.cpu_bound) {
        const double cores = limits.cpu_cores.value_or(1);
        const double quota = limits.cpu_time.value_or(1.0);
        const double threads = std::min<double>(cores, model.max_threads);
        const double p = model.parallel_fraction;
        const double speedup = 1.0 / ((1.0 - p) + p / threads);
        raw = model.base_rate * quota * speedup;
    }
    if (limits.mem_max && *limits.mem_max < model.mem_floor_mb) raw = 0.0;
    return std::max(0.0, raw * (1.0 + model.noise_std * noise_draw));
}

std::optional<std::vector<std::string>> find_path(const std::vector<LinkSpec>& links, const std::string& source,
                                                  const std::string& sink) {
    std::map<std::string, std::vector<std::string>> out_edges;
    for (const auto& l : links) out_edges[l.from].push_back(l.to);

    std::map<std::string, std::string> parent;
    std::queue<std::string> frontier;
    frontier.push(source);
    parent[source] = source;
    while (!frontier.empty()) {
        auto cur = frontier.front();
        frontier.pop();
        if (cur == sink) break;
        for (const auto& next : out_edges[cur]) {
            if (parent.emplace(next, cur).second) frontier.push(next);
        }
    }
    if (!parent.count(sink)) return std::nullopt;

    std::vector<std::string> path{sink};
    while (path.back() != source) path.push_back(parent[path.back()]);
    std::reverse(path.begin(), path.end());
    return path;
}

ChainMetrics sim_chain_metric(const TopologyDescriptor& topo, const std::map<std::string, double>& capacities,
                              const std::vector<LinkSpec>& links, const std::string& sink) {
    const ProbeSpec* src = nullptr;
    const ProbeSpec* dst = nullptr;
    for (const auto& p : topo.probes) {
        if (!src && p.role == ProbeRole::source) src = &p;
        if (sink.empty() ? (!dst && p.role == ProbeRole::sink) : p.id == sink) dst = &p;
    }
    if (!src || !dst) throw SpecError("/topology/probes", "chain needs a source and a sink probe");

    auto path = find_path(links, src->id, dst->id);
    if (!path) throw SpecError("/topology/links", "no path from '" + src->id + "' to '" + dst->id + "'");

    ChainMetrics m;
    m.path = *path;
    m.throughput = std::numeric_limits<double>::infinity();
    for (const auto& hop : *path) {
        if (auto it = capacities.find(hop); it != capacities.end()) m.throughput = std::min(m.throughput, it->second);
    }
    for (std::size_t i = 0; i + 1 < path->size(); ++i) {
        for (const auto& l : links) {
            if (l.from == (*path)[i] && l.to == (*path)[i + 1]) {
                if (l.bw_mbps) m.throughput = std::min(m.throughput, *l.bw_mbps);
                m.latency_ms += l.delay_ms;
                break;
            }
        }
    }
    return m;
}

SimulatedBackend::SimulatedBackend(std::map<std::string, SimVNFModel> models) : models_(std::move(models)) {}

RunResult SimulatedBackend::execute_run(const TopologyDescriptor& topo, const ResourceConfiguration& config,
                                        std::size_t /*repetition*/, std::uint64_t run_seed) {
    // Deployment accounting; released on every exit path.
    struct Deployment {
        std::atomic<std::size_t>& live;
        explicit Deployment(std::atomic<std::size_t>& l) : live(l) { ++live; }
        ~Deployment() { --live; }
    } deployment(live_);
    ++runs_;

    RunResult result;
    std::map<std::string, double> capacities;
    for (const auto& node : topo.nodes) {
        auto it = models_.find(node.id);
        if (it == models_.end()) throw DeployError(node.id, "no simulation model for node");
        NormalStream noise(derive_node_seed(run_seed, node.id));
        const double capacity = sim_evaluate(it->second, config.limits_for(node.id), noise.next_normal());
        capacities[node.id] = capacity;
        result.nodes[node.id].files[kSimResultFile] = nlohmann::json{{"throughput", capacity}};
    }

    const bool blackbox = std::any_of(topo.probes.begin(), topo.probes.end(),
                                      [](const ProbeSpec& p) { return p.role == ProbeRole::sink; });
    if (blackbox) {
        std::optional<ChainMetrics> first_sink;
        for (const auto& probe : topo.probes) {
            if (probe.role != ProbeRole::sink) continue;
            auto m = sim_chain_metric(topo, capacities, topo.links, probe.id);
            result.nodes[probe.id].files[kSimResultFile] =
                nlohmann::json{{"throughput", m.throughput}, {"latency_ms", m.latency_ms}};
            if (!first_sink) first_sink = m;
        }
        for (const auto& probe : topo.probes) {
            if (probe.role == ProbeRole::measure) {
                result.nodes[probe.id].files[kSimResultFile] =
                    nlohmann::json{{"throughput", first_sink->throughput}, {"latency_ms", first_sink->latency_ms}};
            } else if (probe.role == ProbeRole::source) {
                result.nodes[probe.id].files[kSimResultFile] = nlohmann::json{{"throughput", first_sink->throughput}};
            }
        }
    } else {
        for (const auto& probe : topo.probes) result.nodes[probe.id].files[kSimResultFile] = nlohmann::json::object();
    }
    return result;
}

}  // namespace chainprof
