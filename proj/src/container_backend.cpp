#include "chainprof/container_backend.hpp"

#include <sys/socket.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <httplib.h>

#include "chainprof/errors.hpp"

namespace chainprof {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join_cores(const std::vector<int>& cores) {
    std::string out;
    for (int c : cores) out += (out.empty() ? "" : ",") + std::to_string(c);
    return out;
}

std::int64_t mib_to_bytes(double mib) { return static_cast<std::int64_t>(std::llround(mib * 1024.0 * 1024.0)); }

std::string format_number(double v) {
    std::ostringstream os;
    os.precision(9);
    os << v;
    return os.str();
}

}  // namespace

CorePlan plan_cores(const TopologyDescriptor& topo, const ResourceConfiguration& config, const HostDescriptor& host) {
    CorePlan plan;
    std::set<int> reserved;
    for (const auto& probe : topo.probes) {
        if (!probe.isolated_cores) continue;
        for (int c : *probe.isolated_cores) {
            if (c < 0 || c >= host.physical_cores) {
                throw LimitError(probe.id, "isolated core " + std::to_string(c) + " does not exist on a host with " +
                                               std::to_string(host.physical_cores) + " cores");
            }
            if (!reserved.insert(c).second) {
                throw LimitError(probe.id, "isolated core " + std::to_string(c) + " is already reserved by another probe");
            }
        }
        plan[probe.id] = *probe.isolated_cores;
        std::sort(plan[probe.id].begin(), plan[probe.id].end());
    }

    std::set<int> taken = reserved;
    for (const auto& node : topo.nodes) {
        const auto limits = config.limits_for(node.id);
        if (!limits.cpu_cores) continue;
        std::vector<int> cores;
        for (int c = 0; c < host.physical_cores && static_cast<int>(cores.size()) < *limits.cpu_cores; ++c) {
            if (!taken.count(c)) cores.push_back(c);
        }
        if (static_cast<int>(cores.size()) < *limits.cpu_cores) {
            const bool probes_involved = !reserved.empty();
            throw LimitError(node.id, "needs " + std::to_string(*limits.cpu_cores) + " cores but only " +
                                          std::to_string(cores.size()) + " are free" +
                                          (probes_involved ? "; core set would overlap probe isolated cores {" +
                                                                 join_cores({reserved.begin(), reserved.end()}) + "}"
                                                           : std::string()));
        }
        taken.insert(cores.begin(), cores.end());
        plan[node.id] = std::move(cores);
    }

    // Unpinned VNFs may use any core that is not isolated for a probe.
    if (!reserved.empty()) {
        std::vector<int> shared;
        for (int c = 0; c < host.physical_cores; ++c) {
            if (!reserved.count(c)) shared.push_back(c);
        }
        for (const auto& node : topo.nodes) {
            if (plan.count(node.id)) continue;
            if (shared.empty()) throw LimitError(node.id, "every host core is isolated for probes");
            plan[node.id] = shared;
        }
    }
    return plan;
}

json host_config_for(const std::string& node, const ResourceLimits& limits, const std::vector<int>* cores,
                     const std::string& volume_host_path, const std::string& block_device) {
    json hc = json::object();
    hc["Binds"] = json::array({volume_host_path + ":" + kResultMountPath});
    hc["CapAdd"] = json::array({"NET_ADMIN"});
    if (cores && !cores->empty()) hc["CpusetCpus"] = join_cores(*cores);
    if (limits.cpu_time) {
        hc["CpuPeriod"] = kCpuPeriodMicros;
        hc["CpuQuota"] = static_cast<std::int64_t>(std::llround(*limits.cpu_time * kCpuPeriodMicros));
    }
    if (limits.mem_max) hc["Memory"] = mib_to_bytes(*limits.mem_max);
    if (limits.mem_swap_max) {
        if (!limits.mem_max) throw LimitError(node, "mem_swap_max requires mem_max on the container backend");
        hc["MemorySwap"] = mib_to_bytes(*limits.mem_max) + mib_to_bytes(*limits.mem_swap_max);
    }
    if (limits.block_io_bw) {
        const json throttle = json::array({{{"Path", block_device}, {"Rate", mib_to_bytes(*limits.block_io_bw)}}});
        hc["BlkioDeviceReadBps"] = throttle;
        hc["BlkioDeviceWriteBps"] = throttle;
    }
    return hc;
}

std::vector<std::string> shaping_command(const LinkSpec& link, const std::string& interface) {
    if (link.delay_ms <= 0.0 && !link.bw_mbps) return {};
    std::vector<std::string> cmd{"tc", "qdisc", "replace", "dev", interface, "root", "netem"};
    if (link.delay_ms > 0.0) {
        cmd.push_back("delay");
        cmd.push_back(format_number(link.delay_ms) + "ms");
    }
    if (link.bw_mbps) {
        cmd.push_back("rate");
        cmd.push_back(format_number(*link.bw_mbps) + "mbit");
    }
    return cmd;
}

// ---------------------------------------------------------------------------
// Engine API client

class ContainerBackend::Engine {
public:
    explicit Engine(const std::string& endpoint) : endpoint_(endpoint) {}

    std::unique_ptr<httplib::Client> client(double read_timeout_s = 30.0) const {
        std::unique_ptr<httplib::Client> c;
        constexpr std::string_view kUnix = "unix://";
        if (endpoint_.rfind(kUnix, 0) == 0) {
            c = std::make_unique<httplib::Client>(endpoint_.substr(kUnix.size()));
            c->set_address_family(AF_UNIX);
        } else {
            c = std::make_unique<httplib::Client>(endpoint_);
        }
        c->set_connection_timeout(5, 0);
        const auto secs = static_cast<time_t>(read_timeout_s);
        c->set_read_timeout(secs, static_cast<time_t>((read_timeout_s - secs) * 1e6));
        c->set_write_timeout(30, 0);
        return c;
    }

    bool ping() const {
        auto res = client(5.0)->Get("/_ping");
        return res && res->status == 200;
    }

    std::string create(const std::string& node, const std::string& name, const json& body) const {
        auto res = client()->Post("/containers/create?name=" + name, body.dump(), "application/json");
        if (!res) throw DeployError(node, "create request failed: " + httplib::to_string(res.error()));
        if (res->status != 201 && res->status != 200) {
            throw DeployError(node, "create returned HTTP " + std::to_string(res->status) + ": " + res->body);
        }
        auto doc = json::parse(res->body, nullptr, false);
        if (!doc.is_object() || !doc.contains("Id") || !doc["Id"].is_string()) {
            throw DeployError(node, "create response carries no container id");
        }
        return doc["Id"].get<std::string>();
    }

    void start(const std::string& node, const std::string& id) const {
        auto res = client()->Post("/containers/" + id + "/start", "", "application/json");
        if (!res) throw DeployError(node, "start request failed: " + httplib::to_string(res.error()));
        if (res->status != 204 && res->status != 304) {
            throw DeployError(node, "start returned HTTP " + std::to_string(res->status) + ": " + res->body);
        }
    }

    void exec(const std::string& node, const std::string& id, const std::vector<std::string>& cmd) const {
        auto c = client();
        auto created = c->Post("/containers/" + id + "/exec",
                               json{{"Cmd", cmd}, {"AttachStdout", false}, {"AttachStderr", false}}.dump(),
                               "application/json");
        if (!created || created->status != 201) {
            throw LimitError(node, "cannot create traffic-shaping exec" +
                                       (created ? " (HTTP " + std::to_string(created->status) + ")" : std::string()));
        }
        auto doc = json::parse(created->body, nullptr, false);
        if (!doc.is_object() || !doc.contains("Id")) throw LimitError(node, "exec response carries no id");
        auto started = c->Post("/exec/" + doc["Id"].get<std::string>() + "/start",
                               json{{"Detach", true}}.dump(), "application/json");
        if (!started || (started->status != 200 && started->status != 204)) {
            throw LimitError(node, "traffic-shaping exec failed to start");
        }
    }

    // Blocks until the container stops; false on timeout.
    bool wait(const std::string& id, double timeout_s) const {
        auto res = client(timeout_s)->Post("/containers/" + id + "/wait?condition=not-running", "", "application/json");
        return res && res->status == 200;
    }

    std::string logs(const std::string& id) const {
        auto res = client()->Get("/containers/" + id + "/logs?stdout=1&stderr=1");
        return res && res->status == 200 ? res->body : std::string();
    }

    // Best effort; used on every exit path.
    bool remove(const std::string& id) const noexcept {
        try {
            auto c = client();
            c->Post("/containers/" + id + "/stop?t=2", "", "application/json");
            auto res = c->Delete("/containers/" + id + "?force=true&v=true");
            return res && (res->status == 204 || res->status == 404);
        } catch (...) {
            return false;
        }
    }

private:
    std::string endpoint_;
};

ContainerBackend::ContainerBackend(BackendConfig config, HostDescriptor host, ContainerRunSettings settings)
    : config_(std::move(config)), host_(std::move(host)), settings_(settings) {
    if (!config_.endpoint) throw SpecError("/backend/endpoint", "endpoint is required for the container backend");
    engine_ = std::make_unique<Engine>(*config_.endpoint);
    volume_root_ = config_.volume_root ? fs::path(*config_.volume_root) : fs::temp_directory_path() / "chainprof-volumes";
}

ContainerBackend::~ContainerBackend() = default;

namespace {

void collect_results(const fs::path& dir, NodeResult& out) {
    if (!fs::is_directory(dir)) return;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
        const std::string rel = fs::relative(entry.path(), dir).generic_string();
        std::ifstream in(entry.path());
        std::stringstream ss;
        ss << in.rdbuf();
        auto doc = json::parse(ss.str(), nullptr, false);
        if (doc.is_discarded() || !doc.is_object()) {
            out.log += "unreadable result document " + rel + "\n";
            continue;
        }
        out.files[rel] = std::move(doc);
    }
}

}  // namespace

RunResult ContainerBackend::execute_run(const TopologyDescriptor& topo, const ResourceConfiguration& config,
                                        std::size_t repetition, std::uint64_t run_seed) {
    // Limit mapping is checked before anything is deployed.
    for (const auto& [node, limits] : config.assignments) {
        auto v = validate_limits(limits, host_, ExecutorKind::real);
        if (!v.ok()) throw LimitError(node, v.summary());
    }
    const CorePlan cores = plan_cores(topo, config, host_);

    char tag[32];
    std::snprintf(tag, sizeof tag, "c%zu-r%zu-%016llx", config.index, repetition,
                  static_cast<unsigned long long>(run_seed));
    const fs::path run_dir = volume_root_ / tag;

    struct Endpoint {
        std::string id;
        std::string image;
        ResourceLimits limits;
        bool probe = false;
        ProbeRole role = ProbeRole::measure;
    };
    std::vector<Endpoint> endpoints;
    for (const auto& n : topo.nodes) endpoints.push_back({n.id, n.image, config.limits_for(n.id), false});
    for (const auto& p : topo.probes) endpoints.push_back({p.id, p.image, {}, true, p.role});

    std::map<std::string, json> bodies;
    for (const auto& e : endpoints) {
        auto it = cores.find(e.id);
        json body = {{"Image", e.image},
                     {"Labels", {{"chainprof.run", tag}, {"chainprof.endpoint", e.id}}},
                     {"Env", json::array({"CHAINPROF_CONFIG_INDEX=" + std::to_string(config.index),
                                          "CHAINPROF_REPETITION=" + std::to_string(repetition),
                                          "CHAINPROF_WARMUP_S=" + format_number(settings_.warmup_s),
                                          "CHAINPROF_DURATION_S=" +
                                              (settings_.duration_s ? format_number(*settings_.duration_s) : "")})},
                     {"HostConfig", host_config_for(e.id, e.limits, it == cores.end() ? nullptr : &it->second,
                                                    (run_dir / e.id).string(), config_.block_device)}};
        bodies[e.id] = std::move(body);
    }

    if (!engine_->ping()) throw DeployError("", "container engine unreachable at " + *config_.endpoint);

    // Teardown guard: every created container is removed on all exit paths.
    struct Teardown {
        const Engine& engine;
        std::atomic<std::size_t>& live;
        std::vector<std::string> ids;
        ~Teardown() {
            for (auto it = ids.rbegin(); it != ids.rend(); ++it) {
                engine.remove(*it);
                --live;
            }
        }
    } teardown{*engine_, live_, {}};

    std::map<std::string, std::string> container_ids;
    for (const auto& e : endpoints) {
        std::error_code ec;
        fs::create_directories(run_dir / e.id, ec);
        if (ec) throw DeployError(e.id, "cannot create result volume: " + ec.message());
        const std::string id = engine_->create(e.id, std::string("chainprof-") + tag + "-" + e.id, bodies[e.id]);
        teardown.ids.push_back(id);
        ++live_;
        container_ids[e.id] = id;
    }

    // VNFs first, then sinks and monitors, sources last.
    auto start_order = [](const Endpoint& e) { return !e.probe ? 0 : e.role == ProbeRole::source ? 2 : 1; };
    std::vector<const Endpoint*> ordered;
    for (const auto& e : endpoints) ordered.push_back(&e);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [&](const Endpoint* a, const Endpoint* b) { return start_order(*a) < start_order(*b); });
    for (const auto* e : ordered) engine_->start(e->id, container_ids[e->id]);

    for (const auto& link : topo.links) {
        auto cmd = shaping_command(link);
        if (!cmd.empty()) engine_->exec(link.from, container_ids[link.from], cmd);
    }

    // Probes end a blackbox run; in whitebox mode the VNFs themselves do.
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(config_.run_timeout_s);
    for (const auto& e : endpoints) {
        if (!topo.probes.empty() && !e.probe) continue;
        const double remaining =
            std::chrono::duration<double>(deadline - std::chrono::steady_clock::now()).count();
        if (remaining <= 0 || !engine_->wait(container_ids[e.id], remaining)) {
            throw CollectionTimeout("endpoint '" + e.id + "' did not finish within " +
                                    format_number(config_.run_timeout_s) + " s");
        }
    }

    RunResult result;
    for (const auto& e : endpoints) {
        auto& node = result.nodes[e.id];
        node.log = engine_->logs(container_ids[e.id]);
        collect_results(run_dir / e.id, node);
    }
    return result;
}

}  // namespace chainprof
