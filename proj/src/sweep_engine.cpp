#include "chainprof/sweep_engine.hpp"

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <set>
#include <thread>

#include "chainprof/container_backend.hpp"
#include "chainprof/errors.hpp"
#include "chainprof/seeding.hpp"
#include "chainprof/sim_backend.hpp"
#include "chainprof/stats.hpp"

extern char** environ;

namespace chainprof {

namespace fs = std::filesystem;

std::vector<RunPlanEntry> make_run_plan(std::size_t config_count, std::size_t repetitions, std::uint64_t seed) {
    std::vector<RunPlanEntry> plan;
    plan.reserve(config_count * repetitions);
    std::set<std::uint64_t> seeds;
    for (std::size_t c = 0; c < config_count; ++c) {
        for (std::size_t r = 0; r < repetitions; ++r) {
            const auto s = derive_run_seed(seed, c, r);
            // mix64 chains are bijective per step, so a collision would be a bug.
            if (!seeds.insert(s).second) throw Error(ErrorCategory::spec, "run seed collision");
            plan.push_back({c, r, s});
        }
    }
    return plan;
}

double extract_metric(const RunResult& result, const MetricSpec& metric) {
    using Kind = ExtractionError::Kind;
    auto node = result.nodes.find(metric.source);
    if (node == result.nodes.end()) {
        throw ExtractionError(Kind::missing_node, "metric '" + metric.name + "': no result for node '" + metric.source + "'");
    }
    if (node->second.failure) {
        throw ExtractionError(Kind::node_failed, "metric '" + metric.name + "': node '" + metric.source +
                                                     "' failed: " + *node->second.failure);
    }
    auto file = node->second.files.find(metric.file);
    if (file == node->second.files.end()) {
        throw ExtractionError(Kind::missing_file, "metric '" + metric.name + "': node '" + metric.source +
                                                      "' has no result file '" + metric.file + "'");
    }
    const auto& doc = file->second;
    if (!doc.is_object() || !doc.contains(metric.key)) {
        throw ExtractionError(Kind::missing_key, "MetricMissing: node '" + metric.source + "' key '" + metric.key +
                                                     "' not in '" + metric.file + "'");
    }
    const auto& v = doc.at(metric.key);
    double value = 0.0;
    if (v.is_number()) {
        value = v.get<double>();
    } else if (v.is_string()) {
        const std::string s = v.get<std::string>();
        char* end = nullptr;
        value = std::strtod(s.c_str(), &end);
        if (s.empty() || end != s.c_str() + s.size()) {
            throw ExtractionError(Kind::non_numeric, "node '" + metric.source + "' key '" + metric.key +
                                                         "' is not numeric: '" + s + "'");
        }
    } else {
        throw ExtractionError(Kind::non_numeric,
                              "node '" + metric.source + "' key '" + metric.key + "' is not numeric");
    }
    if (!std::isfinite(value)) {
        throw ExtractionError(Kind::non_finite, "NonFinite: node '" + metric.source + "' key '" + metric.key + "'");
    }
    return value;
}

std::vector<PerformanceProfile> build_profiles(const std::vector<MeasurementRecord>& records,
                                               std::size_t config_count, const std::vector<MetricSpec>& metrics,
                                               const TopologyDescriptor& topology, const std::string& service,
                                               const HostDescriptor& host) {
    const auto tables = stats::aggregate_bundle(records, config_count, metrics);

    auto make = [&](ProfileScope scope, const std::string& subject, auto&& include) {
        PerformanceProfile p;
        p.scope = scope;
        p.subject = subject;
        p.host = host;
        for (const auto& m : metrics) {
            if (include(m)) p.metrics[m.name] = {m.unit, m.higher_is_better, m.source};
        }
        for (const auto& [key, agg] : tables) {
            const auto& [config_index, node, metric] = key;
            auto info = p.metrics.find(metric);
            if (info != p.metrics.end() && info->second.source == node) p.table[config_index][metric] = agg;
        }
        return p;
    };

    const bool any_probe_metric = std::any_of(metrics.begin(), metrics.end(),
                                              [&](const MetricSpec& m) { return topology.has_probe(m.source); });

    std::vector<PerformanceProfile> out;
    out.push_back(make(ProfileScope::nsp, service, [&](const MetricSpec& m) {
        return !any_probe_metric || topology.has_probe(m.source);
    }));
    for (const auto& node : topology.nodes) {
        out.push_back(make(ProfileScope::vnfp, node.id, [&](const MetricSpec& m) { return m.source == node.id; }));
    }
    if (!topology.variant.empty()) {
        out.push_back(make(ProfileScope::tp, topology.variant, [](const MetricSpec&) { return true; }));
    }
    std::sort(out.begin(), out.end(),
              [](const PerformanceProfile& a, const PerformanceProfile& b) { return a.file_stem() < b.file_stem(); });
    return out;
}

namespace {

struct RunOutcome {
    RunResult result;
    std::exception_ptr error;
};

}  // namespace

CampaignResult run_profiling(const ExperimentSpec& spec, Backend& backend, const RunOptions& options) {
    const auto configs = enumerate_configurations(spec.sweep, spec.topology);
    for (const auto& c : configs) {
        for (const auto& [node, limits] : c.assignments) {
            auto v = validate_limits(limits, options.host, backend.executor_kind());
            if (!v.ok()) {
                throw SpecError("/sweep", "configuration " + std::to_string(c.index) + ", node " + node + ": " + v.summary());
            }
        }
    }

    const auto plan = make_run_plan(configs.size(), spec.repetitions, spec.seed);
    std::vector<RunOutcome> outcomes(plan.size());

    auto execute = [&](std::size_t i) {
        const auto& entry = plan[i];
        try {
            outcomes[i].result =
                backend.execute_run(spec.topology, configs[entry.config_index], entry.repetition, entry.seed);
        } catch (...) {
            outcomes[i].error = std::current_exception();
        }
    };

    const unsigned workers = backend.concurrency_safe() ? std::max(1u, options.workers) : 1u;
    if (workers == 1) {
        for (std::size_t i = 0; i < plan.size(); ++i) {
            execute(i);
            // Deploy and limit errors abort the campaign before further runs.
            if (outcomes[i].error) {
                try {
                    std::rethrow_exception(outcomes[i].error);
                } catch (const CollectionTimeout&) {
                } catch (...) {
                    throw;
                }
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::atomic<bool> abort{false};
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i; !abort && (i = next++) < plan.size();) {
                    execute(i);
                    if (outcomes[i].error) {
                        try {
                            std::rethrow_exception(outcomes[i].error);
                        } catch (const CollectionTimeout&) {
                        } catch (...) {
                            abort = true;
                        }
                    }
                }
            });
        }
        pool.clear();
    }

    // Runs are consumed in plan order, so the first fatal error rethrown below
    // is the earliest one even when runs executed concurrently.
    CampaignResult out;
    auto& bundle = out.bundle;
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const auto& entry = plan[i];
        if (outcomes[i].error) {
            try {
                std::rethrow_exception(outcomes[i].error);
            } catch (const CollectionTimeout& e) {
                bundle.manifest.flagged.push_back({entry.config_index, entry.repetition, "", e.what()});
                out.warnings.push_back("run (" + std::to_string(entry.config_index) + ", " +
                                       std::to_string(entry.repetition) + ") flagged: " + e.what());
                continue;
            }
        }
        std::set<std::string> failed_nodes;
        for (const auto& [node, result] : outcomes[i].result.nodes) {
            if (result.failure) {
                failed_nodes.insert(node);
                bundle.manifest.flagged.push_back({entry.config_index, entry.repetition, node, *result.failure});
            }
        }
        for (const auto& metric : spec.metrics) {
            if (failed_nodes.count(metric.source)) continue;
            const double value = extract_metric(outcomes[i].result, metric);
            bundle.records.push_back(
                {entry.config_index, entry.repetition, metric.source, metric.name, quantize_value(value), metric.unit});
        }
    }
    std::sort(bundle.records.begin(), bundle.records.end(), record_less);

    const nlohmann::json spec_doc = experiment_to_json(spec);
    auto& m = bundle.manifest;
    m.name = spec.name;
    m.spec_digest = canonical_digest(spec_doc);
    m.host = options.host;
    m.config_count = configs.size();
    m.repetitions = spec.repetitions;
    m.metric_count = spec.metrics.size();
    m.record_count = bundle.records.size();
    m.cpu_time_interpretation = std::string(kCpuTimeInterpretation);
    m.seed_derivation = std::string(kSeedDerivation);
    m.backend = std::string(backend_type_name(spec.backend.type));
    m.warmup_s = spec.warmup_s;
    m.duration_s = spec.duration_s;
    m.records_sha256 = sha256_hex(render_records(bundle.records));

    bundle.topology = spec.topology;
    bundle.configurations = configs;
    bundle.metrics = spec.metrics;
    bundle.spec_document = spec_doc;
    bundle.profiles = build_profiles(bundle.records, configs.size(), spec.metrics, spec.topology, spec.name, options.host);
    check_bundle_integrity(bundle);

    if (options.out_dir) {
        out.manifest_digest = write_bundle(bundle, *options.out_dir);
        if (spec.post_process) {
            const auto log_dir = *options.out_dir / "logs";
            std::error_code ec;
            fs::create_directories(log_dir, ec);
            const int code = run_post_process(*spec.post_process, *options.out_dir, log_dir / "post_process.log");
            out.hook_exit_code = code;
            if (code != 0) out.warnings.push_back("post-process hook exited with status " + std::to_string(code));
        }
    }
    return out;
}

BaselineVector measure_baseline(const ExperimentSpec& spec, Backend& backend, const HostDescriptor& host) {
    ExperimentSpec unlimited = spec;
    unlimited.sweep = ConfigurationSpace{};
    unlimited.sweep.mode = SweepMode::explicit_list;
    unlimited.sweep.explicit_list.emplace_back();
    unlimited.post_process.reset();

    RunOptions options;
    options.host = host;
    const auto campaign = run_profiling(unlimited, backend, options);

    BaselineVector baseline;
    baseline.host = host;
    baseline.provenance = BaselineVector::Provenance::measured;
    for (const auto& metric : spec.metrics) {
        std::vector<double> values;
        for (const auto& r : campaign.bundle.records) {
            if (r.metric == metric.name) values.push_back(r.value);
        }
        if (values.empty()) throw SpecError("/metrics", "no baseline samples for metric '" + metric.name + "'");
        baseline.baselines[metric.name] = values.size() >= 2 ? stats::aggregate(values).mean : values.front();
    }
    return baseline;
}

std::unique_ptr<Backend> make_backend(const ExperimentSpec& spec, const HostDescriptor& host) {
    if (spec.backend.type == BackendType::container) {
        return std::make_unique<ContainerBackend>(spec.backend, host, ContainerRunSettings{spec.warmup_s, spec.duration_s});
    }
    return std::make_unique<SimulatedBackend>(spec.sim_models);
}

int run_post_process(const std::string& hook, const fs::path& bundle_dir, const fs::path& log_file) {
    const std::string bundle = fs::absolute(bundle_dir).string();

    std::vector<std::string> env_storage;
    for (char** e = environ; e && *e; ++e) {
        if (std::string_view(*e).rfind(std::string(kBundleEnvVar) + "=", 0) != 0) env_storage.emplace_back(*e);
    }
    env_storage.push_back(std::string(kBundleEnvVar) + "=" + bundle);
    std::vector<char*> envp;
    for (auto& s : env_storage) envp.push_back(s.data());
    envp.push_back(nullptr);

    std::string program = hook;
    std::string argument = bundle;
    char* argv[] = {program.data(), argument.data(), nullptr};

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    const std::string log = log_file.string();
    posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, log.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    posix_spawn_file_actions_adddup2(&actions, STDOUT_FILENO, STDERR_FILENO);

    pid_t pid = 0;
    const int rc = posix_spawn(&pid, program.c_str(), &actions, nullptr, argv, envp.data());
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0) return 127;

    int status = 0;
    while (waitpid(pid, &status, 0) < 0) {
        if (errno != EINTR) return 127;
    }
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    return 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
}

HostDescriptor detect_host() {
    HostDescriptor host;
    host.cpu_model = "unknown";
    std::set<std::pair<std::string, std::string>> physical;
    std::ifstream cpuinfo("/proc/cpuinfo");
    std::string line, physical_id = "0";
    while (std::getline(cpuinfo, line)) {
        auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        std::string key = line.substr(0, colon);
        key.erase(key.find_last_not_of(" \t") + 1);
        std::string value = colon + 2 <= line.size() ? line.substr(colon + 2) : "";
        if (key == "model name" && host.cpu_model == "unknown") host.cpu_model = value;
        if (key == "physical id") physical_id = value;
        if (key == "core id") physical.insert({physical_id, value});
    }
    const unsigned logical = std::max(1u, std::thread::hardware_concurrency());
    host.physical_cores = physical.empty() ? static_cast<int>(logical) : static_cast<int>(physical.size());

    std::ifstream meminfo("/proc/meminfo");
    while (std::getline(meminfo, line)) {
        if (line.rfind("MemTotal:", 0) == 0) {
            host.total_mem_mb = std::max<std::int64_t>(1, std::stoll(line.substr(9)) / 1024);
            break;
        }
    }
    return host;
}

}  // namespace chainprof
