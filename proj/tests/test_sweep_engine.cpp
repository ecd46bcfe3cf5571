#include <doctest.h>

#include <set>

#include "chainprof/errors.hpp"
#include "chainprof/sim_backend.hpp"
#include "chainprof/sweep_engine.hpp"
#include "test_support.hpp"

using namespace chainprof;
using namespace chainprof::testing;
using nlohmann::json;

namespace {

const HostDescriptor kHost{"test cpu", 4, 8192};

RunOptions options(unsigned workers = 1) {
    RunOptions o;
    o.host = kHost;
    o.workers = workers;
    return o;
}

// Wraps the simulated backend and injects failures for chosen runs.
class ScriptedBackend : public Backend {
public:
    explicit ScriptedBackend(std::map<std::string, SimVNFModel> models) : sim_(std::move(models)) {}

    RunResult execute_run(const TopologyDescriptor& topo, const ResourceConfiguration& config, std::size_t repetition,
                          std::uint64_t seed) override {
        ++calls;
        const auto key = std::make_pair(config.index, repetition);
        if (timeouts.count(key)) throw CollectionTimeout("run stalled");
        if (deploy_failures.count(key)) throw DeployError("VE", "image not found");
        auto result = sim_.execute_run(topo, config, repetition, seed);
        if (node_failures.count(key)) {
            result.nodes["VE"].files.clear();
            result.nodes["VE"].failure = "container exited with status 137";
        }
        if (drop_files.count(key)) result.nodes["VE"].files.clear();
        return result;
    }
    bool concurrency_safe() const override { return false; }
    ExecutorKind executor_kind() const override { return ExecutorKind::simulated; }
    std::size_t live_deployments() const override { return sim_.live_deployments(); }

    std::set<std::pair<std::size_t, std::size_t>> timeouts, deploy_failures, node_failures, drop_files;
    int calls = 0;

private:
    SimulatedBackend sim_;
};

RunResult result_with(const json& doc) {
    RunResult r;
    r.nodes["VE"].files["out/result.json"] = doc;
    return r;
}

MetricSpec metric(const std::string& key) { return {"m", "VE", "out/result.json", key, "", true}; }

ExtractionError::Kind extraction_kind(const RunResult& r, const MetricSpec& m) {
    try {
        extract_metric(r, m);
    } catch (const ExtractionError& e) {
        return e.kind();
    }
    FAIL("expected an extraction error");
    return ExtractionError::Kind::missing_node;
}

}  // namespace

TEST_CASE("run plan is config-major with distinct seeds") {
    const auto plan = make_run_plan(4, 3, 99);
    REQUIRE(plan.size() == 12);
    std::set<std::uint64_t> seeds;
    for (std::size_t i = 0; i < plan.size(); ++i) {
        CHECK(plan[i].config_index == i / 3);
        CHECK(plan[i].repetition == i % 3);
        seeds.insert(plan[i].seed);
    }
    CHECK(seeds.size() == 12);
}

TEST_CASE("extract_metric reads values and reports each failure distinctly") {
    CHECK(extract_metric(result_with({{"throughput", 93.5}}), metric("throughput")) == 93.5);
    CHECK(extract_metric(result_with({{"throughput", "12.25"}}), metric("throughput")) == 12.25);

    try {
        extract_metric(result_with({{"throughput", 1}}), metric("latency"));
        FAIL("expected a missing key");
    } catch (const ExtractionError& e) {
        CHECK(e.kind() == ExtractionError::Kind::missing_key);
        const std::string what = e.what();
        CHECK(what.find("MetricMissing") != std::string::npos);
        CHECK(what.find("VE") != std::string::npos);
        CHECK(what.find("latency") != std::string::npos);
    }
    try {
        extract_metric(result_with({{"throughput", "NaN"}}), metric("throughput"));
        FAIL("expected a non-finite value");
    } catch (const ExtractionError& e) {
        CHECK(e.kind() == ExtractionError::Kind::non_finite);
        CHECK(std::string(e.what()).find("NonFinite") != std::string::npos);
    }
    CHECK(extraction_kind(result_with({{"throughput", "fast"}}), metric("throughput")) ==
          ExtractionError::Kind::non_numeric);
    CHECK(extraction_kind(result_with({{"throughput", json::array()}}), metric("throughput")) ==
          ExtractionError::Kind::non_numeric);
    CHECK(extraction_kind(RunResult{}, metric("throughput")) == ExtractionError::Kind::missing_node);
    RunResult no_file;
    no_file.nodes["VE"];
    CHECK(extraction_kind(no_file, metric("throughput")) == ExtractionError::Kind::missing_file);
    RunResult failed;
    failed.nodes["VE"].failure = "oom";
    CHECK(extraction_kind(failed, metric("throughput")) == ExtractionError::Kind::node_failed);
}

TEST_CASE("2 configs x 3 repetitions x 1 metric gives 6 records") {
    auto spec = parse_json_spec(whitebox_spec_json());
    SimulatedBackend backend(spec.sim_models);
    const auto out = run_profiling(spec, backend, options());
    CHECK(out.bundle.records.size() == 6);
    CHECK(out.bundle.manifest.record_count == 6);
    CHECK(out.bundle.manifest.config_count == 2);
    CHECK(out.bundle.manifest.seed_derivation.find("splitmix64") != std::string::npos);
    CHECK(out.bundle.manifest.cpu_time_interpretation.find("cpu_time") != std::string::npos);
    CHECK(backend.live_deployments() == 0);
    CHECK(backend.total_runs() == 6);
}

TEST_CASE("25 repetitions of one configuration give 25 records per metric") {
    auto doc = whitebox_spec_json();
    doc["repetitions"] = 25;
    doc["sweep"] = json::parse(R"({"mode": "explicit", "configurations": [{"VE": {"cpu_time": 0.5}}]})");
    auto spec = parse_json_spec(doc);
    SimulatedBackend backend(spec.sim_models);
    const auto out = run_profiling(spec, backend, options());
    CHECK(out.bundle.records.size() == 25);
    const auto* p = out.bundle.find_profile(ProfileScope::vnfp, "VE");
    REQUIRE(p);
    CHECK(p->table.at(0).at("fps").n == 25);
}

TEST_CASE("identical spec and seed produce identical records; other seeds differ") {
    auto doc = chain_spec_json();
    auto spec = parse_json_spec(doc);
    SimulatedBackend b1(spec.sim_models), b2(spec.sim_models);
    const auto a = run_profiling(spec, b1, options()).bundle;
    const auto b = run_profiling(spec, b2, options()).bundle;
    CHECK(render_records(a.records) == render_records(b.records));

    spec.seed += 1;
    const auto c = run_profiling(spec, b1, options()).bundle;
    CHECK(render_records(a.records) != render_records(c.records));
}

TEST_CASE("sequential and concurrent execution produce identical bundles") {
    auto doc = chain_spec_json();
    doc["repetitions"] = 5;
    auto spec = parse_json_spec(doc);
    SimulatedBackend backend(spec.sim_models);
    const auto seq = run_profiling(spec, backend, options(1)).bundle;
    for (unsigned workers : {2u, 4u, 8u}) {
        const auto par = run_profiling(spec, backend, options(workers)).bundle;
        CHECK(par.records == seq.records);
        CHECK(par.profiles == seq.profiles);
        CHECK(par.manifest.same_content(seq.manifest));
    }
    CHECK(backend.live_deployments() == 0);
}

TEST_CASE("profiles: NSP holds end-to-end metrics, VNFP node metrics, TP everything") {
    auto spec = parse_json_spec(chain_spec_json());
    SimulatedBackend backend(spec.sim_models);
    const auto bundle = run_profiling(spec, backend, options()).bundle;
    std::vector<std::string> stems;
    for (const auto& p : bundle.profiles) stems.push_back(p.file_stem());
    CHECK(stems == std::vector<std::string>{"nsp", "tp-abc", "vnfp-A", "vnfp-B", "vnfp-C"});

    const auto* nsp = bundle.find_profile(ProfileScope::nsp);
    REQUIRE(nsp);
    CHECK(nsp->subject == "chain");
    CHECK(nsp->metrics.size() == 2);
    CHECK(nsp->metrics.count("e2e_tput"));
    CHECK(nsp->table.size() == 3);

    const auto* b = bundle.find_profile(ProfileScope::vnfp, "B");
    REQUIRE(b);
    CHECK(b->metrics.size() == 1);
    CHECK(b->table.at(0).at("b_tput").n == 3);
    CHECK(bundle.find_profile(ProfileScope::vnfp, "A")->table.empty());
    CHECK(bundle.find_profile(ProfileScope::tp)->metrics.size() == 3);

    // Whitebox: the NSP carries every metric.
    auto white = parse_json_spec(whitebox_spec_json());
    SimulatedBackend wb(white.sim_models);
    const auto wbundle = run_profiling(white, wb, options()).bundle;
    CHECK(wbundle.find_profile(ProfileScope::nsp)->metrics.count("fps"));
    CHECK(wbundle.find_profile(ProfileScope::tp) == nullptr);
}

TEST_CASE("every configuration appears `repetitions` times per metric") {
    auto spec = parse_json_spec(chain_spec_json());
    SimulatedBackend backend(spec.sim_models);
    const auto bundle = run_profiling(spec, backend, options()).bundle;
    std::map<std::pair<std::size_t, std::string>, int> counts;
    for (const auto& r : bundle.records) ++counts[{r.config_index, r.metric}];
    CHECK(counts.size() == 3 * spec.metrics.size());
    for (const auto& [key, n] : counts) CHECK(n == 3);
}

TEST_CASE("collection timeout is flagged and the campaign continues") {
    auto spec = parse_json_spec(whitebox_spec_json());
    ScriptedBackend backend(spec.sim_models);
    backend.timeouts = {{1, 1}};
    const auto out = run_profiling(spec, backend, options());
    CHECK(backend.calls == 6);
    CHECK(out.bundle.records.size() == 5);
    REQUIRE(out.bundle.manifest.flagged.size() == 1);
    CHECK(out.bundle.manifest.flagged[0].config_index == 1);
    CHECK(out.bundle.manifest.flagged[0].repetition == 1);
    CHECK(out.bundle.find_profile(ProfileScope::vnfp, "VE")->table.at(1).at("fps").n == 2);
    CHECK(out.warnings.size() == 1);
}

TEST_CASE("node failure markers are flagged per node") {
    auto spec = parse_json_spec(whitebox_spec_json());
    ScriptedBackend backend(spec.sim_models);
    backend.node_failures = {{0, 2}};
    const auto out = run_profiling(spec, backend, options());
    CHECK(out.bundle.records.size() == 5);
    REQUIRE(out.bundle.manifest.flagged.size() == 1);
    CHECK(out.bundle.manifest.flagged[0].node == "VE");
    CHECK(out.bundle.find_profile(ProfileScope::vnfp, "VE")->table.at(0).at("fps").n == 2);
}

TEST_CASE("deploy failure aborts the campaign immediately") {
    auto spec = parse_json_spec(whitebox_spec_json());
    ScriptedBackend backend(spec.sim_models);
    backend.deploy_failures = {{0, 1}};
    TempDir dir("deployfail");
    auto opts = options();
    opts.out_dir = dir / "bundle";
    CHECK_THROWS_AS(run_profiling(spec, backend, opts), DeployError);
    CHECK(backend.calls == 2);
    CHECK_FALSE(std::filesystem::exists(dir / "bundle"));
}

TEST_CASE("a missing result file aborts with an extraction error") {
    auto spec = parse_json_spec(whitebox_spec_json());
    ScriptedBackend backend(spec.sim_models);
    backend.drop_files = {{1, 0}};
    CHECK_THROWS_AS(run_profiling(spec, backend, options()), ExtractionError);
}

TEST_CASE("limits the host cannot honor are refused up front") {
    auto doc = whitebox_spec_json();
    doc["sweep"]["dimensions"]["VE"]["cpu_cores"] = json::array({1, 64});
    auto spec = parse_json_spec(doc);
    struct RealSim : SimulatedBackend {
        using SimulatedBackend::SimulatedBackend;
        ExecutorKind executor_kind() const override { return ExecutorKind::real; }
    } backend(spec.sim_models);
    CHECK_THROWS_AS(run_profiling(spec, backend, options()), SpecError);
    CHECK(backend.total_runs() == 0);
}

TEST_CASE("post-process hook receives the bundle path; failures are warnings") {
    TempDir dir("hook");
    const auto script = dir / "hook.sh";
    write_text_file(script,
                    "#!/bin/sh\n"
                    "echo \"arg=$1\"\n"
                    "echo \"env=$CHAINPROF_BUNDLE\"\n"
                    "echo oops >&2\n"
                    "exit 3\n");
    std::filesystem::permissions(script, std::filesystem::perms::owner_all);

    auto doc = whitebox_spec_json();
    doc["post_process"] = script.string();
    auto spec = parse_json_spec(doc);
    SimulatedBackend backend(spec.sim_models);
    auto opts = options();
    opts.out_dir = dir / "bundle";
    const auto out = run_profiling(spec, backend, opts);
    REQUIRE(out.hook_exit_code);
    CHECK(*out.hook_exit_code == 3);
    CHECK(out.warnings.size() == 1);

    const auto bundle_path = std::filesystem::absolute(dir / "bundle").string();
    const auto log = read_text_file(dir / "bundle" / "logs" / "post_process.log");
    CHECK(log.find("arg=" + bundle_path) != std::string::npos);
    CHECK(log.find("env=" + bundle_path) != std::string::npos);
    CHECK(log.find("oops") != std::string::npos);
    CHECK(load_bundle(dir / "bundle").records.size() == 6);

    CHECK(run_post_process((dir / "missing.sh").string(), dir / "bundle", dir / "missing.log") == 127);
}

TEST_CASE("measured baseline runs the unlimited configuration deterministically") {
    auto spec = parse_json_spec(chain_spec_json());
    SimulatedBackend backend(spec.sim_models);
    const auto a = measure_baseline(spec, backend, kHost);
    const auto b = measure_baseline(spec, backend, kHost);
    CHECK(a == b);
    CHECK(a.provenance == BaselineVector::Provenance::measured);
    CHECK(a.baselines.size() == 3);
    // Unlimited B runs at its base rate, which binds the chain.
    CHECK(a.baselines.at("b_tput") == doctest::Approx(400).epsilon(0.05));
    CHECK(a.baselines.at("e2e_lat") == 10.0);
}

TEST_CASE("host detection reports a usable descriptor") {
    const auto h = detect_host();
    CHECK(h.physical_cores >= 1);
    CHECK(h.total_mem_mb >= 1);
    CHECK_FALSE(h.cpu_model.empty());
}
