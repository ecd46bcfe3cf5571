#include <doctest.h>

#include <algorithm>

#include "chainprof/analysis.hpp"
#include "chainprof/errors.hpp"
#include "chainprof/sim_backend.hpp"
#include "chainprof/sweep_engine.hpp"
#include "test_support.hpp"

using namespace chainprof;
using namespace chainprof::testing;
using nlohmann::json;

namespace {

ProfileBundle run_demo(const std::string& file) {
    auto spec = load_experiment(std::filesystem::path(CHAINPROF_DEMO_DIR) / file);
    SimulatedBackend backend(spec.sim_models);
    RunOptions o;
    o.host = {"cpu", 4, 8192};
    return run_profiling(spec, backend, o).bundle;
}

const json* find_fit(const json& report, const std::string& metric, const std::string& node, const std::string& dim,
                     const std::string& scope = "VNFP") {
    for (const auto& f : report["fits"]) {
        if (f["metric"] == metric && f["node"] == node && f["dimension"] == dim && f["scope"] == scope) return &f;
    }
    return nullptr;
}

}  // namespace

TEST_CASE("a CPU-unbound function is reported insensitive to cores") {
    const auto report = analyze_bundle(run_demo("db_analogue.json"), {});
    const auto* fit = find_fit(report.document, "throughput", "DB", "cpu_cores");
    REQUIRE(fit);
    CHECK((*fit)["kind"] == "constant");
    CHECK((*fit)["behavior_class"] == "insensitive");
    CHECK((*fit)["saturation_point"].is_null());
    CHECK((*fit)["points"] == 4);
}

TEST_CASE("a two-thread function saturates at two cores") {
    const auto report = analyze_bundle(run_demo("nginx_analogue.json"), {});
    const auto* fit = find_fit(report.document, "throughput", "WS", "cpu_cores");
    REQUIRE(fit);
    CHECK((*fit)["kind"] == "plateau");
    CHECK((*fit)["behavior_class"] == "saturating");
    CHECK((*fit)["saturation_point"] == 2.0);
    CHECK((*fit)["params"]["knee"] == 2.0);
}

TEST_CASE("a single-thread function scales with CPU time but not cores") {
    const auto report = analyze_bundle(run_demo("single_thread_analogue.json"), {});
    const auto* cores = find_fit(report.document, "throughput", "IPS", "cpu_cores");
    const auto* time = find_fit(report.document, "throughput", "IPS", "cpu_time");
    REQUIRE(cores);
    REQUIRE(time);
    CHECK((*cores)["behavior_class"] == "insensitive");
    CHECK((*time)["kind"] == "linear");
    CHECK((*time)["behavior_class"] == "scaling");
}

TEST_CASE("SLA answers appear in fits; unreachable targets are reported, not thrown") {
    const auto bundle = run_demo("nginx_analogue.json");
    AnalysisOptions opts;
    opts.sla_targets["throughput"] = 6000;
    auto report = analyze_bundle(bundle, opts);
    auto* fit = find_fit(report.document, "throughput", "WS", "cpu_cores");
    REQUIRE(fit);
    CHECK((*fit)["sla"]["status"] == "ok");
    CHECK((*fit)["sla"]["allocation"] == 2.0);

    opts.sla_targets["throughput"] = 1e6;
    report = analyze_bundle(bundle, opts);
    fit = find_fit(report.document, "throughput", "WS", "cpu_cores");
    CHECK((*fit)["sla"]["status"] == "unreachable");
    CHECK((*fit)["sla"]["allocation"].is_null());

    opts.sla_targets = {{"nonexistent", 1.0}};
    CHECK_THROWS_AS(analyze_bundle(bundle, opts), SpecError);
    AnalysisOptions bad_ref;
    bad_ref.reference_config = 99;
    CHECK_THROWS_AS(analyze_bundle(bundle, bad_ref), SpecError);
}

TEST_CASE("the demo chain identifies its bottleneck") {
    const auto bundle = run_demo("chain.json");
    const auto report = analyze_bundle(bundle, {});
    const auto& doc = report.document;
    CHECK(doc["bundle"] == "web-chain");
    CHECK(doc["spec_digest"] == bundle.manifest.spec_digest);
    bool found = false;
    for (const auto& s : doc["sensitivity"]) {
        if (s["metric"] == "e2e_throughput" && s["dimension"] == "cpu_time") {
            CHECK(s["bottleneck"] == "IPS");
            found = true;
        }
    }
    CHECK(found);
    const auto* e2e = find_fit(doc, "e2e_throughput", "IPS", "cpu_time", "NSP");
    REQUIRE(e2e);
    CHECK((*e2e)["behavior_class"] == "scaling");
    CHECK(find_fit(doc, "e2e_throughput", "LB", "cpu_time", "NSP"));
}

TEST_CASE("dimension filter restricts fits") {
    const auto bundle = run_demo("single_thread_analogue.json");
    AnalysisOptions opts;
    opts.dimensions = {LimitDimension::cpu_time};
    const auto report = analyze_bundle(bundle, opts);
    for (const auto& f : report.document["fits"]) CHECK(f["dimension"] == "cpu_time");
    CHECK_FALSE(report.document["fits"].empty());
}

TEST_CASE("marginals with too few values are skipped with a reason") {
    auto doc = whitebox_spec_json();
    auto spec = parse_json_spec(doc);
    SimulatedBackend backend(spec.sim_models);
    RunOptions o;
    o.host = {"cpu", 4, 8192};
    const auto bundle = run_profiling(spec, backend, o).bundle;
    const auto report = analyze_bundle(bundle, {});
    CHECK(report.document["fits"].empty());
    REQUIRE(report.document["skipped"].size() == 1);
    CHECK(report.document["skipped"][0]["reason"].get<std::string>().find("distinct") != std::string::npos);
}

TEST_CASE("report and plot series are written under analysis/") {
    const auto bundle = run_demo("nginx_analogue.json");
    const auto report = analyze_bundle(bundle, {});
    TempDir dir("analysis");
    std::filesystem::create_directories(dir / "analysis");
    write_text_file(dir / "analysis" / "stale.txt", "old");
    write_analysis(report, dir.path());
    CHECK_FALSE(std::filesystem::exists(dir / "analysis" / "stale.txt"));
    const auto loaded = json::parse(read_text_file(dir / "analysis" / "report.json"));
    CHECK(loaded == report.document);
    REQUIRE(report.plots.size() == 1);
    CHECK(report.plots[0].file_name == "vnfp-WS__throughput__WS__cpu_cores.csv");
    const auto csv = read_text_file(dir / "analysis" / "plots" / report.plots[0].file_name);
    CHECK(csv.rfind("x,mean,ci_low,ci_high,fitted\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}
