#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "chainprof/errors.hpp"
#include "chainprof/seeding.hpp"
#include "chainprof/sim_backend.hpp"

using namespace chainprof;

namespace {

ResourceLimits limits(std::optional<int> cores, std::optional<double> time) {
    ResourceLimits l;
    l.cpu_cores = cores;
    l.cpu_time = time;
    return l;
}

SimVNFModel model(double base, double p, int threads, bool cpu_bound = true) {
    SimVNFModel m;
    m.base_rate = base;
    m.parallel_fraction = p;
    m.max_threads = threads;
    m.cpu_bound = cpu_bound;
    return m;
}

TopologyDescriptor path_topology(int nodes, std::vector<double> delays = {}, std::vector<std::optional<double>> bw = {}) {
    TopologyDescriptor t;
    t.probes.push_back({"s", ProbeRole::source, "src", std::nullopt});
    t.probes.push_back({"t", ProbeRole::sink, "sink", std::nullopt});
    std::string prev = "s";
    for (int i = 0; i <= nodes; ++i) {
        const std::string next = i < nodes ? "N" + std::to_string(i) : "t";
        if (i < nodes) t.nodes.push_back({next, "img"});
        LinkSpec l{prev, next};
        if (static_cast<std::size_t>(i) < delays.size()) l.delay_ms = delays[i];
        if (static_cast<std::size_t>(i) < bw.size()) l.bw_mbps = bw[i];
        t.links.push_back(l);
        prev = next;
    }
    return t;
}

}  // namespace

TEST_CASE("sim_evaluate: single-thread plateau") {
    const auto m = model(100, 1.0, 1);
    CHECK(sim_evaluate(m, limits(1, 1.0), 0.0) == 100);
    CHECK(sim_evaluate(m, limits(4, 1.0), 0.0) == 100);
}

TEST_CASE("sim_evaluate: perfect linear speedup") {
    CHECK(sim_evaluate(model(50, 1.0, 8), limits(2, 1.0), 0.0) == doctest::Approx(100).epsilon(1e-15));
}

TEST_CASE("sim_evaluate: CPU-unbound model ignores CPU limits") {
    const auto m = model(40, 0.5, 4, false);
    for (int n : {1, 2, 8}) {
        for (double q : {0.05, 0.5, 1.0}) CHECK(sim_evaluate(m, limits(n, q), 0.0) == 40);
    }
}

TEST_CASE("sim_evaluate: defaults, memory floor, noise, clamp") {
    auto m = model(200, 0.5, 4);
    CHECK(sim_evaluate(m, ResourceLimits{}, 0.0) == 200);
    CHECK(sim_evaluate(m, limits(std::nullopt, 0.25), 0.0) == 50);

    m.mem_floor_mb = 256;
    ResourceLimits mem;
    mem.mem_max = 128;
    CHECK(sim_evaluate(m, mem, 0.0) == 0);
    mem.mem_max = 256;
    CHECK(sim_evaluate(m, mem, 0.0) == 200);

    m.noise_std = 0.1;
    CHECK(sim_evaluate(m, ResourceLimits{}, 1.0) == doctest::Approx(220));
    CHECK(sim_evaluate(m, ResourceLimits{}, -20.0) == 0);
}

TEST_CASE("property: monotone in cores and time, flat beyond max_threads, Amdahl limit") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        const auto m = model(1 + 1000 * unit(rng), unit(rng), 1 + static_cast<int>(rng() % 8));
        double prev_n = -1;
        for (int n = 1; n <= 16; ++n) {
            const double v = sim_evaluate(m, limits(n, 0.5), 0.0);
            CHECK(v >= prev_n);
            if (n > m.max_threads) CHECK(v == prev_n);
            prev_n = v;
        }
        double prev_q = -1;
        for (double q = 0.05; q <= 1.0; q += 0.05) {
            const double v = sim_evaluate(m, limits(2, q), 0.0);
            CHECK(v >= prev_q);
            prev_q = v;
        }
        if (m.parallel_fraction < 0.99) {
            auto wide = m;
            wide.max_threads = 1 << 30;
            const double limit = m.base_rate * 0.5 / (1.0 - m.parallel_fraction);
            CHECK(sim_evaluate(wide, limits(1 << 30, 0.5), 0.0) == doctest::Approx(limit).epsilon(1e-6));
        }
    }
}

TEST_CASE("sim_chain_metric: min rule and additive delay") {
    auto t = path_topology(3, {5, 10, 5, 0}, {std::nullopt, 120.0});
    std::map<std::string, double> caps = {{"N0", 200}, {"N1", 80}, {"N2", 150}};
    auto m = sim_chain_metric(t, caps, t.links);
    CHECK(m.throughput == 80);
    CHECK(m.latency_ms == 20);
    CHECK(m.path == std::vector<std::string>{"s", "N0", "N1", "N2", "t"});

    auto limited = path_topology(3, {}, {std::nullopt, 50.0});
    CHECK(sim_chain_metric(limited, caps, limited.links).throughput == 50);

    auto broken = path_topology(2);
    broken.links.pop_back();
    CHECK_THROWS_AS(sim_chain_metric(broken, caps, broken.links), SpecError);
}

TEST_CASE("property: chain throughput never exceeds a constituent capacity") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> cap(1, 1000);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 5);
        std::vector<std::optional<double>> bw;
        for (int i = 0; i <= n; ++i) bw.push_back(rng() % 3 == 0 ? std::optional<double>(cap(rng)) : std::nullopt);
        auto t = path_topology(n, {}, bw);
        std::map<std::string, double> caps;
        double brute = INFINITY;
        for (const auto& node : t.nodes) brute = std::min(brute, caps[node.id] = cap(rng));
        for (const auto& b : bw) {
            if (b) brute = std::min(brute, *b);
        }
        const auto m = sim_chain_metric(t, caps, t.links);
        CHECK(m.throughput == brute);
        for (const auto& [id, c] : caps) CHECK(m.throughput <= c);
    }
}

TEST_CASE("execute_run synthesizes node and probe results") {
    auto t = path_topology(2, {1, 2, 3});
    SimulatedBackend backend({{"N0", model(300, 1, 1)}, {"N1", model(100, 1, 1)}});
    ResourceConfiguration config;
    config.assignments["N1"].cpu_time = 0.5;
    const auto r = backend.execute_run(t, config, 0, 17);
    CHECK(r.nodes.at("N0").files.at(kSimResultFile)["throughput"] == 300.0);
    CHECK(r.nodes.at("N1").files.at(kSimResultFile)["throughput"] == 50.0);
    CHECK(r.nodes.at("t").files.at(kSimResultFile)["throughput"] == 50.0);
    CHECK(r.nodes.at("t").files.at(kSimResultFile)["latency_ms"] == 6.0);
    CHECK(r.nodes.at("s").files.at(kSimResultFile)["throughput"] == 50.0);
    CHECK(backend.live_deployments() == 0);
    CHECK(backend.total_runs() == 1);
    CHECK(backend.concurrency_safe());
    CHECK(backend.executor_kind() == ExecutorKind::simulated);
}

TEST_CASE("execute_run is bit-identical for equal seeds and differs across seeds") {
    auto t = path_topology(3);
    auto noisy = model(100, 0.8, 4);
    noisy.noise_std = 0.05;
    SimulatedBackend backend({{"N0", noisy}, {"N1", noisy}, {"N2", noisy}});
    ResourceConfiguration config;
    const auto a = backend.execute_run(t, config, 0, 1234);
    const auto b = backend.execute_run(t, config, 0, 1234);
    const auto c = backend.execute_run(t, config, 0, 1235);
    for (const auto& [id, node] : a.nodes) CHECK(node.files == b.nodes.at(id).files);
    CHECK(a.nodes.at("N0").files != c.nodes.at("N0").files);
    // Different nodes draw from different streams.
    CHECK(a.nodes.at("N0").files != a.nodes.at("N1").files);
}

TEST_CASE("missing model is a deploy error naming the node") {
    SimulatedBackend backend({});
    TopologyDescriptor t;
    t.nodes.push_back({"VE", "img"});
    try {
        backend.execute_run(t, ResourceConfiguration{}, 0, 1);
        FAIL("expected a deploy error");
    } catch (const DeployError& e) {
        CHECK(e.node() == "VE");
        CHECK(e.exit_code() == 3);
    }
    CHECK(backend.live_deployments() == 0);
}

TEST_CASE("seed derivation: distinct per run, stable constants") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t c = 0; c < 50; ++c) {
        for (std::uint64_t r = 0; r < 50; ++r) seen.insert(derive_run_seed(7, c, r));
    }
    CHECK(seen.size() == 2500);
    // splitmix64 reference output for state 0.
    CHECK(mix64(0) == 0xe220a8397b1dcdafULL);
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("normal stream has unit moments") {
    NormalStream s(99);
    double sum = 0, sq = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = s.next_normal();
        sum += z;
        sq += z * z;
    }
    CHECK(std::fabs(sum / n) < 0.01);
    CHECK(std::fabs(sq / n - 1.0) < 0.02);
}

TEST_CASE("model validation") {
    CHECK(validate_sim_model(model(1, 0.5, 1)).ok());
    CHECK_FALSE(validate_sim_model(model(0, 0.5, 1)).ok());
    CHECK_FALSE(validate_sim_model(model(1, 1.5, 1)).ok());
    CHECK_FALSE(validate_sim_model(model(1, 0.5, 0)).ok());
    auto m = model(1, 0.5, 1);
    m.noise_std = -0.1;
    CHECK_FALSE(validate_sim_model(m).ok());
}
