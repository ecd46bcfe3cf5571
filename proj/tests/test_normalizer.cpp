#include <doctest.h>

#include <cmath>
#include <random>

#include "chainprof/errors.hpp"
#include "chainprof/normalizer.hpp"

using namespace chainprof;

namespace {

AggregatedMetric point(double mean) { return {mean, 0.0, 3, mean, mean, true}; }

PerformanceProfile profile(std::map<std::size_t, std::map<std::string, double>> rows,
                           std::map<std::string, bool> higher = {}) {
    PerformanceProfile p;
    p.scope = ProfileScope::vnfp;
    p.subject = "VE";
    for (const auto& [index, row] : rows) {
        for (const auto& [name, value] : row) {
            p.metrics[name] = {"u", higher.count(name) ? higher.at(name) : true, "VE"};
            p.table[index][name] = point(value);
        }
    }
    return p;
}

BaselineVector baseline(std::map<std::string, double> values) {
    BaselineVector b;
    b.baselines = std::move(values);
    return b;
}

}  // namespace

TEST_CASE("dividing by the baseline") {
    const auto p = profile({{0, {{"m", 200.0}}}});
    const auto n = normalize_profile(p, baseline({{"m", 100.0}}));
    CHECK(n.normalized);
    CHECK(n.metrics.at("m").unit == "ratio");
    CHECK(n.table.at(0).at("m").mean == 2.0);
    CHECK(n.table.at(0).at("m").ci95_high == 2.0);

    const auto same = normalize_profile(p, baseline({{"m", 1.0}}));
    CHECK(same.table == p.table);
}

TEST_CASE("missing or non-positive baselines are errors") {
    const auto p = profile({{0, {{"m", 200.0}}}});
    CHECK_THROWS_AS(normalize_profile(p, baseline({{"m", 0.0}})), SpecError);
    CHECK_THROWS_AS(normalize_profile(p, baseline({{"m", -3.0}})), SpecError);
    CHECK_THROWS_AS(normalize_profile(p, baseline({{"other", 1.0}})), SpecError);
}

TEST_CASE("geometric mean score") {
    CHECK(geometric_mean_score(std::vector<double>{1, 1, 1}) == 1.0);
    CHECK(geometric_mean_score(std::vector<double>{2, 0.5}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(geometric_mean_score(std::vector<double>{4, 9}) == doctest::Approx(6.0).epsilon(1e-15));
    CHECK_THROWS_AS(geometric_mean_score(std::vector<double>{}), SpecError);
    CHECK_THROWS_AS(geometric_mean_score(std::vector<double>{1, 0}), SpecError);
    CHECK_THROWS_AS(geometric_mean_score(std::vector<double>{1, -2}), SpecError);
}

TEST_CASE("score ratios do not depend on the baseline") {
    // Rows (4, 9) and (2, 3): GM 6 and sqrt(6), ratio sqrt(6) under any baseline.
    const auto p = profile({{0, {{"a", 4.0}, {"b", 9.0}}}, {1, {{"a", 2.0}, {"b", 3.0}}}});
    for (const auto& b : {baseline({{"a", 1.0}, {"b", 1.0}}), baseline({{"a", 2.0}, {"b", 3.0}}),
                          baseline({{"a", 0.1}, {"b", 70.0}})}) {
        const auto n = normalize_profile(p, b);
        CHECK(row_score(n, 0) / row_score(n, 1) == doctest::Approx(std::sqrt(6.0)).epsilon(1e-12));
    }
    CHECK(row_score(normalize_profile(p, baseline({{"a", 1.0}, {"b", 1.0}})), 0) == doctest::Approx(6.0));
}

TEST_CASE("lower-is-better metrics are inverted in the score") {
    const auto p = profile({{0, {{"tput", 100.0}, {"lat", 4.0}}}, {1, {{"tput", 100.0}, {"lat", 2.0}}}},
                           {{"lat", false}});
    const auto n = normalize_profile(p, baseline({{"tput", 100.0}, {"lat", 2.0}}));
    CHECK(row_score(n, 0) == doctest::Approx(std::sqrt(0.5)));
    CHECK(row_score(n, 1) == doctest::Approx(1.0));
    CHECK_THROWS_AS(row_score(n, 5), SpecError);
}

TEST_CASE("unit baseline covers every metric") {
    const auto p = profile({{0, {{"a", 4.0}, {"b", 9.0}}}});
    const auto b = unit_baseline({p}, HostDescriptor{"cpu", 2, 1024});
    CHECK(b.baselines.size() == 2);
    CHECK(b.host.physical_cores == 2);
    CHECK(normalize_profile(p, b).table == p.table);
}

TEST_CASE("property: reference invariance and ranking preservation") {
    std::mt19937_64 rng(31);
    std::lognormal_distribution<double> value(0.0, 1.5);
    for (int trial = 0; trial < 200; ++trial) {
        const int metrics = 1 + static_cast<int>(rng() % 4);
        const int rows = 2 + static_cast<int>(rng() % 6);
        std::map<std::size_t, std::map<std::string, double>> table;
        std::map<std::string, bool> higher;
        for (int m = 0; m < metrics; ++m) higher["m" + std::to_string(m)] = rng() % 2;
        for (int r = 0; r < rows; ++r) {
            for (int m = 0; m < metrics; ++m) table[r]["m" + std::to_string(m)] = value(rng);
        }
        const auto p = profile(table, higher);
        std::map<std::string, double> b1, b2;
        for (int m = 0; m < metrics; ++m) {
            b1["m" + std::to_string(m)] = value(rng);
            b2["m" + std::to_string(m)] = value(rng);
        }
        const auto n1 = normalize_profile(p, baseline(b1));
        const auto n2 = normalize_profile(p, baseline(b2));
        for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < rows; ++j) {
                const double r1 = row_score(n1, i) / row_score(n1, j);
                const double r2 = row_score(n2, i) / row_score(n2, j);
                CHECK(r1 == doctest::Approx(r2).epsilon(1e-9));
                if (row_score(n1, i) < row_score(n1, j) * (1 - 1e-9)) CHECK(row_score(n2, i) < row_score(n2, j));
            }
        }
    }
}

TEST_CASE("property: normalizing by ones leaves values unchanged") {
    std::mt19937_64 rng(8);
    std::lognormal_distribution<double> value(0.0, 3.0);
    for (int trial = 0; trial < 100; ++trial) {
        const auto p = profile({{0, {{"a", value(rng)}, {"b", value(rng)}}}, {1, {{"a", value(rng)}}}});
        const auto n = normalize_profile(p, unit_baseline({p}, {}));
        CHECK(n.table == p.table);
    }
}
