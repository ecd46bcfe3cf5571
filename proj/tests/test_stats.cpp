#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include <boost/math/distributions/students_t.hpp>

#include "chainprof/errors.hpp"
#include "chainprof/stats.hpp"

using namespace chainprof;

namespace {

double rel_err(double a, double b) { return std::fabs(a - b) / std::max(1.0, std::fabs(b)); }

// Independent reference: two-pass moments plus Boost.Math's t quantile.
struct Reference {
    double mean, std, half;
};

Reference reference(const std::vector<double>& x) {
    const double n = static_cast<double>(x.size());
    long double sum = 0;
    for (double v : x) sum += v;
    const long double mean = sum / n;
    long double ss = 0;
    for (double v : x) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(static_cast<double>(ss / (n - 1)));
    boost::math::students_t dist(n - 1);
    const double t = boost::math::quantile(dist, 0.975);
    return {static_cast<double>(mean), sd, t * sd / std::sqrt(n)};
}

}  // namespace

TEST_CASE("zero-variance samples have an interval of width exactly zero") {
    const std::vector<double> x = {5, 5, 5};
    auto a = stats::aggregate(x);
    CHECK(a.mean == 5);
    CHECK(a.std == 0);
    CHECK(a.ci95_low == 5);
    CHECK(a.ci95_high == 5);
    CHECK(a.n == 3);
}

TEST_CASE("{1,2,3} matches the t(0.975, 2) oracle") {
    const std::vector<double> x = {1, 2, 3};
    auto a = stats::aggregate(x);
    CHECK(a.mean == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(a.std == doctest::Approx(1.0).epsilon(1e-15));
    // t(0.975, 2) = 4.302652729911275; 4.302652729911275 / sqrt(3) = 2.4841377117195456
    CHECK(std::fabs(a.mean - a.ci95_low - 2.4841377117195456) < 1e-9);
    CHECK(std::fabs(a.ci95_high - a.mean - 2.4841377117195456) < 1e-9);
}

TEST_CASE("fewer than two samples or non-finite input is rejected") {
    const std::vector<double> one = {7};
    CHECK_THROWS_AS(stats::aggregate(one), InsufficientSamples);
    CHECK_THROWS_AS(stats::aggregate(std::vector<double>{}), InsufficientSamples);
    CHECK_THROWS_AS(stats::aggregate(std::vector<double>{1.0, NAN}), NonFinite);
    CHECK_THROWS_AS(stats::aggregate(std::vector<double>{1.0, INFINITY}), NonFinite);
}

TEST_CASE("t quantile against Boost.Math") {
    for (double df : {1.0, 2.0, 3.0, 4.0, 5.0, 7.0, 10.0, 29.0, 100.0, 1000.0}) {
        boost::math::students_t dist(df);
        for (double p : {0.5, 0.6, 0.9, 0.975, 0.995, 0.9999, 0.025, 0.001}) {
            const double expected = boost::math::quantile(dist, p);
            CHECK(std::fabs(stats::student_t_quantile(p, df) - expected) < 1e-9 * std::max(1.0, std::fabs(expected)));
            CHECK(stats::student_t_cdf(expected, df) == doctest::Approx(p).epsilon(1e-10));
        }
    }
    CHECK(std::isnan(stats::student_t_quantile(0.0, 3)));
    CHECK(std::isnan(stats::student_t_quantile(1.0, 3)));
}

TEST_CASE("incomplete beta closed forms") {
    // I_x(1, 1) = x; I_x(a, 1) = x^a; I_x(1, b) = 1 - (1-x)^b
    for (double x : {0.0, 0.1, 0.5, 0.9, 1.0}) {
        CHECK(stats::incomplete_beta(1, 1, x) == doctest::Approx(x).epsilon(1e-14));
        CHECK(stats::incomplete_beta(3, 1, x) == doctest::Approx(x * x * x).epsilon(1e-13));
        CHECK(stats::incomplete_beta(1, 4, x) == doctest::Approx(1 - std::pow(1 - x, 4)).epsilon(1e-13));
    }
}

TEST_CASE("property: agreement with the reference over random samples") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> size(2, 30);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        const double loc = std::ldexp(noise(rng), static_cast<int>(rng() % 20) - 5);
        const double scale = std::ldexp(1.0, static_cast<int>(rng() % 16) - 8);
        std::vector<double> x(size(rng));
        for (auto& v : x) v = loc + scale * noise(rng);
        const auto a = stats::aggregate(x);
        const auto r = reference(x);
        CHECK(rel_err(a.mean, r.mean) < 1e-6);
        CHECK(std::fabs(a.std - r.std) <= 1e-6 * std::max(r.std, 1e-300));
        CHECK(std::fabs(a.half_width() - r.half) <= 1e-6 * r.half + 1e-12 * std::fabs(r.mean));
        CHECK(a.ci95_low <= a.mean);
        CHECK(a.mean <= a.ci95_high);
    }
}

TEST_CASE("property: shift and scale equivariance") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> noise(10.0, 3.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> x(2 + rng() % 10);
        for (auto& v : x) v = noise(rng);
        const double c = noise(rng);
        std::vector<double> shifted = x, scaled = x;
        for (auto& v : shifted) v += c;
        for (auto& v : scaled) v *= c;
        const auto a = stats::aggregate(x);
        const auto s = stats::aggregate(shifted);
        const auto k = stats::aggregate(scaled);
        CHECK(s.mean == doctest::Approx(a.mean + c).epsilon(1e-12));
        CHECK(s.half_width() == doctest::Approx(a.half_width()).epsilon(1e-9));
        CHECK(k.mean == doctest::Approx(a.mean * c).epsilon(1e-12));
        CHECK(k.std == doctest::Approx(a.std * std::fabs(c)).epsilon(1e-12));
        CHECK(k.half_width() == doctest::Approx(a.half_width() * std::fabs(c)).epsilon(1e-12));
    }
}

TEST_CASE("property: CI width shrinks with n for a fixed variance") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> noise(0.0, 1.0);
    double previous = INFINITY;
    for (std::size_t n : {3u, 5u, 10u, 20u, 40u}) {
        double total = 0;
        for (int trial = 0; trial < 400; ++trial) {
            std::vector<double> x(n);
            for (auto& v : x) v = noise(rng);
            total += stats::aggregate(x).half_width();
        }
        CHECK(total < previous);
        previous = total;
    }
}

TEST_CASE("aggregate_bundle groups by config, node, and metric") {
    std::vector<MetricSpec> metrics = {{"tput", "A", "r.json", "t", "", true}, {"lat", "A", "r.json", "l", "", false}};
    std::vector<MeasurementRecord> records;
    for (std::size_t rep = 0; rep < 3; ++rep) {
        records.push_back({0, rep, "A", "tput", 10.0 + rep, ""});
        records.push_back({0, rep, "A", "lat", 1.0, ""});
    }
    records.push_back({1, 0, "A", "tput", 4.0, ""});
    records.push_back({1, 2, "A", "tput", 6.0, ""});
    records.push_back({2, 1, "A", "tput", 9.0, ""});
    records.push_back({7, 0, "A", "tput", 9.0, ""});

    const auto tables = stats::aggregate_bundle(records, 3, metrics);
    CHECK(tables.size() == 4);
    const auto& t0 = tables.at({0, "A", "tput"});
    CHECK(t0.n == 3);
    CHECK(t0.mean == 11.0);
    CHECK(tables.at({0, "A", "lat"}).mean == 1.0);
    CHECK(tables.at({1, "A", "tput"}).n == 2);
    const auto& point = tables.at({2, "A", "tput"});
    CHECK(point.n == 1);
    CHECK_FALSE(point.has_ci);
    CHECK(point.ci95_low == 9.0);
    CHECK(point.ci95_high == 9.0);
}
