#include "chainprof/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "chainprof/errors.hpp"

namespace chainprof::stats {

namespace {

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIterations = 500;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIterations; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    // The fraction converges fast for x < (a+1)/(a+b+2); use symmetry otherwise.
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    const double x = df / (df + t * t);
    const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
    return t > 0 ? 1.0 - tail : tail;
}

double student_t_quantile(double p, double df) {
    if (!(p > 0.0 && p < 1.0) || !(df > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    if (p == 0.5) return 0.0;
    if (p < 0.5) return -student_t_quantile(1.0 - p, df);

    // Upper tail: bracket, then bisection refined by Newton steps on the CDF.
    double lo = 0.0;
    double hi = 1.0;
    while (student_t_cdf(hi, df) < p) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e300) return std::numeric_limits<double>::infinity();
    }
    const double log_norm = std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) - 0.5 * std::log(df * M_PI);
    double t = 0.5 * (lo + hi);
    for (int iter = 0; iter < 200; ++iter) {
        const double f = student_t_cdf(t, df) - p;
        if (f > 0) hi = t; else lo = t;
        const double density = std::exp(log_norm - 0.5 * (df + 1.0) * std::log1p(t * t / df));
        double next = t - f / density;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::fabs(next - t) <= 1e-15 * std::max(1.0, std::fabs(t))) {
            t = next;
            break;
        }
        t = next;
    }
    return t;
}

AggregatedMetric aggregate(std::span<const double> samples) {
    const std::size_t n = samples.size();
    if (n < 2) throw InsufficientSamples(n);
    for (double v : samples) {
        if (!std::isfinite(v)) throw NonFinite(std::to_string(v));
    }

    const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double v : samples) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    const double half = sd == 0.0 ? 0.0
                                  : student_t_quantile(0.975, static_cast<double>(n - 1)) * sd /
                                        std::sqrt(static_cast<double>(n));

    AggregatedMetric out;
    out.mean = mean;
    out.std = sd;
    out.n = n;
    out.ci95_low = mean - half;
    out.ci95_high = mean + half;
    out.has_ci = true;
    return out;
}

AggregatedMetric point_estimate(double value) {
    if (!std::isfinite(value)) throw NonFinite(std::to_string(value));
    AggregatedMetric out;
    out.mean = value;
    out.std = 0.0;
    out.n = 1;
    out.ci95_low = value;
    out.ci95_high = value;
    out.has_ci = false;
    return out;
}

ProfileTables aggregate_bundle(std::span<const MeasurementRecord> records, std::size_t config_count,
                               std::span<const MetricSpec> metrics) {
    std::set<std::string> known;
    for (const auto& m : metrics) known.insert(m.name);

    std::map<GroupKey, std::vector<double>> groups;
    for (const auto& r : records) {
        if (r.config_index >= config_count || !known.count(r.metric)) continue;
        groups[{r.config_index, r.node, r.metric}].push_back(r.value);
    }

    ProfileTables out;
    for (const auto& [key, values] : groups) {
        out.emplace(key, values.size() >= 2 ? aggregate(values) : point_estimate(values.front()));
    }
    return out;
}

}  // namespace chainprof::stats
