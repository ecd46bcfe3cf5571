#include "chainprof/analysis.hpp"

#include <cmath>

#include "chainprof/errors.hpp"
#include "chainprof/predictor.hpp"

namespace chainprof {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::set<LimitDimension> swept_dimensions(const std::vector<ResourceConfiguration>& configs, const std::string& node) {
    std::set<LimitDimension> out;
    for (const auto& c : configs) {
        const auto limits = c.limits_for(node);
        for (auto d : kAllDimensions) {
            if (limits.get(d)) out.insert(d);
        }
    }
    return out;
}

struct FitTarget {
    const PerformanceProfile* profile;
    std::string metric;
    std::string node;
    LimitDimension dimension;
};

}  // namespace

AnalysisReport analyze_bundle(const ProfileBundle& bundle, const AnalysisOptions& options) {
    if (options.reference_config >= bundle.configurations.size()) {
        throw SpecError("", "reference configuration " + std::to_string(options.reference_config) + " does not exist");
    }
    for (const auto& [metric, target] : options.sla_targets) {
        if (std::none_of(bundle.metrics.begin(), bundle.metrics.end(),
                         [&](const MetricSpec& m) { return m.name == metric; })) {
            throw SpecError("", "SLA target for unknown metric '" + metric + "'");
        }
    }
    const auto& reference = bundle.configurations[options.reference_config];
    auto wanted = [&](LimitDimension d) { return options.dimensions.empty() || options.dimensions.count(d); };

    std::vector<FitTarget> targets;
    for (const auto& p : bundle.profiles) {
        for (const auto& [metric, info] : p.metrics) {
            if (p.scope == ProfileScope::vnfp) {
                for (auto d : swept_dimensions(bundle.configurations, p.subject)) {
                    if (wanted(d)) targets.push_back({&p, metric, p.subject, d});
                }
            } else if (p.scope == ProfileScope::nsp && bundle.topology.has_probe(info.source)) {
                for (const auto& node : bundle.topology.node_ids()) {
                    for (auto d : swept_dimensions(bundle.configurations, node)) {
                        if (wanted(d)) targets.push_back({&p, metric, node, d});
                    }
                }
            }
        }
    }

    AnalysisReport report;
    json fits = json::array();
    json skipped = json::array();
    for (const auto& t : targets) {
        const std::string dim(dimension_name(t.dimension));
        const std::string scope(profile_scope_name(t.profile->scope));
        json entry = {{"scope", scope}, {"subject", t.profile->subject}, {"metric", t.metric}, {"node", t.node},
                      {"dimension", dim}};

        std::vector<FitPoint> points;
        std::vector<const AggregatedMetric*> cells;
        for (const auto& mp : marginal_sweep(bundle.configurations, reference, t.node, t.dimension)) {
            auto row = t.profile->table.find(mp.config_index);
            if (row == t.profile->table.end()) continue;
            auto cell = row->second.find(t.metric);
            if (cell == row->second.end()) continue;
            const auto& agg = cell->second;
            const double se = agg.has_ci && agg.n > 0 ? agg.std / std::sqrt(static_cast<double>(agg.n)) : 0.0;
            points.push_back({mp.x, agg.mean, se});
            cells.push_back(&agg);
        }

        ScalingModel model;
        try {
            model = fit_scaling_model(points, dim, t.metric);
        } catch (const SpecError& e) {
            entry["reason"] = e.what();
            skipped.push_back(std::move(entry));
            continue;
        }

        entry["kind"] = std::string(model_kind_name(model.kind));
        json params = {{"a", model.a}};
        if (model.kind != ModelKind::constant) params["b"] = model.b;
        if (model.kind == ModelKind::plateau) params["knee"] = model.knee;
        entry["params"] = params;
        entry["sse"] = model.sse;
        entry["behavior_class"] = std::string(behavior_class_name(model.behavior));
        entry["relative_change"] = number_or_null(model.relative_change);
        entry["saturation_point"] = model.saturation_point() ? json(*model.saturation_point()) : json(nullptr);
        entry["points"] = points.size();

        if (auto sla = options.sla_targets.find(t.metric); sla != options.sla_targets.end()) {
            std::vector<double> grid;
            for (const auto& p : points) {
                if (grid.empty() || grid.back() != p.x) grid.push_back(p.x);
            }
            const bool higher = t.profile->metrics.at(t.metric).higher_is_better;
            json q = {{"target", sla->second}, {"higher_is_better", higher}};
            try {
                auto answer = min_resource_for_sla(model, grid, sla->second, higher);
                q["status"] = "ok";
                q["allocation"] = answer.allocation;
                q["interpolated"] = answer.interpolated ? json(*answer.interpolated) : json(nullptr);
            } catch (const Unreachable&) {
                q["status"] = "unreachable";
                q["allocation"] = nullptr;
                q["interpolated"] = nullptr;
            }
            entry["sla"] = q;
        }

        PlotSeries plot;
        plot.file_name = t.profile->file_stem() + "__" + t.metric + "__" + t.node + "__" + dim + ".csv";
        plot.csv = "x,mean,ci_low,ci_high,fitted\n";
        for (std::size_t i = 0; i < points.size(); ++i) {
            plot.csv += render_value(points[i].x) + ',' + render_value(cells[i]->mean) + ',' +
                        render_value(cells[i]->ci95_low) + ',' + render_value(cells[i]->ci95_high) + ',' +
                        render_value(model.evaluate(points[i].x)) + '\n';
        }
        entry["plot"] = "plots/" + plot.file_name;
        report.plots.push_back(std::move(plot));
        fits.push_back(std::move(entry));
    }

    json sensitivity = json::array();
    if (const auto* nsp = bundle.find_profile(ProfileScope::nsp)) {
        std::set<LimitDimension> dims;
        for (const auto& node : bundle.topology.node_ids()) {
            for (auto d : swept_dimensions(bundle.configurations, node)) {
                if (wanted(d)) dims.insert(d);
            }
        }
        for (const auto& [metric, info] : nsp->metrics) {
            for (auto d : dims) {
                json entry = {{"metric", metric}, {"dimension", std::string(dimension_name(d))}};
                try {
                    auto s = chain_sensitivity(bundle, metric, d, reference);
                    json e = json::object();
                    for (const auto& [node, value] : s.elasticity) e[node] = number_or_null(value);
                    entry["elasticity"] = e;
                    entry["bottleneck"] = s.bottleneck ? json(*s.bottleneck) : json(nullptr);
                    sensitivity.push_back(std::move(entry));
                } catch (const SpecError& e) {
                    entry["reason"] = e.what();
                    skipped.push_back(std::move(entry));
                }
            }
        }
    }

    report.document = {
        {"bundle", bundle.manifest.name},
        {"spec_digest", bundle.manifest.spec_digest},
        {"reference_config", options.reference_config},
        {"insensitive_relative_change", kInsensitiveRelativeChange},
        {"bottleneck_elasticity", kBottleneckElasticity},
        {"fits", fits},
        {"sensitivity", sensitivity},
        {"skipped", skipped},
        {"unresolved", "allocations are tested grid points on the profiling host; translation to a target "
                       "environment is not performed"},
    };
    return report;
}

void write_analysis(const AnalysisReport& report, const fs::path& bundle_dir) {
    const auto dir = bundle_dir / "analysis";
    std::error_code ec;
    fs::remove_all(dir, ec);
    fs::create_directories(dir / "plots", ec);
    if (ec) throw IoError("cannot create '" + (dir / "plots").string() + "': " + ec.message());
    write_text_file(dir / "report.json", report.document.dump(2) + "\n");
    for (const auto& p : report.plots) write_text_file(dir / "plots" / p.file_name, p.csv);
}

}  // namespace chainprof
