#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "chainprof/analysis.hpp"
#include "chainprof/config_io.hpp"
#include "chainprof/errors.hpp"
#include "chainprof/normalizer.hpp"
#include "chainprof/sweep_engine.hpp"

namespace chainprof::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Format { text, structured };

struct GlobalOptions {
    Format format = Format::text;
    std::optional<std::uint64_t> seed;
    bool dry_run = false;
};

class Command {
public:
    Command(const GlobalOptions& global, std::ostream& out, std::ostream& err)
        : global_(global), out_(out), err_(err) {}

    bool structured() const { return global_.format == Format::structured; }

    void emit(const json& doc) { out_ << doc.dump(2) << '\n'; }
    void warn(const std::string& message) { err_ << "warning: " << message << '\n'; }

    ExperimentSpec load_spec(const fs::path& path) {
        auto spec = load_experiment(path);
        if (global_.seed) spec.seed = *global_.seed;
        return spec;
    }

    int validate(const fs::path& path) {
        const auto spec = load_spec(path);
        const auto topo = validate_topology(spec.topology);
        const auto count = configuration_count(spec.sweep);
        if (structured()) {
            json warnings = json::array();
            for (const auto& w : topo.warnings) warnings.push_back({{"path", w.field}, {"message", w.message}});
            emit({{"valid", true},
                  {"name", spec.name},
                  {"configurations", count},
                  {"repetitions", spec.repetitions},
                  {"metrics", spec.metrics.size()},
                  {"warnings", warnings}});
        } else {
            out_ << "valid: " << spec.name << " (" << count << " configurations, " << spec.repetitions
                 << " repetitions, " << spec.metrics.size() << " metrics)\n";
            for (const auto& w : topo.warnings) warn(w.field + ": " + w.message);
        }
        return 0;
    }

    int enumerate(const fs::path& path) {
        const auto spec = load_spec(path);
        const auto configs = enumerate_configurations(spec.sweep, spec.topology);
        if (structured()) {
            json list = json::array();
            for (const auto& c : configs) list.push_back(to_json(c));
            emit(list);
        } else {
            for (const auto& c : configs) {
                const auto text = describe_configuration(c);
                out_ << c.index << '\t' << (text.empty() ? "(unlimited)" : text) << '\n';
            }
        }
        return 0;
    }

    int run(const fs::path& path, const fs::path& out_dir, const std::string& backend_override, unsigned workers) {
        auto spec = load_spec(path);
        if (!backend_override.empty()) {
            spec.backend.type = backend_override == "container" ? BackendType::container : BackendType::simulated;
            if (spec.backend.type == BackendType::simulated && spec.sim_models.empty()) {
                throw SpecError("/sim_models", "simulated backend requested but the spec has no sim_models");
            }
        }
        const auto configs = enumerate_configurations(spec.sweep, spec.topology);
        if (global_.dry_run) {
            const std::size_t runs = configs.size() * spec.repetitions;
            if (structured()) {
                emit({{"dry_run", true},
                      {"configurations", configs.size()},
                      {"repetitions", spec.repetitions},
                      {"runs", runs},
                      {"records", runs * spec.metrics.size()}});
            } else {
                out_ << "dry run: " << configs.size() << " configurations x " << spec.repetitions
                     << " repetitions = " << runs << " runs; nothing written\n";
            }
            return 0;
        }

        RunOptions options;
        options.host = detect_host();
        options.out_dir = out_dir;
        options.workers = workers;
        auto backend = make_backend(spec, options.host);
        const auto result = run_profiling(spec, *backend, options);
        for (const auto& w : result.warnings) warn(w);

        const auto& m = result.bundle.manifest;
        if (structured()) {
            emit({{"bundle", fs::absolute(out_dir).string()},
                  {"configurations", m.config_count},
                  {"repetitions", m.repetitions},
                  {"metrics", m.metric_count},
                  {"records", m.record_count},
                  {"flagged", m.flagged.size()},
                  {"profiles", result.bundle.profiles.size()},
                  {"manifest_sha256", result.manifest_digest},
                  {"hook_exit_code", result.hook_exit_code ? json(*result.hook_exit_code) : json(nullptr)}});
        } else {
            out_ << "bundle: " << fs::absolute(out_dir).string() << '\n'
                 << "configurations: " << m.config_count << '\n'
                 << "repetitions: " << m.repetitions << '\n'
                 << "records: " << m.record_count << '\n'
                 << "flagged runs: " << m.flagged.size() << '\n'
                 << "profiles: " << result.bundle.profiles.size() << '\n';
        }
        return 0;
    }

    int normalize(const fs::path& bundle_dir, const std::optional<fs::path>& baseline_file) {
        auto bundle = load_bundle(bundle_dir);
        BaselineVector baseline;
        if (baseline_file) {
            baseline = load_baseline(*baseline_file);
        } else {
            auto spec = parse_experiment(bundle.spec_document.dump());
            if (global_.seed) spec.seed = *global_.seed;
            auto backend = make_backend(spec, bundle.manifest.host);
            baseline = measure_baseline(spec, *backend, bundle.manifest.host);
        }

        bundle.normalized.clear();
        for (const auto& p : bundle.profiles) bundle.normalized.push_back(normalize_profile(p, baseline));
        bundle.baseline = baseline;

        json scores = json::object();
        for (const auto& p : bundle.normalized) {
            json rows = json::object();
            for (const auto& [index, row] : p.table) rows[std::to_string(index)] = row_score(p, index);
            scores[p.file_stem()] = rows;
        }

        if (!global_.dry_run) {
            write_bundle(bundle, bundle_dir);
            write_text_file(bundle_dir / "normalized" / "scores.json", scores.dump(2) + "\n");
        }

        if (structured()) {
            emit({{"bundle", fs::absolute(bundle_dir).string()},
                  {"baseline", to_json(baseline)},
                  {"normalized_profiles", bundle.normalized.size()},
                  {"scores", scores},
                  {"written", !global_.dry_run}});
        } else {
            out_ << "baseline (" << (baseline.provenance == BaselineVector::Provenance::measured ? "measured" : "supplied")
                 << "):\n";
            for (const auto& [metric, value] : baseline.baselines) out_ << "  " << metric << " = " << value << '\n';
            out_ << "normalized profiles: " << bundle.normalized.size() << '\n';
            if (global_.dry_run) out_ << "dry run: nothing written\n";
        }
        return 0;
    }

    int analyze(const fs::path& bundle_dir, const std::vector<std::string>& sla, const std::vector<std::string>& dims,
                std::size_t reference) {
        const auto bundle = load_bundle(bundle_dir);
        AnalysisOptions options;
        options.reference_config = reference;
        for (const auto& item : sla) {
            const auto eq = item.find('=');
            if (eq == std::string::npos || eq == 0) throw SpecError("--sla", "expected metric=value, got '" + item + "'");
            const std::string value = item.substr(eq + 1);
            double target = 0.0;
            const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), target);
            if (ec != std::errc() || ptr != value.data() + value.size()) {
                throw SpecError("--sla", "'" + value + "' is not a number");
            }
            options.sla_targets[item.substr(0, eq)] = target;
        }
        for (const auto& d : dims) {
            auto dim = parse_dimension(d);
            if (!dim) throw SpecError("--dimension", "unknown dimension '" + d + "'");
            options.dimensions.insert(*dim);
        }

        const auto report = analyze_bundle(bundle, options);
        if (!global_.dry_run) write_analysis(report, bundle_dir);

        if (structured()) {
            emit(report.document);
            return 0;
        }
        for (const auto& fit : report.document["fits"]) {
            out_ << fit["scope"].get<std::string>() << ' ' << fit["subject"].get<std::string>() << ' '
                 << fit["metric"].get<std::string>() << " vs " << fit["node"].get<std::string>() << '.'
                 << fit["dimension"].get<std::string>() << ": " << fit["kind"].get<std::string>() << ", "
                 << fit["behavior_class"].get<std::string>();
            if (!fit["saturation_point"].is_null()) out_ << ", knee " << fit["saturation_point"].get<double>();
            if (fit.contains("sla")) {
                const auto& q = fit["sla"];
                out_ << "; SLA " << q["target"].get<double>() << ": ";
                if (q["status"] == "ok") {
                    out_ << "allocation " << q["allocation"].get<double>();
                } else {
                    out_ << "unreachable";
                }
            }
            out_ << '\n';
        }
        for (const auto& s : report.document["sensitivity"]) {
            out_ << "bottleneck for " << s["metric"].get<std::string>() << " (" << s["dimension"].get<std::string>()
                 << "): " << (s["bottleneck"].is_null() ? std::string("none") : s["bottleneck"].get<std::string>())
                 << '\n';
        }
        for (const auto& s : report.document["skipped"]) {
            warn("skipped " + s.value("metric", std::string()) + " " + s.value("dimension", std::string()) + ": " +
                 s.value("reason", std::string()));
        }
        if (!global_.dry_run) out_ << "report: " << (fs::absolute(bundle_dir) / "analysis" / "report.json").string() << '\n';
        return 0;
    }

    int fail(std::string_view category, int code, const std::string& message, const std::string& path = {}) {
        if (structured()) {
            json e = {{"category", category}, {"exit_code", code}, {"message", message}};
            if (!path.empty()) e["path"] = path;
            err_ << json({{"error", e}}).dump() << '\n';
        } else {
            err_ << "error: " << message << '\n';
        }
        return code;
    }

private:
    const GlobalOptions& global_;
    std::ostream& out_;
    std::ostream& err_;
};

std::string_view category_name(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::spec: return "spec";
        case ErrorCategory::io: return "io";
        case ErrorCategory::backend: return "backend";
    }
    return "?";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    GlobalOptions global;
    CLI::App app{"chainprof: resource-sweep profiling of service-function chains", "chainprof"};
    app.require_subcommand(1);
    app.fallthrough();

    const std::map<std::string, Format> formats{{"text", Format::text}, {"structured", Format::structured}};
    app.add_option("--format", global.format, "Output format")
        ->transform(CLI::CheckedTransformer(formats, CLI::ignore_case));
    app.add_option("--seed", global.seed, "Override the experiment seed");
    app.add_flag("--dry-run", global.dry_run, "Validate and compute without writing anything");

    fs::path spec_path, out_dir, bundle_dir;
    std::string backend_override;
    unsigned workers = 1;
    std::optional<fs::path> baseline_file;
    bool measure = false;
    std::vector<std::string> sla, dims;
    std::size_t reference = 0;

    auto* validate = app.add_subcommand("validate", "Parse and validate an experiment spec");
    validate->add_option("spec", spec_path, "Experiment spec (JSON)")->required();

    auto* enumerate = app.add_subcommand("enumerate", "List the configurations of a spec in canonical order");
    enumerate->add_option("spec", spec_path, "Experiment spec (JSON)")->required();

    auto* run = app.add_subcommand("run", "Execute a profiling campaign and write a bundle");
    run->add_option("spec", spec_path, "Experiment spec (JSON)")->required();
    run->add_option("--out", out_dir, "Bundle output directory")->required();
    run->add_option("--backend", backend_override, "Backend override")->check(CLI::IsMember({"simulated", "container"}));
    run->add_option("--workers", workers, "Concurrent runs (simulated backend only)")->check(CLI::Range(1u, 256u));

    auto* normalize = app.add_subcommand("normalize", "Add host-normalized profiles to a bundle");
    normalize->add_option("bundle", bundle_dir, "Bundle directory")->required();
    auto* baseline_opt = normalize->add_option("--baseline", baseline_file, "Baseline vector (JSON)");
    auto* measure_opt = normalize->add_flag("--measure-baseline", measure, "Measure the baseline with the bundle's spec");
    baseline_opt->excludes(measure_opt);

    auto* analyze = app.add_subcommand("analyze", "Fit scaling models, answer SLA queries, locate bottlenecks");
    analyze->add_option("bundle", bundle_dir, "Bundle directory")->required();
    analyze->add_option("--sla", sla, "SLA target metric=value (repeatable)");
    analyze->add_option("--dimension", dims, "Restrict to a resource dimension (repeatable)");
    analyze->add_option("--reference", reference, "Reference configuration index for marginal sweeps");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return static_cast<int>(ErrorCategory::spec);
    }

    Command cmd(global, out, err);
    try {
        if (*validate) return cmd.validate(spec_path);
        if (*enumerate) return cmd.enumerate(spec_path);
        if (*run) return cmd.run(spec_path, out_dir, backend_override, workers);
        if (*normalize) {
            if (!baseline_file && !measure) throw SpecError("", "normalize needs --baseline FILE or --measure-baseline");
            return cmd.normalize(bundle_dir, baseline_file);
        }
        if (*analyze) return cmd.analyze(bundle_dir, sla, dims, reference);
    } catch (const SpecError& e) {
        return cmd.fail("spec", e.exit_code(), e.what(), e.path());
    } catch (const Error& e) {
        return cmd.fail(category_name(e.category()), e.exit_code(), e.what());
    } catch (const fs::filesystem_error& e) {
        return cmd.fail("io", static_cast<int>(ErrorCategory::io), e.what());
    } catch (const std::exception& e) {
        return cmd.fail("spec", static_cast<int>(ErrorCategory::spec), e.what());
    }
    return static_cast<int>(ErrorCategory::spec);
}

}  // namespace chainprof::cli
