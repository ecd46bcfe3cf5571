#include "chainprof/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <sstream>

#include "chainprof/errors.hpp"

namespace chainprof {

std::string_view dimension_name(LimitDimension d) {
    switch (d) {
        case LimitDimension::cpu_cores: return "cpu_cores";
        case LimitDimension::cpu_time: return "cpu_time";
        case LimitDimension::mem_max: return "mem_max";
        case LimitDimension::mem_swap_max: return "mem_swap_max";
        case LimitDimension::block_io_bw: return "block_io_bw";
    }
    return "?";
}

std::optional<LimitDimension> parse_dimension(std::string_view name) {
    for (auto d : kAllDimensions) {
        if (dimension_name(d) == name) return d;
    }
    return std::nullopt;
}

std::optional<double> ResourceLimits::get(LimitDimension d) const {
    switch (d) {
        case LimitDimension::cpu_cores:
            return cpu_cores ? std::optional<double>(*cpu_cores) : std::nullopt;
        case LimitDimension::cpu_time: return cpu_time;
        case LimitDimension::mem_max: return mem_max;
        case LimitDimension::mem_swap_max: return mem_swap_max;
        case LimitDimension::block_io_bw: return block_io_bw;
    }
    return std::nullopt;
}

void ResourceLimits::set(LimitDimension d, double value) {
    switch (d) {
        case LimitDimension::cpu_cores: cpu_cores = static_cast<int>(std::lround(value)); break;
        case LimitDimension::cpu_time: cpu_time = value; break;
        case LimitDimension::mem_max: mem_max = value; break;
        case LimitDimension::mem_swap_max: mem_swap_max = value; break;
        case LimitDimension::block_io_bw: block_io_bw = value; break;
    }
}

bool ResourceLimits::unlimited() const {
    return !cpu_cores && !cpu_time && !mem_max && !mem_swap_max && !block_io_bw;
}

std::string ValidationResult::summary() const {
    std::string out;
    for (const auto& e : errors) {
        if (!out.empty()) out += "; ";
        out += e.field.empty() ? e.message : e.field + ": " + e.message;
    }
    return out;
}

ValidationResult validate_limits(const ResourceLimits& limits, const HostDescriptor& host,
                                 ExecutorKind executor) {
    ValidationResult r;
    if (limits.cpu_cores) {
        if (*limits.cpu_cores < 1) {
            r.error("cpu_cores", "cpu_cores must be >= 1");
        } else if (executor == ExecutorKind::real && *limits.cpu_cores > host.physical_cores) {
            r.error("cpu_cores", "cpu_cores must be <= " + std::to_string(host.physical_cores) +
                                     " (physical cores of the host)");
        }
    }
    if (limits.cpu_time) {
        double q = *limits.cpu_time;
        if (!std::isfinite(q) || q <= 0.0 || q > 1.0) r.error("cpu_time", "cpu_time must be in (0,1]");
    }
    if (limits.mem_max) {
        double m = *limits.mem_max;
        if (!std::isfinite(m) || m <= 0.0) r.error("mem_max", "mem_max must be > 0");
    }
    if (limits.mem_swap_max) {
        double s = *limits.mem_swap_max;
        if (!std::isfinite(s) || s < 0.0) r.error("mem_swap_max", "mem_swap_max must be >= 0");
    }
    if (limits.block_io_bw) {
        double b = *limits.block_io_bw;
        if (!std::isfinite(b) || b <= 0.0) r.error("block_io_bw", "block_io_bw must be > 0");
    }
    return r;
}

// ---------------------------------------------------------------------------

std::string_view probe_role_name(ProbeRole r) {
    switch (r) {
        case ProbeRole::source: return "source";
        case ProbeRole::sink: return "sink";
        case ProbeRole::measure: return "measure";
    }
    return "?";
}

std::optional<ProbeRole> parse_probe_role(std::string_view name) {
    for (auto r : {ProbeRole::source, ProbeRole::sink, ProbeRole::measure}) {
        if (probe_role_name(r) == name) return r;
    }
    return std::nullopt;
}

bool TopologyDescriptor::has_node(std::string_view id) const {
    return std::any_of(nodes.begin(), nodes.end(), [&](const NodeSpec& n) { return n.id == id; });
}

bool TopologyDescriptor::has_probe(std::string_view id) const { return find_probe(id) != nullptr; }

const ProbeSpec* TopologyDescriptor::find_probe(std::string_view id) const {
    for (const auto& p : probes) {
        if (p.id == id) return &p;
    }
    return nullptr;
}

std::vector<std::string> TopologyDescriptor::node_ids() const {
    std::vector<std::string> ids;
    ids.reserve(nodes.size());
    for (const auto& n : nodes) ids.push_back(n.id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

bool is_valid_identifier(std::string_view id) {
    if (id.empty()) return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' ||
               c == '-';
    });
}

ValidationResult validate_topology(const TopologyDescriptor& topo) {
    ValidationResult r;
    std::set<std::string> ids;

    if (topo.nodes.empty()) r.error("/nodes", "at least one VNF node is required");

    auto check_id = [&](const std::string& id, const std::string& where) {
        if (!is_valid_identifier(id)) r.error(where, "id '" + id + "' must match [A-Za-z0-9_-]+");
        if (!ids.insert(id).second) r.error(where, "duplicate id '" + id + "'");
    };
    for (std::size_t i = 0; i < topo.nodes.size(); ++i) {
        check_id(topo.nodes[i].id, "/nodes/" + std::to_string(i) + "/id");
    }
    std::size_t sources = 0, sinks = 0;
    for (std::size_t i = 0; i < topo.probes.size(); ++i) {
        const auto& p = topo.probes[i];
        check_id(p.id, "/probes/" + std::to_string(i) + "/id");
        if (p.role == ProbeRole::source) ++sources;
        if (p.role == ProbeRole::sink) ++sinks;
        if (p.isolated_cores) {
            if (p.isolated_cores->empty()) {
                r.error("/probes/" + std::to_string(i) + "/isolated_cores", "isolated_cores must be non-empty");
            }
            for (int c : *p.isolated_cores) {
                if (c < 0) r.error("/probes/" + std::to_string(i) + "/isolated_cores", "core ids must be >= 0");
            }
        }
    }
    if ((sources > 0 || sinks > 0) && (sources == 0 || sinks == 0)) {
        r.error("/probes", "blackbox topology needs at least one source and one sink probe");
    }
    if (topo.probes.empty()) r.warn("/probes", "no probes declared: whitebox profiling");

    std::set<std::pair<std::string, std::string>> seen_links;
    std::map<std::string, std::vector<std::string>> adjacency;
    for (const auto& id : ids) adjacency[id];
    for (std::size_t i = 0; i < topo.links.size(); ++i) {
        const auto& l = topo.links[i];
        const std::string where = "/links/" + std::to_string(i);
        bool endpoints_ok = true;
        for (const auto* end : {&l.from, &l.to}) {
            if (!ids.count(*end)) {
                r.error(where, "link endpoint '" + *end + "' is not declared");
                endpoints_ok = false;
            }
        }
        if (l.from == l.to) r.error(where, "self-loop on '" + l.from + "'");
        if (!seen_links.insert({l.from, l.to}).second) {
            r.error(where, "duplicate link " + l.from + " -> " + l.to);
        }
        if (!std::isfinite(l.delay_ms) || l.delay_ms < 0) r.error(where + "/delay_ms", "delay_ms must be >= 0");
        if (l.bw_mbps && (!std::isfinite(*l.bw_mbps) || *l.bw_mbps <= 0)) {
            r.error(where + "/bw_mbps", "bw_mbps must be > 0");
        }
        if (endpoints_ok) {
            adjacency[l.from].push_back(l.to);
            adjacency[l.to].push_back(l.from);
        }
    }

    // Connectivity over the undirected endpoint graph.
    if (ids.size() >= 2) {
        std::set<std::string> reached;
        std::queue<std::string> frontier;
        frontier.push(*ids.begin());
        reached.insert(*ids.begin());
        while (!frontier.empty()) {
            auto cur = frontier.front();
            frontier.pop();
            for (const auto& next : adjacency[cur]) {
                if (reached.insert(next).second) frontier.push(next);
            }
        }
        if (reached.size() != ids.size()) {
            std::string missing;
            for (const auto& id : ids) {
                if (!reached.count(id)) missing += (missing.empty() ? "" : ", ") + id;
            }
            r.error("/links", "topology is disconnected; unreachable: " + missing);
        }
    }
    return r;
}

// ---------------------------------------------------------------------------

bool record_less(const MeasurementRecord& a, const MeasurementRecord& b) {
    return std::tie(a.config_index, a.repetition, a.node, a.metric) <
           std::tie(b.config_index, b.repetition, b.node, b.metric);
}

std::string_view profile_scope_name(ProfileScope s) {
    switch (s) {
        case ProfileScope::vnfp: return "VNFP";
        case ProfileScope::nsp: return "NSP";
        case ProfileScope::tp: return "TP";
    }
    return "?";
}

std::optional<ProfileScope> parse_profile_scope(std::string_view name) {
    for (auto s : {ProfileScope::vnfp, ProfileScope::nsp, ProfileScope::tp}) {
        if (profile_scope_name(s) == name) return s;
    }
    return std::nullopt;
}

std::string PerformanceProfile::file_stem() const {
    switch (scope) {
        case ProfileScope::nsp: return "nsp";
        case ProfileScope::vnfp: return "vnfp-" + subject;
        case ProfileScope::tp: return "tp-" + subject;
    }
    return "unknown";
}

// ---------------------------------------------------------------------------

ResourceLimits ResourceConfiguration::limits_for(const std::string& node) const {
    auto it = assignments.find(node);
    return it == assignments.end() ? ResourceLimits{} : it->second;
}

namespace {

struct Axis {
    std::string node;
    LimitDimension dimension;
    const std::vector<double>* values;
};

void check_assignment_node(const TopologyDescriptor& topo, const std::string& node, const std::string& where) {
    if (topo.has_probe(node)) throw SpecError(where, "'" + node + "' is a probe; probes cannot be swept");
    if (!topo.has_node(node)) throw SpecError(where, "unknown node '" + node + "'");
}

void check_limits(const ResourceLimits& limits, const std::string& where) {
    auto v = validate_limits(limits, HostDescriptor{}, ExecutorKind::simulated);
    if (!v.ok()) throw SpecError(where, v.summary());
}

}  // namespace

std::size_t configuration_count(const ConfigurationSpace& space) {
    if (space.mode == SweepMode::explicit_list) return space.explicit_list.size();
    std::size_t count = 1;
    bool any = false;
    for (const auto& [node, dims] : space.dimensions) {
        for (const auto& [dim, values] : dims) {
            count *= values.size();
            any = true;
        }
    }
    return any ? count : 0;
}

std::vector<ResourceConfiguration> enumerate_configurations(const ConfigurationSpace& space,
                                                            const TopologyDescriptor& topo) {
    std::vector<ResourceConfiguration> out;

    if (space.mode == SweepMode::explicit_list) {
        if (space.explicit_list.empty()) throw SpecError("/sweep/configurations", "explicit sweep has no entries");
        for (std::size_t i = 0; i < space.explicit_list.size(); ++i) {
            const std::string where = "/sweep/configurations/" + std::to_string(i);
            for (const auto& [node, limits] : space.explicit_list[i]) {
                check_assignment_node(topo, node, where + "/" + node);
                check_limits(limits, where + "/" + node);
            }
            out.push_back({i, space.explicit_list[i]});
        }
        return out;
    }

    // Axes: nodes lexicographic (std::map order), dimensions canonical.
    std::vector<Axis> axes;
    for (const auto& [node, dims] : space.dimensions) {
        check_assignment_node(topo, node, "/sweep/dimensions/" + node);
        for (auto d : kAllDimensions) {
            auto it = dims.find(d);
            if (it == dims.end()) continue;
            const std::string where = "/sweep/dimensions/" + node + "/" + std::string(dimension_name(d));
            if (it->second.empty()) throw SpecError(where, "empty dimension list");
            for (double v : it->second) {
                if (d == LimitDimension::cpu_cores && std::floor(v) != v) {
                    throw SpecError(where, "cpu_cores values must be integers");
                }
                ResourceLimits probe;
                probe.set(d, v);
                check_limits(probe, where);
            }
            axes.push_back({node, d, &it->second});
        }
    }
    if (axes.empty()) throw SpecError("/sweep/dimensions", "cartesian sweep needs at least one non-empty dimension");

    std::vector<std::size_t> odometer(axes.size(), 0);
    for (std::size_t index = 0;; ++index) {
        ResourceConfiguration cfg;
        cfg.index = index;
        for (std::size_t a = 0; a < axes.size(); ++a) {
            cfg.assignments[axes[a].node].set(axes[a].dimension, (*axes[a].values)[odometer[a]]);
        }
        out.push_back(std::move(cfg));

        // Advance, last axis fastest.
        std::size_t a = axes.size();
        while (a > 0) {
            --a;
            if (++odometer[a] < axes[a].values->size()) break;
            odometer[a] = 0;
            if (a == 0) return out;
        }
    }
}

namespace {

std::string render_number(double v) {
    std::ostringstream os;
    os.precision(9);
    os << v;
    return os.str();
}

}  // namespace

std::string describe_configuration(const ResourceConfiguration& config) {
    std::string out;
    for (const auto& [node, limits] : config.assignments) {
        if (!out.empty()) out += ' ';
        out += node + '[';
        bool first = true;
        for (auto d : kAllDimensions) {
            if (auto v = limits.get(d)) {
                if (!first) out += ',';
                out += std::string(dimension_name(d)) + '=' + render_number(*v);
                first = false;
            }
        }
        if (first) out += "unlimited";
        out += ']';
    }
    return out;
}

}  // namespace chainprof
