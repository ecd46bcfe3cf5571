#include "chainprof/config_io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <openssl/evp.h>

#include "chainprof/errors.hpp"
#include "json_reader.hpp"

namespace chainprof {

using nlohmann::json;
using detail::ObjectReader;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Files and hashing

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("error while reading '" + path.string() + "'");
    return ss.str();
}

void write_text_file(const fs::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("error while writing '" + path.string() + "'");
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
        throw IoError("SHA-256 computation failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * length);
    for (unsigned int i = 0; i < length; ++i) {
        out += kHex[digest[i] >> 4];
        out += kHex[digest[i] & 0xf];
    }
    return out;
}

std::string canonical_digest(const json& doc) { return sha256_hex(doc.dump()); }

// ---------------------------------------------------------------------------
// Shared JSON forms

json to_json(const HostDescriptor& host) {
    return {{"cpu_model", host.cpu_model}, {"physical_cores", host.physical_cores}, {"total_mem_mb", host.total_mem_mb}};
}

HostDescriptor host_from_json(const json& doc, const std::string& path) {
    ObjectReader r(doc, path);
    HostDescriptor h;
    h.cpu_model = r.string("cpu_model");
    h.physical_cores = static_cast<int>(r.integer("physical_cores"));
    h.total_mem_mb = r.integer("total_mem_mb");
    r.finish();
    if (h.physical_cores < 1) throw SpecError(r.child("physical_cores"), "physical_cores must be >= 1");
    if (h.total_mem_mb < 1) throw SpecError(r.child("total_mem_mb"), "total_mem_mb must be positive");
    return h;
}

json to_json(const ResourceLimits& limits) {
    json out = json::object();
    for (auto d : kAllDimensions) {
        if (auto v = limits.get(d)) {
            if (d == LimitDimension::cpu_cores) {
                out[std::string(dimension_name(d))] = *limits.cpu_cores;
            } else {
                out[std::string(dimension_name(d))] = *v;
            }
        }
    }
    return out;
}

ResourceLimits limits_from_json(const json& doc, const std::string& path) {
    if (!doc.is_object()) throw SpecError(path, "expected an object of limits");
    ResourceLimits limits;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        const std::string where = path + "/" + it.key();
        auto dim = parse_dimension(it.key());
        if (!dim) throw SpecError(where, "unknown dimension '" + it.key() + "'");
        if (*dim == LimitDimension::cpu_cores) {
            limits.cpu_cores = static_cast<int>(ObjectReader::as_integer(it.value(), where));
        } else {
            limits.set(*dim, ObjectReader::as_number(it.value(), where));
        }
    }
    auto v = validate_limits(limits, HostDescriptor{}, ExecutorKind::simulated);
    if (!v.ok()) throw SpecError(path + "/" + v.errors.front().field, v.errors.front().message);
    return limits;
}

json to_json(const ResourceConfiguration& config) {
    json assignments = json::object();
    for (const auto& [node, limits] : config.assignments) assignments[node] = to_json(limits);
    return {{"index", config.index}, {"assignments", assignments}};
}

namespace {

ResourceConfiguration configuration_from_json(const json& doc, const std::string& path) {
    ObjectReader r(doc, path);
    ResourceConfiguration c;
    c.index = static_cast<std::size_t>(r.integer("index"));
    const json& a = r.raw("assignments");
    if (!a.is_object()) throw SpecError(r.child("assignments"), "expected an object");
    for (auto it = a.begin(); it != a.end(); ++it) {
        c.assignments[it.key()] = limits_from_json(it.value(), r.child("assignments") + "/" + it.key());
    }
    r.finish();
    return c;
}

}  // namespace

json to_json(const TopologyDescriptor& topo) {
    json nodes = json::array();
    for (const auto& n : topo.nodes) nodes.push_back({{"id", n.id}, {"image", n.image}, {"kind", "vnf"}});
    json probes = json::array();
    for (const auto& p : topo.probes) {
        json pj = {{"id", p.id}, {"role", std::string(probe_role_name(p.role))}, {"image", p.image}};
        if (p.isolated_cores) pj["isolated_cores"] = *p.isolated_cores;
        probes.push_back(std::move(pj));
    }
    json links = json::array();
    for (const auto& l : topo.links) {
        json lj = {{"from", l.from}, {"to", l.to}, {"delay_ms", l.delay_ms}};
        if (l.bw_mbps) lj["bw_mbps"] = *l.bw_mbps;
        links.push_back(std::move(lj));
    }
    json out = {{"nodes", nodes}, {"probes", probes}, {"links", links}};
    if (!topo.variant.empty()) out["variant"] = topo.variant;
    return out;
}

TopologyDescriptor topology_from_json(const json& doc, const std::string& path) {
    ObjectReader r(doc, path);
    TopologyDescriptor t;
    if (auto v = r.string_opt("variant")) {
        if (!is_valid_identifier(*v)) throw SpecError(r.child("variant"), "variant must match [A-Za-z0-9_-]+");
        t.variant = *v;
    }

    const json& nodes = detail::expect_array(r.raw("nodes"), r.child("nodes"));
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        ObjectReader n(nodes[i], r.child("nodes") + "/" + std::to_string(i));
        NodeSpec spec;
        spec.id = n.string("id");
        spec.image = n.string("image");
        if (auto kind = n.string_opt("kind"); kind && *kind != "vnf") {
            throw SpecError(n.child("kind"), "node kind must be 'vnf'");
        }
        n.finish();
        t.nodes.push_back(std::move(spec));
    }

    if (auto probes = r.raw_opt("probes")) {
        detail::expect_array(*probes, r.child("probes"));
        for (std::size_t i = 0; i < probes->get().size(); ++i) {
            ObjectReader p(probes->get()[i], r.child("probes") + "/" + std::to_string(i));
            ProbeSpec spec;
            spec.id = p.string("id");
            auto role = parse_probe_role(p.string("role"));
            if (!role) throw SpecError(p.child("role"), "role must be one of source, sink, measure");
            spec.role = *role;
            spec.image = p.string("image");
            if (auto cores = p.raw_opt("isolated_cores")) {
                detail::expect_array(*cores, p.child("isolated_cores"));
                std::vector<int> list;
                for (std::size_t k = 0; k < cores->get().size(); ++k) {
                    list.push_back(static_cast<int>(
                        ObjectReader::as_integer(cores->get()[k], p.child("isolated_cores") + "/" + std::to_string(k))));
                }
                spec.isolated_cores = std::move(list);
            }
            p.finish();
            t.probes.push_back(std::move(spec));
        }
    }

    if (auto links = r.raw_opt("links")) {
        detail::expect_array(*links, r.child("links"));
        for (std::size_t i = 0; i < links->get().size(); ++i) {
            ObjectReader l(links->get()[i], r.child("links") + "/" + std::to_string(i));
            LinkSpec spec;
            spec.from = l.string("from");
            spec.to = l.string("to");
            spec.delay_ms = l.number_opt("delay_ms").value_or(0.0);
            spec.bw_mbps = l.number_opt("bw_mbps");
            l.finish();
            t.links.push_back(std::move(spec));
        }
    }
    r.finish();

    auto v = validate_topology(t);
    if (!v.ok()) throw SpecError(path + v.errors.front().field, v.summary());
    return t;
}

// ---------------------------------------------------------------------------
// Experiment spec

const MetricSpec* ExperimentSpec::find_metric(std::string_view metric) const {
    for (const auto& m : metrics) {
        if (m.name == metric) return &m;
    }
    return nullptr;
}

namespace {

bool is_metric_name(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
    });
}

ConfigurationSpace sweep_from_json(const json& doc, const std::string& path) {
    ObjectReader r(doc, path);
    ConfigurationSpace space;
    const std::string mode = r.string("mode");
    if (mode == "cartesian") {
        space.mode = SweepMode::cartesian;
        const json& dims = r.raw("dimensions");
        if (!dims.is_object()) throw SpecError(r.child("dimensions"), "expected an object");
        for (auto node = dims.begin(); node != dims.end(); ++node) {
            const std::string node_path = r.child("dimensions") + "/" + node.key();
            if (!node.value().is_object()) throw SpecError(node_path, "expected an object of dimensions");
            auto& per_node = space.dimensions[node.key()];
            for (auto dim = node.value().begin(); dim != node.value().end(); ++dim) {
                const std::string dim_path = node_path + "/" + dim.key();
                auto d = parse_dimension(dim.key());
                if (!d) throw SpecError(dim_path, "unknown dimension '" + dim.key() + "'");
                detail::expect_array(dim.value(), dim_path);
                std::vector<double> values;
                for (std::size_t i = 0; i < dim.value().size(); ++i) {
                    const std::string vp = dim_path + "/" + std::to_string(i);
                    values.push_back(*d == LimitDimension::cpu_cores
                                         ? static_cast<double>(ObjectReader::as_integer(dim.value()[i], vp))
                                         : ObjectReader::as_number(dim.value()[i], vp));
                }
                per_node[*d] = std::move(values);
            }
        }
    } else if (mode == "explicit") {
        space.mode = SweepMode::explicit_list;
        const json& list = detail::expect_array(r.raw("configurations"), r.child("configurations"));
        for (std::size_t i = 0; i < list.size(); ++i) {
            const std::string entry_path = r.child("configurations") + "/" + std::to_string(i);
            if (!list[i].is_object()) throw SpecError(entry_path, "expected an object of node limits");
            std::map<std::string, ResourceLimits> entry;
            for (auto it = list[i].begin(); it != list[i].end(); ++it) {
                entry[it.key()] = limits_from_json(it.value(), entry_path + "/" + it.key());
            }
            space.explicit_list.push_back(std::move(entry));
        }
    } else {
        throw SpecError(r.child("mode"), "mode must be 'cartesian' or 'explicit'");
    }
    r.finish();
    return space;
}

json sweep_to_json(const ConfigurationSpace& space) {
    if (space.mode == SweepMode::explicit_list) {
        json list = json::array();
        for (const auto& entry : space.explicit_list) {
            json e = json::object();
            for (const auto& [node, limits] : entry) e[node] = to_json(limits);
            list.push_back(std::move(e));
        }
        return {{"mode", "explicit"}, {"configurations", list}};
    }
    json dims = json::object();
    for (const auto& [node, per_node] : space.dimensions) {
        json n = json::object();
        for (const auto& [d, values] : per_node) {
            json arr = json::array();
            for (double v : values) {
                if (d == LimitDimension::cpu_cores) arr.push_back(static_cast<std::int64_t>(v));
                else arr.push_back(v);
            }
            n[std::string(dimension_name(d))] = arr;
        }
        dims[node] = n;
    }
    return {{"mode", "cartesian"}, {"dimensions", dims}};
}

BackendConfig backend_from_json(const json& doc, const std::string& path) {
    ObjectReader r(doc, path);
    BackendConfig b;
    const std::string type = r.string("type");
    if (type == "simulated") b.type = BackendType::simulated;
    else if (type == "container") b.type = BackendType::container;
    else throw SpecError(r.child("type"), "backend type must be 'simulated' or 'container'");
    b.endpoint = r.string_opt("endpoint");
    b.volume_root = r.string_opt("volume_root");
    if (auto dev = r.string_opt("block_device")) b.block_device = *dev;
    if (auto t = r.number_opt("run_timeout_s")) {
        if (*t <= 0) throw SpecError(r.child("run_timeout_s"), "run_timeout_s must be > 0");
        b.run_timeout_s = *t;
    }
    r.finish();
    if (b.type == BackendType::container && !b.endpoint) {
        throw SpecError(r.child("endpoint"), "endpoint is required for the container backend");
    }
    if (b.type == BackendType::simulated && b.endpoint) {
        throw SpecError(r.child("endpoint"), "endpoint is only valid for the container backend");
    }
    return b;
}

json backend_to_json(const BackendConfig& b) {
    json out = {{"type", std::string(backend_type_name(b.type))},
                {"block_device", b.block_device},
                {"run_timeout_s", b.run_timeout_s}};
    if (b.endpoint) out["endpoint"] = *b.endpoint;
    if (b.volume_root) out["volume_root"] = *b.volume_root;
    return out;
}

SimVNFModel sim_model_from_json(const json& doc, const std::string& path) {
    ObjectReader r(doc, path);
    SimVNFModel m;
    m.base_rate = r.number("base_rate");
    m.parallel_fraction = r.number_opt("parallel_fraction").value_or(1.0);
    m.max_threads = static_cast<int>(r.integer_opt("max_threads").value_or(1));
    m.cpu_bound = r.boolean_opt("cpu_bound").value_or(true);
    m.mem_floor_mb = r.number_opt("mem_floor_mb").value_or(0.0);
    m.noise_std = r.number_opt("noise_std").value_or(0.0);
    r.finish();
    auto v = validate_sim_model(m);
    if (!v.ok()) throw SpecError(path + "/" + v.errors.front().field, v.errors.front().message);
    return m;
}

json sim_model_to_json(const SimVNFModel& m) {
    return {{"base_rate", m.base_rate},     {"parallel_fraction", m.parallel_fraction},
            {"max_threads", m.max_threads}, {"cpu_bound", m.cpu_bound},
            {"mem_floor_mb", m.mem_floor_mb}, {"noise_std", m.noise_std}};
}

std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte) {
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            column = 1;
        } else {
            ++column;
        }
    }
    return {line, column};
}

ExperimentSpec spec_from_json(const json& doc) {
    ObjectReader r(doc, "");
    ExperimentSpec s;
    s.name = r.string("name");
    if (s.name.empty()) throw SpecError("/name", "name must be non-empty");
    if (auto reps = r.integer_opt("repetitions")) {
        if (*reps < 1) throw SpecError("/repetitions", "repetitions must be >= 1");
        s.repetitions = static_cast<std::size_t>(*reps);
    }
    s.seed = r.unsigned_opt("seed").value_or(0);
    s.topology = topology_from_json(r.raw("topology"), "/topology");
    s.sweep = sweep_from_json(r.raw("sweep"), "/sweep");

    const json& metrics = detail::expect_array(r.raw("metrics"), "/metrics");
    if (metrics.empty()) throw SpecError("/metrics", "at least one metric is required");
    std::set<std::string> names;
    for (std::size_t i = 0; i < metrics.size(); ++i) {
        ObjectReader m(metrics[i], "/metrics/" + std::to_string(i));
        MetricSpec spec;
        spec.name = m.string("name");
        spec.source = m.string("source");
        spec.file = m.string("file");
        spec.key = m.string("key");
        spec.unit = m.string_opt("unit").value_or("");
        spec.higher_is_better = m.boolean_opt("higher_is_better").value_or(true);
        m.finish();
        if (!is_metric_name(spec.name)) throw SpecError(m.child("name"), "metric name must match [A-Za-z0-9_.-]+");
        if (!names.insert(spec.name).second) throw SpecError(m.child("name"), "duplicate metric '" + spec.name + "'");
        if (!s.topology.has_endpoint(spec.source)) {
            throw SpecError(m.child("source"), "unknown source '" + spec.source + "'");
        }
        if (spec.file.empty() || spec.file.front() == '/' || spec.file.find("..") != std::string::npos) {
            throw SpecError(m.child("file"), "file must be a relative path inside the result volume");
        }
        if (spec.key.empty()) throw SpecError(m.child("key"), "key must be non-empty");
        if (spec.unit.find_first_of("\r\n") != std::string::npos) throw SpecError(m.child("unit"), "unit must be one line");
        s.metrics.push_back(std::move(spec));
    }

    if (auto b = r.raw_opt("backend")) s.backend = backend_from_json(*b, "/backend");

    if (auto models = r.raw_opt("sim_models")) {
        if (!models->get().is_object()) throw SpecError("/sim_models", "expected an object");
        for (auto it = models->get().begin(); it != models->get().end(); ++it) {
            if (!s.topology.has_node(it.key())) throw SpecError("/sim_models/" + it.key(), "unknown node '" + it.key() + "'");
            s.sim_models[it.key()] = sim_model_from_json(it.value(), "/sim_models/" + it.key());
        }
    }
    if (s.backend.type == BackendType::simulated) {
        for (const auto& n : s.topology.nodes) {
            if (!s.sim_models.count(n.id)) throw SpecError("/sim_models/" + n.id, "simulated backend needs a model for every node");
        }
    } else if (!s.sim_models.empty()) {
        throw SpecError("/sim_models", "sim_models are only valid with the simulated backend");
    }

    s.post_process = r.string_opt("post_process");
    if (auto w = r.number_opt("warmup_s")) {
        if (*w < 0) throw SpecError("/warmup_s", "warmup_s must be >= 0");
        s.warmup_s = *w;
    }
    if (auto d = r.number_opt("duration_s")) {
        if (*d <= 0) throw SpecError("/duration_s", "duration_s must be > 0");
        s.duration_s = d;
    }
    r.finish();

    // Referential checks and limit domains happen during enumeration.
    enumerate_configurations(s.sweep, s.topology);
    return s;
}

}  // namespace

ExperimentSpec parse_experiment(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        auto [line, column] = line_column(text, e.byte == 0 ? 0 : e.byte - 1);
        std::string what = e.what();
        if (auto pos = what.find("parse error"); pos != std::string::npos) what = what.substr(pos);
        throw SyntaxError(line, column, what);
    }
    return spec_from_json(doc);
}

ExperimentSpec load_experiment(const fs::path& path) { return parse_experiment(read_text_file(path)); }

json experiment_to_json(const ExperimentSpec& s) {
    json metrics = json::array();
    for (const auto& m : s.metrics) {
        metrics.push_back({{"name", m.name}, {"source", m.source}, {"file", m.file}, {"key", m.key},
                           {"unit", m.unit}, {"higher_is_better", m.higher_is_better}});
    }
    json out = {{"name", s.name},
                {"repetitions", s.repetitions},
                {"seed", s.seed},
                {"topology", to_json(s.topology)},
                {"sweep", sweep_to_json(s.sweep)},
                {"metrics", metrics},
                {"backend", backend_to_json(s.backend)},
                {"warmup_s", s.warmup_s}};
    if (!s.sim_models.empty()) {
        json models = json::object();
        for (const auto& [node, m] : s.sim_models) models[node] = sim_model_to_json(m);
        out["sim_models"] = models;
    }
    if (s.post_process) out["post_process"] = *s.post_process;
    if (s.duration_s) out["duration_s"] = *s.duration_s;
    return out;
}

// ---------------------------------------------------------------------------
// Records

double quantize_value(double value) {
    if (!std::isfinite(value)) return value;
    return std::strtod(render_value(value).c_str(), nullptr);
}

std::string render_value(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", value == 0.0 ? 0.0 : value);
    return buf;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"' && cur.empty() && !was_quoted) {
            quoted = was_quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
            was_quoted = false;
        } else {
            cur += c;
        }
    }
    if (quoted) throw IoError("records line " + std::to_string(line_no) + ": unterminated quote");
    fields.push_back(std::move(cur));
    return fields;
}

std::size_t parse_index(const std::string& s, std::size_t line_no, const char* what) {
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        throw IoError("records line " + std::to_string(line_no) + ": malformed " + what + " '" + s + "'");
    }
    return static_cast<std::size_t>(std::stoull(s));
}

constexpr std::string_view kRecordsHeader = "config_index,repetition,node,metric,value,unit";

}  // namespace

std::string render_records(std::vector<MeasurementRecord> records) {
    std::sort(records.begin(), records.end(), record_less);
    std::string out(kRecordsHeader);
    out += '\n';
    for (const auto& r : records) {
        if (!std::isfinite(r.value)) throw IntegrityError("non-finite record value for " + r.node + "/" + r.metric);
        out += std::to_string(r.config_index) + ',' + std::to_string(r.repetition) + ',' + csv_field(r.node) + ',' +
               csv_field(r.metric) + ',' + render_value(r.value) + ',' + csv_field(r.unit) + '\n';
    }
    return out;
}

std::vector<MeasurementRecord> parse_records(std::string_view text) {
    std::vector<MeasurementRecord> out;
    std::set<std::tuple<std::size_t, std::size_t, std::string, std::string>> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool header_seen = false;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!header_seen) {
            if (line != kRecordsHeader) throw IoError("records file: unexpected header");
            header_seen = true;
            continue;
        }
        if (line.empty()) continue;
        auto f = split_csv_line(line, line_no);
        if (f.size() != 6) throw IoError("records line " + std::to_string(line_no) + ": expected 6 fields");
        MeasurementRecord r;
        r.config_index = parse_index(f[0], line_no, "config_index");
        r.repetition = parse_index(f[1], line_no, "repetition");
        r.node = f[2];
        r.metric = f[3];
        char* endp = nullptr;
        r.value = std::strtod(f[4].c_str(), &endp);
        if (f[4].empty() || endp != f[4].c_str() + f[4].size()) {
            throw IoError("records line " + std::to_string(line_no) + ": malformed value '" + f[4] + "'");
        }
        if (!std::isfinite(r.value)) {
            throw IoError("records line " + std::to_string(line_no) + ": non-finite value '" + f[4] + "'");
        }
        r.unit = f[5];
        if (!seen.insert({r.config_index, r.repetition, r.node, r.metric}).second) {
            throw IoError("records line " + std::to_string(line_no) + ": duplicate record");
        }
        out.push_back(std::move(r));
    }
    if (!header_seen) throw IoError("records file is empty");
    return out;
}

// ---------------------------------------------------------------------------
// Profiles and baselines

namespace {

json to_json(const AggregatedMetric& m) {
    return {{"mean", m.mean},         {"std", m.std},         {"n", m.n},
            {"ci95_low", m.ci95_low}, {"ci95_high", m.ci95_high}, {"has_ci", m.has_ci}};
}

AggregatedMetric aggregated_from_json(const json& doc, const std::string& path) {
    ObjectReader r(doc, path);
    AggregatedMetric m;
    m.mean = r.number("mean");
    m.std = r.number("std");
    m.n = static_cast<std::size_t>(r.integer("n"));
    m.ci95_low = r.number("ci95_low");
    m.ci95_high = r.number("ci95_high");
    m.has_ci = r.boolean("has_ci");
    r.finish();
    return m;
}

}  // namespace

json to_json(const PerformanceProfile& p) {
    json metrics = json::object();
    for (const auto& [name, info] : p.metrics) {
        metrics[name] = {{"unit", info.unit}, {"higher_is_better", info.higher_is_better}, {"source", info.source}};
    }
    json table = json::array();
    for (const auto& [index, row] : p.table) {
        json cells = json::object();
        for (const auto& [name, agg] : row) cells[name] = to_json(agg);
        table.push_back({{"config_index", index}, {"metrics", cells}});
    }
    return {{"scope", std::string(profile_scope_name(p.scope))},
            {"subject", p.subject},
            {"normalized", p.normalized},
            {"host", to_json(p.host)},
            {"metrics", metrics},
            {"table", table}};
}

PerformanceProfile profile_from_json(const json& doc) {
    auto problems = check_profile_schema(doc);
    if (!problems.empty()) throw IoError("profile document: " + problems.front());
    PerformanceProfile p;
    p.scope = *parse_profile_scope(doc.at("scope").get<std::string>());
    p.subject = doc.at("subject").get<std::string>();
    p.normalized = doc.at("normalized").get<bool>();
    p.host = host_from_json(doc.at("host"));
    for (auto it = doc.at("metrics").begin(); it != doc.at("metrics").end(); ++it) {
        p.metrics[it.key()] = {it.value().at("unit").get<std::string>(), it.value().at("higher_is_better").get<bool>(),
                               it.value().at("source").get<std::string>()};
    }
    for (const auto& row : doc.at("table")) {
        auto& cells = p.table[row.at("config_index").get<std::size_t>()];
        for (auto it = row.at("metrics").begin(); it != row.at("metrics").end(); ++it) {
            cells[it.key()] = aggregated_from_json(it.value(), "/table/metrics/" + it.key());
        }
    }
    return p;
}

std::vector<std::string> check_profile_schema(const json& doc) {
    std::vector<std::string> problems;
    auto fail = [&](const std::string& path, const std::string& msg) { problems.push_back(path + ": " + msg); };
    auto only_keys = [&](const json& obj, std::initializer_list<const char*> keys, const std::string& path) {
        std::set<std::string> allowed(keys.begin(), keys.end());
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            if (!allowed.count(it.key())) fail(path + "/" + it.key(), "unexpected member");
        }
        for (const auto* k : keys) {
            if (!obj.contains(k)) fail(path + "/" + k, "required member missing");
        }
    };

    if (!doc.is_object()) {
        fail("", "profile must be an object");
        return problems;
    }
    only_keys(doc, {"scope", "subject", "normalized", "host", "metrics", "table"}, "");
    if (!problems.empty()) return problems;

    if (!doc["scope"].is_string() || !parse_profile_scope(doc["scope"].get<std::string>())) {
        fail("/scope", "must be one of VNFP, NSP, TP");
    }
    if (!doc["subject"].is_string() || doc["subject"].get<std::string>().empty()) fail("/subject", "non-empty string required");
    if (!doc["normalized"].is_boolean()) fail("/normalized", "boolean required");

    const json& host = doc["host"];
    if (!host.is_object()) {
        fail("/host", "object required");
    } else {
        only_keys(host, {"cpu_model", "physical_cores", "total_mem_mb"}, "/host");
        if (host.contains("cpu_model") && !host["cpu_model"].is_string()) fail("/host/cpu_model", "string required");
        if (host.contains("physical_cores") &&
            (!host["physical_cores"].is_number_integer() || host["physical_cores"].get<std::int64_t>() < 1)) {
            fail("/host/physical_cores", "integer >= 1 required");
        }
        if (host.contains("total_mem_mb") &&
            (!host["total_mem_mb"].is_number_integer() || host["total_mem_mb"].get<std::int64_t>() < 1)) {
            fail("/host/total_mem_mb", "positive integer required");
        }
    }

    std::set<std::string> metric_names;
    const json& metrics = doc["metrics"];
    if (!metrics.is_object()) {
        fail("/metrics", "object required");
    } else {
        for (auto it = metrics.begin(); it != metrics.end(); ++it) {
            const std::string path = "/metrics/" + it.key();
            metric_names.insert(it.key());
            if (!it.value().is_object()) {
                fail(path, "object required");
                continue;
            }
            only_keys(it.value(), {"unit", "higher_is_better", "source"}, path);
            if (it.value().contains("unit") && !it.value()["unit"].is_string()) fail(path + "/unit", "string required");
            if (it.value().contains("higher_is_better") && !it.value()["higher_is_better"].is_boolean()) {
                fail(path + "/higher_is_better", "boolean required");
            }
            if (it.value().contains("source") && !it.value()["source"].is_string()) fail(path + "/source", "string required");
        }
    }

    const json& table = doc["table"];
    if (!table.is_array()) {
        fail("/table", "array required");
        return problems;
    }
    std::optional<std::uint64_t> previous;
    for (std::size_t i = 0; i < table.size(); ++i) {
        const std::string path = "/table/" + std::to_string(i);
        const json& row = table[i];
        if (!row.is_object()) {
            fail(path, "object required");
            continue;
        }
        only_keys(row, {"config_index", "metrics"}, path);
        if (!row.contains("config_index") || !row["config_index"].is_number_unsigned()) {
            fail(path + "/config_index", "non-negative integer required");
        } else {
            auto idx = row["config_index"].get<std::uint64_t>();
            if (previous && idx <= *previous) fail(path + "/config_index", "rows must be strictly ascending");
            previous = idx;
        }
        if (!row.contains("metrics") || !row["metrics"].is_object()) {
            fail(path + "/metrics", "object required");
            continue;
        }
        for (auto it = row["metrics"].begin(); it != row["metrics"].end(); ++it) {
            const std::string cell_path = path + "/metrics/" + it.key();
            if (!metric_names.count(it.key())) fail(cell_path, "metric not declared in /metrics");
            const json& cell = it.value();
            if (!cell.is_object()) {
                fail(cell_path, "object required");
                continue;
            }
            only_keys(cell, {"mean", "std", "n", "ci95_low", "ci95_high", "has_ci"}, cell_path);
            for (const char* k : {"mean", "std", "ci95_low", "ci95_high"}) {
                if (cell.contains(k) && !cell[k].is_number()) fail(cell_path + "/" + k, "number required");
            }
            if (cell.contains("n") && (!cell["n"].is_number_unsigned() || cell["n"].get<std::uint64_t>() < 1)) {
                fail(cell_path + "/n", "integer >= 1 required");
            }
            if (cell.contains("has_ci") && !cell["has_ci"].is_boolean()) fail(cell_path + "/has_ci", "boolean required");
            if (problems.empty()) {
                const double mean = cell["mean"].get<double>();
                if (cell["std"].get<double>() < 0) fail(cell_path + "/std", "must be >= 0");
                if (!(cell["ci95_low"].get<double>() <= mean && mean <= cell["ci95_high"].get<double>())) {
                    fail(cell_path, "ci95_low <= mean <= ci95_high violated");
                }
                if (cell["has_ci"].get<bool>() && cell["n"].get<std::uint64_t>() < 2) {
                    fail(cell_path, "has_ci requires n >= 2");
                }
            }
        }
    }
    return problems;
}

json to_json(const BaselineVector& b) {
    json values = json::object();
    for (const auto& [m, v] : b.baselines) values[m] = v;
    return {{"host", to_json(b.host)},
            {"baselines", values},
            {"provenance", b.provenance == BaselineVector::Provenance::measured ? "measured" : "supplied"}};
}

BaselineVector baseline_from_json(const json& doc) {
    ObjectReader r(doc, "");
    BaselineVector b;
    b.host = host_from_json(r.raw("host"), "/host");
    const json& values = r.raw("baselines");
    if (!values.is_object()) throw SpecError("/baselines", "expected an object");
    for (auto it = values.begin(); it != values.end(); ++it) {
        b.baselines[it.key()] = ObjectReader::as_number(it.value(), "/baselines/" + it.key());
    }
    if (auto p = r.string_opt("provenance")) {
        if (*p == "measured") b.provenance = BaselineVector::Provenance::measured;
        else if (*p == "supplied") b.provenance = BaselineVector::Provenance::supplied;
        else throw SpecError("/provenance", "provenance must be 'measured' or 'supplied'");
    }
    r.finish();
    return b;
}

BaselineVector load_baseline(const fs::path& path) {
    const std::string text = read_text_file(path);
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        auto [line, column] = line_column(text, e.byte == 0 ? 0 : e.byte - 1);
        throw SyntaxError(line, column, e.what());
    }
    return baseline_from_json(doc);
}

// ---------------------------------------------------------------------------
// Bundles

bool BundleManifest::same_content(const BundleManifest& o) const {
    return name == o.name && spec_digest == o.spec_digest && host == o.host && config_count == o.config_count &&
           repetitions == o.repetitions && metric_count == o.metric_count && record_count == o.record_count &&
           cpu_time_interpretation == o.cpu_time_interpretation && seed_derivation == o.seed_derivation &&
           backend == o.backend && warmup_s == o.warmup_s && duration_s == o.duration_s && flagged == o.flagged &&
           records_sha256 == o.records_sha256;
}

const PerformanceProfile* ProfileBundle::find_profile(ProfileScope scope, std::string_view subject) const {
    for (const auto& p : profiles) {
        if (p.scope == scope && (subject.empty() || p.subject == subject)) return &p;
    }
    return nullptr;
}

bool ProfileBundle::same_content(const ProfileBundle& o) const {
    return manifest.same_content(o.manifest) && records == o.records && topology == o.topology &&
           configurations == o.configurations && metrics == o.metrics && spec_document == o.spec_document &&
           profiles == o.profiles && normalized == o.normalized && baseline == o.baseline;
}

std::size_t expected_record_count(const ProfileBundle& b) {
    std::set<std::pair<std::size_t, std::size_t>> whole_run;
    std::set<std::tuple<std::size_t, std::size_t, std::string>> node_fail;
    for (const auto& f : b.manifest.flagged) {
        if (f.node.empty()) whole_run.insert({f.config_index, f.repetition});
        else node_fail.insert({f.config_index, f.repetition, f.node});
    }
    std::size_t count = 0;
    for (std::size_t c = 0; c < b.configurations.size(); ++c) {
        for (std::size_t rep = 0; rep < b.manifest.repetitions; ++rep) {
            if (whole_run.count({c, rep})) continue;
            for (const auto& m : b.metrics) {
                if (!node_fail.count({c, rep, m.source})) ++count;
            }
        }
    }
    return count;
}

void check_bundle_integrity(const ProfileBundle& b) {
    const auto& m = b.manifest;
    if (m.config_count != b.configurations.size()) {
        throw IntegrityError("manifest config_count " + std::to_string(m.config_count) + " != " +
                             std::to_string(b.configurations.size()) + " configurations");
    }
    if (m.metric_count != b.metrics.size()) {
        throw IntegrityError("manifest metric_count " + std::to_string(m.metric_count) + " != " +
                             std::to_string(b.metrics.size()) + " metrics");
    }
    if (m.record_count != b.records.size()) {
        throw IntegrityError("manifest record_count " + std::to_string(m.record_count) + " != " +
                             std::to_string(b.records.size()) + " records");
    }
    const std::size_t expected = expected_record_count(b);
    if (expected != b.records.size()) {
        throw IntegrityError("expected " + std::to_string(expected) + " records (configs x repetitions x metrics, "
                             "minus flagged runs), found " + std::to_string(b.records.size()));
    }
    std::set<std::tuple<std::size_t, std::size_t, std::string, std::string>> keys;
    for (const auto& r : b.records) {
        if (!std::isfinite(r.value)) throw IntegrityError("non-finite record value");
        if (r.config_index >= b.configurations.size()) throw IntegrityError("record references unknown configuration");
        if (r.repetition >= m.repetitions) throw IntegrityError("record repetition out of range");
        if (!keys.insert({r.config_index, r.repetition, r.node, r.metric}).second) {
            throw IntegrityError("duplicate record (" + std::to_string(r.config_index) + ", " +
                                 std::to_string(r.repetition) + ", " + r.node + ", " + r.metric + ")");
        }
    }
    for (std::size_t i = 0; i < b.configurations.size(); ++i) {
        if (b.configurations[i].index != i) throw IntegrityError("configuration indices must be 0..N-1");
    }
    for (const auto* list : {&b.profiles, &b.normalized}) {
        for (const auto& p : *list) {
            for (const auto& [index, row] : p.table) {
                if (index >= b.configurations.size()) {
                    throw IntegrityError("profile " + p.file_stem() + " references unknown configuration");
                }
            }
        }
    }
}

namespace {

std::string now_iso8601() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json manifest_to_json(const BundleManifest& m) {
    json flagged = json::array();
    for (const auto& f : m.flagged) {
        flagged.push_back({{"config_index", f.config_index}, {"repetition", f.repetition}, {"node", f.node},
                           {"reason", f.reason}});
    }
    return {{"name", m.name},
            {"spec_digest", m.spec_digest},
            {"host", to_json(m.host)},
            {"config_count", m.config_count},
            {"repetitions", m.repetitions},
            {"metric_count", m.metric_count},
            {"record_count", m.record_count},
            {"cpu_time_interpretation", m.cpu_time_interpretation},
            {"seed_derivation", m.seed_derivation},
            {"backend", m.backend},
            {"warmup_s", m.warmup_s},
            {"duration_s", m.duration_s ? json(*m.duration_s) : json(nullptr)},
            {"flagged", flagged},
            {"records_sha256", m.records_sha256},
            {"created_at", m.created_at}};
}

BundleManifest manifest_from_json(const json& doc) {
    ObjectReader r(doc, "/manifest");
    BundleManifest m;
    m.name = r.string("name");
    m.spec_digest = r.string("spec_digest");
    m.host = host_from_json(r.raw("host"), "/manifest/host");
    m.config_count = static_cast<std::size_t>(r.integer("config_count"));
    m.repetitions = static_cast<std::size_t>(r.integer("repetitions"));
    m.metric_count = static_cast<std::size_t>(r.integer("metric_count"));
    m.record_count = static_cast<std::size_t>(r.integer("record_count"));
    m.cpu_time_interpretation = r.string("cpu_time_interpretation");
    m.seed_derivation = r.string("seed_derivation");
    m.backend = r.string("backend");
    m.warmup_s = r.number("warmup_s");
    m.duration_s = r.number_opt("duration_s");
    for (const auto& f : detail::expect_array(r.raw("flagged"), "/manifest/flagged")) {
        ObjectReader fr(f, "/manifest/flagged");
        FlaggedRun run;
        run.config_index = static_cast<std::size_t>(fr.integer("config_index"));
        run.repetition = static_cast<std::size_t>(fr.integer("repetition"));
        run.node = fr.string("node");
        run.reason = fr.string("reason");
        fr.finish();
        m.flagged.push_back(std::move(run));
    }
    m.records_sha256 = r.string("records_sha256");
    m.created_at = r.string("created_at");
    r.finish();
    return m;
}

json metrics_to_json(const std::vector<MetricSpec>& metrics) {
    json out = json::array();
    for (const auto& m : metrics) {
        out.push_back({{"name", m.name}, {"source", m.source}, {"file", m.file}, {"key", m.key}, {"unit", m.unit},
                       {"higher_is_better", m.higher_is_better}});
    }
    return out;
}

std::vector<MetricSpec> metrics_from_json(const json& doc) {
    std::vector<MetricSpec> out;
    for (const auto& m : detail::expect_array(doc, "/metrics")) {
        ObjectReader r(m, "/metrics");
        MetricSpec s;
        s.name = r.string("name");
        s.source = r.string("source");
        s.file = r.string("file");
        s.key = r.string("key");
        s.unit = r.string("unit");
        s.higher_is_better = r.boolean("higher_is_better");
        r.finish();
        out.push_back(std::move(s));
    }
    return out;
}

json parse_bundle_json(const fs::path& path) {
    const std::string text = read_text_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw IoError("malformed JSON in '" + path.string() + "': " + e.what());
    }
}

std::string pretty(const json& doc) { return doc.dump(2) + "\n"; }

void reset_directory(const fs::path& dir) {
    std::error_code ec;
    fs::remove_all(dir, ec);
    if (ec) throw IoError("cannot clear '" + dir.string() + "': " + ec.message());
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

std::vector<PerformanceProfile> load_profiles(const fs::path& dir) {
    std::vector<PerformanceProfile> out;
    if (!fs::exists(dir)) return out;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename();
        if (entry.path().extension() == ".json" && name != "baseline.json" && name != "scores.json") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        try {
            out.push_back(profile_from_json(parse_bundle_json(f)));
        } catch (const SpecError& e) {
            throw IoError("profile '" + f.string() + "': " + e.what());
        }
    }
    return out;
}

}  // namespace

std::string write_bundle(const ProfileBundle& input, const fs::path& destination) {
    ProfileBundle bundle = input;
    check_bundle_integrity(bundle);

    const std::string records = render_records(bundle.records);
    bundle.manifest.records_sha256 = sha256_hex(records);
    if (bundle.manifest.created_at.empty()) bundle.manifest.created_at = now_iso8601();

    std::error_code ec;
    fs::create_directories(destination, ec);
    if (ec) throw IoError("cannot create bundle directory '" + destination.string() + "': " + ec.message());

    write_text_file(destination / "records.csv", records);
    write_text_file(destination / "topology.json", pretty(to_json(bundle.topology)));
    json configs = json::array();
    for (const auto& c : bundle.configurations) configs.push_back(to_json(c));
    write_text_file(destination / "configurations.json", pretty(configs));
    write_text_file(destination / "metrics.json", pretty(metrics_to_json(bundle.metrics)));
    write_text_file(destination / "spec.json", pretty(bundle.spec_document));

    reset_directory(destination / "profiles");
    for (const auto& p : bundle.profiles) {
        write_text_file(destination / "profiles" / (p.file_stem() + ".json"), pretty(to_json(p)));
    }
    std::error_code ignored;
    fs::remove_all(destination / "normalized", ignored);
    if (!bundle.normalized.empty() || bundle.baseline) {
        reset_directory(destination / "normalized");
        for (const auto& p : bundle.normalized) {
            write_text_file(destination / "normalized" / (p.file_stem() + ".json"), pretty(to_json(p)));
        }
        if (bundle.baseline) write_text_file(destination / "normalized" / "baseline.json", pretty(to_json(*bundle.baseline)));
    }

    // Manifest last: its presence marks a complete bundle.
    const std::string manifest = pretty(manifest_to_json(bundle.manifest));
    write_text_file(destination / "manifest.json", manifest);
    return sha256_hex(manifest);
}

ProfileBundle load_bundle(const fs::path& source) {
    if (!fs::is_directory(source)) throw IoError("bundle directory '" + source.string() + "' not found");
    for (const char* required : {"manifest.json", "records.csv", "topology.json", "configurations.json", "metrics.json",
                                 "spec.json"}) {
        if (!fs::exists(source / required)) throw IoError("bundle is missing '" + std::string(required) + "'");
    }

    ProfileBundle b;
    try {
        b.manifest = manifest_from_json(parse_bundle_json(source / "manifest.json"));
        const std::string records = read_text_file(source / "records.csv");
        if (sha256_hex(records) != b.manifest.records_sha256) {
            throw IntegrityError("records digest mismatch (records.csv was modified)");
        }
        b.records = parse_records(records);
        b.topology = topology_from_json(parse_bundle_json(source / "topology.json"), "/topology");
        const json configs = parse_bundle_json(source / "configurations.json");
        for (std::size_t i = 0; i < detail::expect_array(configs, "/configurations").size(); ++i) {
            b.configurations.push_back(configuration_from_json(configs[i], "/configurations/" + std::to_string(i)));
        }
        b.metrics = metrics_from_json(parse_bundle_json(source / "metrics.json"));
        b.spec_document = parse_bundle_json(source / "spec.json");
        b.profiles = load_profiles(source / "profiles");
        b.normalized = load_profiles(source / "normalized");
        if (fs::exists(source / "normalized" / "baseline.json")) {
            b.baseline = baseline_from_json(parse_bundle_json(source / "normalized" / "baseline.json"));
        }
    } catch (const SpecError& e) {
        throw IoError(std::string("malformed bundle: ") + e.what());
    }
    check_bundle_integrity(b);
    return b;
}

}  // namespace chainprof
