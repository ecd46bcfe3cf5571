// json_reader.hpp - strict member access over nlohmann::json objects.
// Internal to the library.
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "chainprof/errors.hpp"

namespace chainprof::detail {

using nlohmann::json;

inline std::string type_label(const json& v) { return v.type_name(); }

// Reads members of one JSON object; finish() rejects members never asked for.
class ObjectReader {
public:
    ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw SpecError(path_.empty() ? "/" : path_, "expected an object, got " + type_label(obj_));
    }

    std::string child(const std::string& key) const { return path_ + "/" + key; }
    const std::string& path() const { return path_; }

    bool has(const std::string& key) {
        seen_.insert(key);
        auto it = obj_.find(key);
        return it != obj_.end() && !it->is_null();
    }

    const json& raw(const std::string& key) {
        if (!has(key)) throw SpecError(child(key), "required field missing");
        return obj_.at(key);
    }

    std::optional<std::reference_wrapper<const json>> raw_opt(const std::string& key) {
        if (!has(key)) return std::nullopt;
        return std::cref(obj_.at(key));
    }

    std::string string(const std::string& key) { return as_string(raw(key), child(key)); }
    std::optional<std::string> string_opt(const std::string& key) {
        if (!has(key)) return std::nullopt;
        return as_string(obj_.at(key), child(key));
    }

    double number(const std::string& key) { return as_number(raw(key), child(key)); }
    std::optional<double> number_opt(const std::string& key) {
        if (!has(key)) return std::nullopt;
        return as_number(obj_.at(key), child(key));
    }

    std::int64_t integer(const std::string& key) { return as_integer(raw(key), child(key)); }
    std::optional<std::int64_t> integer_opt(const std::string& key) {
        if (!has(key)) return std::nullopt;
        return as_integer(obj_.at(key), child(key));
    }

    std::optional<std::uint64_t> unsigned_opt(const std::string& key) {
        if (!has(key)) return std::nullopt;
        const json& v = obj_.at(key);
        if (!v.is_number_unsigned()) throw SpecError(child(key), "expected a non-negative integer");
        return v.get<std::uint64_t>();
    }

    bool boolean(const std::string& key) { return as_bool(raw(key), child(key)); }
    std::optional<bool> boolean_opt(const std::string& key) {
        if (!has(key)) return std::nullopt;
        return as_bool(obj_.at(key), child(key));
    }

    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            if (!seen_.count(it.key())) throw SpecError(child(it.key()), "unknown field '" + it.key() + "'");
        }
    }

    static std::string as_string(const json& v, const std::string& path) {
        if (!v.is_string()) throw SpecError(path, "expected a string, got " + type_label(v));
        return v.get<std::string>();
    }

    static double as_number(const json& v, const std::string& path) {
        if (!v.is_number()) throw SpecError(path, "expected a number, got " + type_label(v));
        double d = v.get<double>();
        if (!std::isfinite(d)) throw SpecError(path, "number must be finite");
        return d;
    }

    static std::int64_t as_integer(const json& v, const std::string& path) {
        if (v.is_number_integer()) return v.get<std::int64_t>();
        if (v.is_number_float()) {
            double d = v.get<double>();
            if (std::isfinite(d) && std::floor(d) == d && std::fabs(d) < 9e15) return static_cast<std::int64_t>(d);
        }
        throw SpecError(path, "expected an integer, got " + type_label(v));
    }

    static bool as_bool(const json& v, const std::string& path) {
        if (!v.is_boolean()) throw SpecError(path, "expected a boolean, got " + type_label(v));
        return v.get<bool>();
    }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

inline const json& expect_array(const json& v, const std::string& path) {
    if (!v.is_array()) throw SpecError(path, "expected an array, got " + type_label(v));
    return v;
}

}  // namespace chainprof::detail
