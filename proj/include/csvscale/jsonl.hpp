#ifndef CSVSCALE_JSONL_HPP
#define CSVSCALE_JSONL_HPP

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <system_error>

#include <json.hpp>

#include "csvscale/errors.hpp"
#include "csvscale/types.hpp"

namespace csvscale {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

/// Shortest decimal string that parses back to exactly `x`.
inline std::string format_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out) throw IoError("write failed for " + path.string());
}

/// Calls fn(object, line_number) for every non-blank line. Line numbers are 1-based.
inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(const json&, std::size_t)>& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                  ": parse error: " + e.what());
        }
        if (!obj.is_object())
            throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                  ": expected a JSON object");
        try {
            fn(obj, lineno);
        } catch (const json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

namespace detail {

inline const json& require(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ValidationError(std::string("missing field \"") + key + "\"");
    return *it;
}

inline std::vector<TokenSpan> parse_spans(const json& arr, const char* what) {
    if (!arr.is_array()) throw ValidationError(std::string(what) + " must be an array");
    std::vector<TokenSpan> spans;
    spans.reserve(arr.size());
    for (const auto& p : arr) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() ||
            !p[1].is_number_integer() || p[0].get<long long>() < 0 || p[1].get<long long>() < 0)
            throw ValidationError(std::string(what) + " entries must be [start, end] pairs of "
                                  "non-negative integers");
        spans.push_back({p[0].get<std::size_t>(), p[1].get<std::size_t>()});
    }
    return spans;
}

inline ordered_json spans_to_json(std::span<const TokenSpan> spans) {
    ordered_json arr = ordered_json::array();
    for (const auto& s : spans) arr.push_back({s.start, s.end});
    return arr;
}

inline std::vector<double> parse_doubles(const json& arr, const char* what) {
    if (!arr.is_array()) throw ValidationError(std::string(what) + " must be an array");
    std::vector<double> out;
    out.reserve(arr.size());
    for (const auto& v : arr) {
        if (!v.is_number()) throw ValidationError(std::string(what) + " must contain numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

}  // namespace detail
}  // namespace csvscale

#endif  // CSVSCALE_JSONL_HPP
