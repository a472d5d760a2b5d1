#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rwb/core.hpp"
#include "rwb/metrics.hpp"

namespace rwb {

inline void write_text_file(const std::filesystem::path& path, std::string_view content) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write file: " + path.string());
    out << content;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read file: " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_json_file(const std::filesystem::path& path, const Json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

inline Json read_json_file(const std::filesystem::path& path) {
    try {
        return Json::parse(read_text_file(path));
    } catch (const std::exception& e) {
        throw ParseError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

inline std::string trace_to_jsonl(const Trace& trace) {
    std::string out;
    for (const auto& r : trace.records) {
        out += r.to_json().dump();
        out += '\n';
    }
    return out;
}

inline void write_trace_jsonl(const std::filesystem::path& path, const Trace& trace) {
    write_text_file(path, trace_to_jsonl(trace));
}

inline Trace read_trace_jsonl(const std::filesystem::path& path, int num_arms,
                              double lambda_explore = 0.1) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open trace: " + path.string());
    Trace trace;
    trace.num_arms = num_arms;
    trace.lambda_explore = lambda_explore;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            trace.records.push_back(PullRecord::from_json(Json::parse(line)));
        } catch (const std::exception& e) {
            throw ParseError("trace parse_error at line " + std::to_string(line_no) + ": " +
                             e.what());
        }
    }
    return trace;
}

/// FNV-1a of a canonical JSON dump; identifies configs in manifests.
inline std::string json_hash(const Json& j) {
    const std::string s = j.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace rwb
