#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "qmcfb/errors.hpp"

namespace qmcfb::csv {

inline std::string num(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline std::string num(long long v) { return std::to_string(v); }
inline std::string num(int v) { return std::to_string(v); }
inline std::string num(std::size_t v) { return std::to_string(v); }

/**
 * Buffered CSV table: leading `# key=value` comment lines, one header row, data
 * rows. Written in one go so a failed study never leaves a partial file.
 */
class Table {
public:
    explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}

    void comment(const std::string& line) { comments_.push_back(line); }
    /// Provenance lines go ahead of study-specific comments.
    void prepend_comment(const std::string& line) { comments_.insert(comments_.begin(), line); }

    template <class... Ts>
    void row(const Ts&... cells) {
        std::vector<std::string> r{num(cells)...};
        push(std::move(r));
    }

    void push(std::vector<std::string> cells) {
        if (cells.size() != header_.size()) throw ContractError("csv: row width differs from header");
        rows_.push_back(std::move(cells));
    }

    std::size_t size() const { return rows_.size(); }

    std::string str() const {
        std::string out;
        for (const auto& c : comments_) out += "# " + c + "\n";
        auto line = [&out](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (i) out += ',';
                out += cells[i];
            }
            out += '\n';
        };
        line(header_);
        for (const auto& r : rows_) line(r);
        return out;
    }

    void write(const std::filesystem::path& path) const {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        if (!os) throw ValidationError("cannot write " + path.string());
        os << str();
    }

private:
    std::vector<std::string> header_;
    std::vector<std::string> comments_;
    std::vector<std::vector<std::string>> rows_;
};

inline std::string timestamp_utc() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

}  // namespace qmcfb::csv
