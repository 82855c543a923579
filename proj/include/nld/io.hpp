#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nld/error.hpp"
#include "nld/grid.hpp"

namespace nld {

/// 17 significant digits: enough to round-trip any double.
inline std::string fmt(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    return out;
}

/// Field dump: header `index,x[,y],value`, one row per node in node order.
inline void write_field_csv(std::ostream& out, const Grid& grid, std::span<const double> values) {
    out << (grid.dim() == 1 ? "index,x,value\n" : "index,x,y,value\n");
    for (std::size_t i = 0; i < values.size(); ++i) {
        const Point p = grid.coord(i);
        out << i << ',' << fmt(p[0]);
        if (grid.dim() > 1) out << ',' << fmt(p[1]);
        out << ',' << fmt(values[i]) << '\n';
    }
}

/// Last numeric column of each data row; a non-numeric first row is a header.
inline std::vector<double> read_column_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::vector<double> out;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto comma = line.find_last_of(',');
        const std::string cell = comma == std::string::npos ? line : line.substr(comma + 1);
        char* end = nullptr;
        const double v = std::strtod(cell.c_str(), &end);
        if (end == cell.c_str()) {
            if (first) {
                first = false;
                continue;
            }
            throw ConfigError("malformed row in " + path.string() + ": " + line);
        }
        first = false;
        out.push_back(v);
    }
    return out;
}

/// Ordered key = value pairs written as a flat text manifest.
class Manifest {
public:
    void add(const std::string& key, const std::string& value) { entries_.emplace_back(key, value); }
    void add(const std::string& key, double value) { add(key, fmt(value)); }
    void add(const std::string& key, long long value) { add(key, std::to_string(value)); }
    void add(const std::string& key, std::size_t value) { add(key, std::to_string(value)); }
    void add(const std::string& key, int value) { add(key, std::to_string(value)); }
    void add(const std::string& key, bool value) { add(key, std::string(value ? "true" : "false")); }
    void add(const std::string& key, const char* value) { add(key, std::string(value)); }

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

    std::string value(const std::string& key) const {
        for (const auto& [k, v] : entries_)
            if (k == key) return v;
        return "";
    }

    std::string str() const {
        std::string out;
        for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
        return out;
    }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace nld
