#pragma once

#include <algorithm>
#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nld/error.hpp"

namespace nld {

/// Flat `section.key = value` run configuration. Blank lines and text after
/// `#` are ignored; keys outside the known set are rejected by name.
class Config {
public:
    static const std::set<std::string>& known_keys() {
        static const std::set<std::string> keys = {
            "scenario",        "seed",
            "output.dir",      "output.matrix",
            "kernel.shape",    "kernel.table",       "kernel.epsilon",   "kernel.m",
            "kernel.mode",     "kernel.norm_const",  "kernel.quadrature_points", "kernel.subcells",
            "domain.kind",     "domain.dim",         "domain.N",         "domain.box",
            "domain.h",        "domain.mask",
            "force.shape",     "force.r",            "force.a",          "force.b",
            "force.coeffs",    "force.zeros",        "force.table",
            "ic.kind",         "ic.value",           "ic.mean",          "ic.amplitude",
            "ic.k",            "ic.range",           "ic.path",
            "evolve.dt",       "evolve.T",           "evolve.scheme",    "evolve.snapshots",
            "evolve.record_every", "evolve.gamma",   "evolve.fast",
            "spectrum.k_max",  "spectrum.delta",
            "asymptotics.k",   "asymptotics.m",      "asymptotics.epsilons",
            "steady.u1",       "steady.u2",          "steady.R",         "steady.tol",
            "steady.max_iter", "steady.axis",
            "branch.u_star",   "branch.window",      "branch.steps",     "branch.ds",
            "branch.delta",    "branch.inward",
        };
        return keys;
    }

    static Config parse(std::istream& in, const std::string& source = "<config>") {
        Config c;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
            c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
        return c;
    }

    static Config parse_text(const std::string& text) {
        std::istringstream in(text);
        return parse(in);
    }

    static Config parse_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config " + path.string());
        Config c = parse(in, path.string());
        c.base_dir_ = path.parent_path();
        return c;
    }

    void set(const std::string& key, const std::string& value) {
        if (!known_keys().count(key)) throw ConfigError("unknown config key '" + key + "'");
        values_[key] = value;
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    const std::map<std::string, std::string>& values() const { return values_; }

    std::string text(const std::string& key, const std::string& fallback = "") const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double number(const std::string& key, double fallback) const {
        return has(key) ? to_number(key, values_.at(key)) : fallback;
    }

    double number(const std::string& key) const {
        require(key);
        return to_number(key, values_.at(key));
    }

    long long integer(const std::string& key, long long fallback) const {
        if (!has(key)) return fallback;
        const std::string& s = values_.at(key);
        char* end = nullptr;
        errno = 0;
        const long long v = std::strtoll(s.c_str(), &end, 10);
        if (errno != 0 || end == s.c_str() || *end != '\0')
            throw ConfigError("config key '" + key + "' expects an integer, got '" + s + "'");
        return v;
    }

    bool flag(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const std::string& s = values_.at(key);
        if (s == "true" || s == "1" || s == "yes") return true;
        if (s == "false" || s == "0" || s == "no") return false;
        throw ConfigError("config key '" + key + "' expects true/false, got '" + s + "'");
    }

    /// Comma- or whitespace-separated list of numbers.
    std::vector<double> numbers(const std::string& key, std::vector<double> fallback = {}) const {
        if (!has(key)) return fallback;
        std::string s = values_.at(key);
        std::replace(s.begin(), s.end(), ',', ' ');
        std::istringstream in(s);
        std::vector<double> out;
        std::string tok;
        while (in >> tok) out.push_back(to_number(key, tok));
        return out;
    }

    void require(const std::string& key) const {
        if (!has(key)) throw ConfigError("missing config key '" + key + "'");
    }

    /// Resolves a path relative to the directory of the config file.
    std::filesystem::path path(const std::string& key) const {
        require(key);
        std::filesystem::path p = values_.at(key);
        return p.is_absolute() ? p : base_dir_ / p;
    }

    void set_base_dir(std::filesystem::path dir) { base_dir_ = std::move(dir); }

    /// One `prefix + key = value` line per entry, in key order.
    std::string echo(const std::string& prefix = "") const {
        std::string out;
        for (const auto& [k, v] : values_) out += prefix + k + " = " + v + "\n";
        return out;
    }

    bool operator==(const Config& o) const { return values_ == o.values_; }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    static double to_number(const std::string& key, const std::string& s) {
        char* end = nullptr;
        errno = 0;
        const double v = std::strtod(s.c_str(), &end);
        if (errno != 0 || end == s.c_str() || *end != '\0')
            throw ConfigError("config key '" + key + "' expects a number, got '" + s + "'");
        return v;
    }

    std::map<std::string, std::string> values_;
    std::filesystem::path base_dir_;
};

}  // namespace nld
