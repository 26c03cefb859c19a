#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

namespace nsi {

// one certified clause: name, the statement it certifies, and the worst margin seen
struct Check {
    std::string name;
    std::string tag;
    bool pass = true;
    double margin = std::numeric_limits<double>::infinity();
    std::array<double, 3> witness{0, 0, 0};
    std::string note;
};

struct CheckList {
    std::vector<Check> checks;

    void add(Check c) { checks.push_back(std::move(c)); }
    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
    const Check* find(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return &c;
        return nullptr;
    }
    void append(const CheckList& o, const std::string& prefix = "") {
        for (Check c : o.checks) {
            c.name = prefix + c.name;
            checks.push_back(std::move(c));
        }
    }
};

// track the minimum of a margin together with where it occurred
struct MarginTracker {
    double worst = std::numeric_limits<double>::infinity();
    std::array<double, 3> at{0, 0, 0};
    long count = 0;

    void see(double m, double x1, double x2, double t = 0) {
        ++count;
        if (m < worst || std::isnan(m)) {
            worst = std::isnan(m) ? -std::numeric_limits<double>::infinity() : m;
            at = {x1, x2, t};
        }
    }
    Check check(std::string name, std::string tag, bool strict = true) const {
        Check c;
        c.name = std::move(name);
        c.tag = std::move(tag);
        c.margin = worst;
        c.witness = at;
        c.pass = strict ? worst > 0 : worst >= 0;
        return c;
    }
};

inline nlohmann::json number_json(double x) {
    if (std::isfinite(x)) return x;
    if (std::isnan(x)) return "nan";
    return x > 0 ? "inf" : "-inf";
}

inline nlohmann::json to_json(const Check& c) {
    nlohmann::json j;
    j["name"] = c.name;
    j["clause"] = c.tag;
    j["pass"] = c.pass;
    j["margin"] = number_json(c.margin);
    j["witness"] = {number_json(c.witness[0]), number_json(c.witness[1]), number_json(c.witness[2])};
    if (!c.note.empty()) j["note"] = c.note;
    return j;
}

inline nlohmann::json to_json(const CheckList& l) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& c : l.checks) a.push_back(to_json(c));
    return a;
}

// 17 significant digits, as required for round-tripping doubles
inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // end of namespace nsi
