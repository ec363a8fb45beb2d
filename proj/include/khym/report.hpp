#pragma once

// Residual bookkeeping shared by all verifiers, plus deterministic
// JSON / CSV serialization.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "chart.hpp"

namespace khym {

struct Stat {
    double sup = 0, sum = 0;
    long n = 0;
    long nonfinite = 0;

    void add(double v) {
        v = std::abs(v);
        if (!std::isfinite(v)) {
            ++nonfinite;
            return;
        }
        sup = std::max(sup, v);
        sum += v;
        ++n;
    }
    double mean() const { return n ? sum / n : 0.0; }
};

struct Report {
    std::string check;
    bool has_grid = false;
    GridSpec grid;
    double tolerance = 1e-8;
    std::map<std::string, Stat> residuals;
    std::map<std::string, double> tolerances;  // per-residual overrides
    std::map<std::string, double> values;      // other numbers worth reporting
    std::vector<std::string> flags;

    Report() = default;
    Report(std::string name, double tol) : check(std::move(name)), tolerance(tol) {}
    Report(std::string name, double tol, const GridSpec& g)
        : check(std::move(name)), has_grid(true), grid(g), tolerance(tol) {}

    Stat& operator[](const std::string& k) { return residuals[k]; }
    void add(const std::string& k, double v) { residuals[k].add(v); }
    void flag(const std::string& f) {
        if (std::find(flags.begin(), flags.end(), f) == flags.end()) flags.push_back(f);
    }

    double tol_for(const std::string& k) const {
        auto it = tolerances.find(k);
        return it == tolerances.end() ? tolerance : it->second;
    }
    double sup(const std::string& k) const {
        auto it = residuals.find(k);
        if (it == residuals.end()) throw std::out_of_range("report " + check + " has no residual " + k);
        return it->second.sup;
    }
    double sup_all() const {
        double m = 0;
        for (auto& [k, s] : residuals) m = std::max(m, s.sup);
        return m;
    }
    bool ok(const std::string& k) const {
        auto& s = residuals.at(k);
        return s.nonfinite == 0 && s.sup <= tol_for(k);
    }
    bool pass() const {
        for (auto& [k, s] : residuals)
            if (!ok(k)) return false;
        return true;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["check"] = check;
        if (has_grid) j["grid"] = {{"points", grid.points}, {"margin", grid.margin}, {"seed", grid.seed}};
        nlohmann::json r = nlohmann::json::object();
        double mean_all = 0;
        for (auto& [k, s] : residuals) {
            r[k] = {{"sup_residual", s.sup},
                    {"mean_residual", s.mean()},
                    {"samples", s.n},
                    {"nonfinite", s.nonfinite},
                    {"tolerance", tol_for(k)},
                    {"pass", ok(k)}};
            mean_all = std::max(mean_all, s.mean());
        }
        j["residuals"] = r;
        j["sup_residual"] = sup_all();
        j["mean_residual"] = mean_all;
        j["values"] = values;
        j["flags"] = flags;
        j["tolerance"] = tolerance;
        j["pass"] = pass();
        return j;
    }
};

// nlohmann::json keeps object keys in a std::map, so dumps are key-sorted;
// doubles are printed with the shortest round-trip representation.
inline std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline std::string csv_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace khym
