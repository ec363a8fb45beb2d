#pragma once

// JSON (de)serialization of backgrounds and results.
//
// Background schema:
//   {"family": "canonical_CP2", "C": 1.0}                   canonical bundles
//   {"family": "T4_nilmanifold", "a": 1, "b": 0, "p": 0, "q": 0}
//   {"family": "hyperkahler_base", "a": 1, "lambda": 16}
//   optional on every family: "H_lo", "H_hi" (null = default range)
// Keys not listed for a family keep the family defaults; validate() enforces
// the parameter locks.

#include <cmath>
#include <limits>
#include <string>

#include "json.hpp"

#include "dhym.hpp"
#include "geometry.hpp"
#include "instantons.hpp"

namespace khym {

inline nlohmann::json to_json(const BackgroundSpec& s) {
    nlohmann::json j;
    j["family"] = to_string(s.family);
    j["a"] = s.a;
    j["b"] = s.b;
    j["p"] = s.p;
    j["q"] = s.q;
    j["C_einstein"] = s.C_einstein;
    j["lambda"] = s.lambda;
    if (is_canonical(s.family)) j["C"] = s.cone;
    else j["cone"] = s.cone;
    j["H_lo"] = std::isnan(s.H_lo) ? nlohmann::json(nullptr) : nlohmann::json(s.H_lo);
    j["H_hi"] = std::isnan(s.H_hi) ? nlohmann::json(nullptr) : nlohmann::json(s.H_hi);
    return j;
}

inline BackgroundSpec background_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("background: expected a JSON object");
    if (!j.contains("family")) throw std::invalid_argument("background: missing \"family\"");
    auto s = BackgroundSpec::defaults(family_from_string(j.at("family").get<std::string>()));
    auto num = [&](const char* k, double& dst) {
        if (!j.contains(k)) return;
        const auto& v = j.at(k);
        if (v.is_null()) dst = std::numeric_limits<double>::quiet_NaN();
        else if (v.is_number()) dst = v.get<double>();
        else throw std::invalid_argument(std::string("background: \"") + k + "\" must be a number");
    };
    num("a", s.a);
    num("b", s.b);
    num("p", s.p);
    num("q", s.q);
    num("C_einstein", s.C_einstein);
    num("lambda", s.lambda);
    num("cone", s.cone);
    num("C", s.cone);
    num("H_lo", s.H_lo);
    num("H_hi", s.H_hi);
    s.validate();
    return s;
}

inline nlohmann::json to_json(const KappaSolution& k) {
    nlohmann::json j;
    j["background"] = to_json(k.background);
    j["mu"] = k.mu;
    j["c1"] = k.c1;
    j["c2"] = k.c2;
    j["k"] = k.k ? nlohmann::json(*k.k) : nlohmann::json(nullptr);
    j["provenance"] = to_string(k.provenance);
    j["domain"] = {k.lo, std::isfinite(k.hi) ? nlohmann::json(k.hi) : nlohmann::json("inf")};
    j["global"] = k.global;
    j["flags"] = k.flags;
    return j;
}

inline nlohmann::json to_json(const EnergyResult& e) {
    auto fin = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json("inf"); };
    return {{"value", e.value},
            {"extrapolated", fin(e.extrapolated)},
            {"tail_exponent", fin(e.tail_exponent)},
            {"divergent", e.divergent},
            {"separable", e.separable},
            {"vol_cp2", e.vol_cp2}};
}

inline nlohmann::json to_json(const CubicBranch& b) {
    return {{"c", b.c}, {"branch", to_string(b.branch)}, {"H_lo", b.H_lo}, {"H_hi", b.H_hi}, {"outer", b.outer}};
}

}  // namespace khym
