#pragma once

// Deformed Hermitian Yang-Mills: the cubic k^3 - 3 H^2 k - c/4 = 0 for the
// fibre profile of A = k(H) Theta, its branches, and the 6D check.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "geometry.hpp"

namespace khym {

enum class BranchLabel { upper, middle, lower };

inline std::string to_string(BranchLabel b) {
    switch (b) {
        case BranchLabel::upper: return "upper";
        case BranchLabel::middle: return "middle";
        case BranchLabel::lower: return "lower";
    }
    return "?";
}

inline double cubic_value(double c, double H, double k) { return k * k * k - 3 * H * H * k - c / 4; }

inline double discriminant(double c, double H) { return 108 * std::pow(H, 6) - 27 * c * c / 16; }

// H where the discriminant vanishes, |c|^(1/3) / 2
inline double discriminant_zero(double c) { return std::cbrt(std::abs(c)) / 2; }

// Real roots in decreasing order (three when the discriminant is >= 0, else one).
inline std::vector<double> cubic_roots(double c, double H) {
    H = std::abs(H);
    if (c == 0) return {std::sqrt(3.0) * H, 0.0, -std::sqrt(3.0) * H};
    double sgn = c > 0 ? 1 : -1;
    double ca = std::abs(c);
    std::vector<double> out;
    if (H == 0) {
        out = {std::cbrt(ca / 4)};
    } else {
        double x = ca / (8 * H * H * H);
        if (x <= 1) {
            double phi = std::acos(x) / 3;
            for (int k : {0, 2, 1}) out.push_back(2 * H * std::cos(phi - 2 * std::numbers::pi * k / 3));
        } else {
            out = {2 * H * std::cosh(std::acosh(x) / 3)};
        }
    }
    // one Newton polish step against the cubic itself
    for (double& k : out) {
        double f = cubic_value(ca, H, k), fp = 3 * k * k - 3 * H * H;
        if (fp != 0 && std::abs(f) > 0) {
            double kn = k - f / fp;
            if (std::abs(cubic_value(ca, H, kn)) < std::abs(f)) k = kn;
        }
    }
    std::sort(out.begin(), out.end(), std::greater<>());
    if (sgn < 0) {
        for (double& k : out) k = -k;
        std::reverse(out.begin(), out.end());
    }
    return out;
}

// labels for the roots returned by cubic_roots
inline std::vector<BranchLabel> root_labels(double c, std::size_t n) {
    if (n == 3) return {BranchLabel::upper, BranchLabel::middle, BranchLabel::lower};
    return {c >= 0 ? BranchLabel::upper : BranchLabel::lower};
}

// Closed-form branch in terms of an arbitrary expression for H (c >= 0).
// upper/middle/lower use the trigonometric form where three roots exist;
// `outer` selects the hyperbolic form of the single real root (x > 1).
inline Scalar cubic_branch_expr(double c, BranchLabel b, const Scalar& H, bool outer = false) {
    if (c < 0) throw std::invalid_argument("cubic_branch_expr: c must be >= 0 (use the reflection for c < 0)");
    double s3 = std::sqrt(3.0);
    if (c == 0) {
        if (b == BranchLabel::upper) return Scalar(s3) * H;
        if (b == BranchLabel::lower) return Scalar(-s3) * H;
        return Scalar(0.0);
    }
    Scalar x = Scalar(c / 8) / (H * H * H);
    Scalar one = 1.0;
    if (outer) {
        if (b != BranchLabel::upper) throw std::invalid_argument("cubic_branch_expr: only the upper root survives past the double root");
        Scalar y = log(x + sqrt(x * x - one)) / Scalar(3.0);
        return H * (exp(y) + exp(-y));
    }
    // acos(x) = 2 atan(sqrt(1 - x^2) / (1 + x))
    Scalar phi = Scalar(2.0 / 3.0) * atan(sqrt(one - x * x) / (one + x));
    int k = b == BranchLabel::upper ? 0 : (b == BranchLabel::middle ? 2 : 1);
    return Scalar(2.0) * H * cos(phi - Scalar(2 * std::numbers::pi * k / 3));
}

struct CubicBranch {
    double c = 0;
    BranchLabel branch = BranchLabel::upper;
    double H_lo = 0, H_hi = 0;
    bool outer = false;  // single-root region below the double root
    Scalar profile;      // kappa(H) in variable 0

    double operator()(double H) const {
        double x[1] = {H};
        return profile(x);
    }
};

struct BranchSet {
    std::vector<CubicBranch> branches;
    std::vector<std::string> flags;
};

inline BranchSet solve_cubic_branches(double c, double H_lo, double H_hi) {
    if (c < 0) throw std::invalid_argument("solve_cubic_branches: c must be >= 0");
    if (!(H_lo < H_hi) || H_lo < 0) throw std::invalid_argument("solve_cubic_branches: need 0 <= H_lo < H_hi");
    if (c > 0 && H_lo == 0) throw DomainError("solve_cubic_branches: H = 0 is singular for the closed form when c > 0");
    BranchSet out;
    Scalar H = Scalar::coord(0);
    double Hs = discriminant_zero(c);
    auto make = [&](BranchLabel b, double lo, double hi, bool outer) {
        out.branches.push_back(CubicBranch{c, b, lo, hi, outer, cubic_branch_expr(c, b, H, outer)});
    };
    if (c > 0 && H_lo < Hs) {
        make(BranchLabel::upper, H_lo, std::min(Hs, H_hi), true);
        if (Hs < H_hi) out.flags.push_back("split_at_discriminant_zero");
    }
    if (c == 0 || Hs < H_hi) {
        double lo = std::max(H_lo, Hs);
        for (auto b : {BranchLabel::upper, BranchLabel::middle, BranchLabel::lower}) make(b, lo, H_hi, false);
    }
    return out;
}

// sup of |k'(k^2 - H^2) - 2 H k| with k' the symbolic derivative of the profile;
// also re-substitutes into the cubic.
inline Report dhym_ode_residual(const Scalar& kappa, double c, double H_lo, double H_hi, int n = 200,
                                double tolerance = 1e-10) {
    Report rep("dhym_ode_residual", tolerance);
    Scalar H = Scalar::coord(0);
    Tape t({kappa.d(0) * (kappa * kappa - H * H) - Scalar(2.0) * H * kappa, kappa});
    long skipped = 0;
    for (int i = 0; i < n; ++i) {
        double x[1] = {H_lo + (H_hi - H_lo) * (i + 0.5) / n};
        auto v = t.eval(x);
        // double roots of the cubic, where k' blows up
        if (std::abs(v[1] * v[1] - x[0] * x[0]) < 1e-8 * std::max(1.0, x[0] * x[0]) &&
            std::abs(cubic_value(c, x[0], v[1])) < 1e-8 * std::max(1.0, std::pow(x[0], 3))) {
            ++skipped;
            continue;
        }
        rep.add("ode", v[0]);
        rep.add("cubic", cubic_value(c, x[0], v[1]));
    }
    rep.tolerances["cubic"] = 1e-12 * std::max(1.0, std::pow(H_hi, 3));
    if (skipped) rep.flag("skipped_kappa_squared_equals_H_squared");
    rep.values["c"] = c;
    rep.values["skipped"] = static_cast<double>(skipped);
    return rep;
}

inline Report dhym_ode_residual(const CubicBranch& b, int n = 200, double tolerance = 1e-10) {
    auto r = dhym_ode_residual(b.profile, b.c, b.H_lo, b.H_hi, n, tolerance);
    r.values["H_lo"] = b.H_lo;
    r.values["H_hi"] = b.H_hi;
    return r;
}

// A = k(H) Theta on a b = p = q = 0 background; reports 1/6 F^3 - 1/2 F ^ omega^2
// and the (1,1) condition. The HYM trace F ^ omega^2 / vol is reported as values.
inline Report verify_dhym_6d(const CubicBranch& b, const SU3Structure& S, const GridSpec& grid, double tolerance = 1e-6) {
    const auto& sp = S.spec;
    if (sp.family == Family::flat_C3) throw std::invalid_argument("verify_dhym_6d: use the canonical_CP2 background with C = 0");
    if (sp.b != 0 || sp.p != 0 || sp.q != 0) throw std::invalid_argument("verify_dhym_6d: needs b = p = q = 0");
    Report rep("verify_dhym_6d", tolerance, grid);
    Scalar kappa = cubic_branch_expr(b.c, b.branch, S.H, b.outer);
    KForm A = kappa * S.Theta;
    KForm F = d(A);
    std::vector<KForm> fs = {F, S.om, S.vol};
    bool hol = S.has_holomorphic_volume();
    if (hol) fs.push_back(*S.om_plus);
    FormTape tape(fs);
    Tape Ht({S.H});
    double tmin = kInf, tmax = -kInf;
    long skipped = 0;
    for (auto& p : S.sample(grid)) {
        double H = Ht.eval(p.x)[0];
        if (H < b.H_lo || H > b.H_hi) {
            ++skipped;
            continue;
        }
        auto v = tape.eval(p.x);
        const auto &Fv = v[0], &om = v[1], &vol = v[2];
        auto om2 = wedge(om, om);
        auto F3 = wedge(Fv, wedge(Fv, Fv));
        rep.add("dhym", ((1.0 / 6.0) * F3 - 0.5 * wedge(Fv, om2)).max_abs());
        if (hol) {
            rep.add("F_wedge_Omega_plus", wedge(Fv, v[3]).max_abs());
        } else {
            Eigen::MatrixXd J = complex_structure(S.g.at(p.x), om);
            Eigen::MatrixXd W = two_form_matrix(Fv);
            rep.add("J_invariance", (J.transpose() * W * J - W).cwiseAbs().maxCoeff());
        }
        double tr = wedge(Fv, om2).v[0] / vol.v[0];
        tmin = std::min(tmin, tr);
        tmax = std::max(tmax, tr);
    }
    if (skipped) rep.flag("points_outside_branch_domain");
    rep.values["skipped"] = static_cast<double>(skipped);
    rep.values["trace_min"] = tmin;
    rep.values["trace_max"] = tmax;
    // HYM would need F ^ omega^2 = -2 C0 vol with C0 constant
    rep.values["hym_trace_spread"] = tmax - tmin;
    rep.values["C0_estimate"] = -0.5 * (tmin + tmax) / 2;
    return rep;
}

// Branches defined on all of [H0, inf), H0 = C^(1/3) / 2 (canonical bundle of
// CP2, H = r^2 / 2).
inline int count_global_branches(double c, const BackgroundSpec& spec) {
    double C;
    if (spec.family == Family::canonical_CP2)
        C = spec.cone;
    else if (spec.family == Family::flat_C3)
        C = 0;
    else
        throw std::invalid_argument("count_global_branches: canonical_CP2 or flat_C3 only");
    return std::abs(c) <= C ? 3 : 1;
}

inline std::string emit_branch_samples(const std::vector<double>& c_values, const std::vector<double>& H_grid) {
    std::ostringstream os;
    os << "c,H,branch,kappa\n";
    for (double c : c_values)
        for (double H : H_grid) {
            auto roots = cubic_roots(c, H);
            auto labels = root_labels(c, roots.size());
            for (std::size_t i = 0; i < roots.size(); ++i)
                os << csv_double(c) << ',' << csv_double(H) << ',' << to_string(labels[i]) << ',' << csv_double(roots[i] + 0.0) << '\n';
        }
    return os.str();
}

}  // namespace khym
