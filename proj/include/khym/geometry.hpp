#pragma once

// Catalog of S^1-invariant Kahler-Einstein backgrounds with their
// SU(3)-structures, and the structure / Einstein verifiers.
//
// Every background is written as
//     omega = Theta ^ dH + omega1~,   g = u^2 dH^2 + u^-2 Theta^2 + g1~
// over a Kahler 4-manifold M; the canonical-bundle backgrounds use the
// radius r instead of H (H = r^2/2 for CP2, H = 2r^2/3 for S2xS2).

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "chart.hpp"
#include "expr.hpp"
#include "forms.hpp"
#include "report.hpp"

namespace khym {

using std::numbers::pi;

enum class Family {
    flat_C3,
    canonical_CP2,
    canonical_S2xS2,
    CP3_type,
    negative_KE_dual,
    hyperkahler_base,
    T4_nilmanifold,
    conti_salamon
};

inline const std::vector<std::pair<Family, std::string>>& family_names() {
    static const std::vector<std::pair<Family, std::string>> n = {
        {Family::flat_C3, "flat_C3"},
        {Family::canonical_CP2, "canonical_CP2"},
        {Family::canonical_S2xS2, "canonical_S2xS2"},
        {Family::CP3_type, "CP3_type"},
        {Family::negative_KE_dual, "negative_KE_dual"},
        {Family::hyperkahler_base, "hyperkahler_base"},
        {Family::T4_nilmanifold, "T4_nilmanifold"},
        {Family::conti_salamon, "conti_salamon"}};
    return n;
}

inline std::string to_string(Family f) {
    for (auto& [k, s] : family_names())
        if (k == f) return s;
    return "?";
}

inline Family family_from_string(const std::string& s) {
    for (auto& [k, n] : family_names())
        if (n == s) return k;
    throw std::invalid_argument("unknown background family: " + s);
}

inline bool is_canonical(Family f) { return f == Family::canonical_CP2 || f == Family::canonical_S2xS2; }

// ---------------------------------------------------------------------------

struct BackgroundSpec {
    Family family = Family::canonical_CP2;
    double a = 2, b = 0, p = 0, q = 0;
    double C_einstein = 6;
    double lambda = 0;
    // Canonical bundles: the constant C in r^6 - C.  Other families: the
    // constant under the square root of the u-formula.
    double cone = 0;
    // H-range for the families written in the H chart; NaN = family default.
    double H_lo = std::numeric_limits<double>::quiet_NaN();
    double H_hi = std::numeric_limits<double>::quiet_NaN();

    static BackgroundSpec flat_c3() {
        BackgroundSpec s;
        s.family = Family::flat_C3;
        s.a = 2;
        s.C_einstein = 6;
        return s;
    }
    static BackgroundSpec canonical_cp2(double C) {
        BackgroundSpec s;
        s.family = Family::canonical_CP2;
        s.cone = C;
        return s;
    }
    static BackgroundSpec canonical_s2xs2(double C) {
        BackgroundSpec s;
        s.family = Family::canonical_S2xS2;
        s.a = 1;
        s.C_einstein = 8;
        s.cone = C;
        return s;
    }
    static BackgroundSpec cp3_type() {
        BackgroundSpec s;
        s.family = Family::CP3_type;
        s.a = 1;
        s.C_einstein = 12;
        s.lambda = -16;
        return s;
    }
    static BackgroundSpec negative_ke_dual() {
        BackgroundSpec s;
        s.family = Family::negative_KE_dual;
        s.a = 1;
        s.C_einstein = -12;
        s.lambda = 16;
        return s;
    }
    static BackgroundSpec hyperkahler(double a = 1, double lambda = 16) {
        BackgroundSpec s;
        s.family = Family::hyperkahler_base;
        s.a = a;
        s.C_einstein = 0;
        s.lambda = lambda;
        return s;
    }
    static BackgroundSpec t4_nilmanifold(double a, double b, double p, double q) {
        BackgroundSpec s;
        s.family = Family::T4_nilmanifold;
        s.a = a;
        s.b = b;
        s.p = p;
        s.q = q;
        s.C_einstein = 0;
        s.cone = -36;  // makes the general u-formula collapse to u = aH+b when p = q = 0
        return s;
    }
    static BackgroundSpec conti_salamon() {
        auto s = t4_nilmanifold(1, 0, 0, 0);
        s.family = Family::conti_salamon;
        return s;
    }

    static BackgroundSpec defaults(Family f) {
        switch (f) {
            case Family::flat_C3: return flat_c3();
            case Family::canonical_CP2: return canonical_cp2(1);
            case Family::canonical_S2xS2: return canonical_s2xs2(1);
            case Family::CP3_type: return cp3_type();
            case Family::negative_KE_dual: return negative_ke_dual();
            case Family::hyperkahler_base: return hyperkahler();
            case Family::T4_nilmanifold: return t4_nilmanifold(1, 0, 0, 0);
            case Family::conti_salamon: return conti_salamon();
        }
        return canonical_cp2(1);
    }

    // Default H-range of the H-chart families.
    std::pair<double, double> H_range() const {
        double lo = H_lo, hi = H_hi;
        if (std::isnan(lo) || std::isnan(hi)) {
            std::pair<double, double> d{0, kInf};
            switch (family) {
                case Family::CP3_type: d = {0, 1}; break;
                case Family::negative_KE_dual: d = {1, kInf}; break;
                case Family::T4_nilmanifold: {
                    // smallest H where both factors are positive
                    double l = 0;
                    if (a + p > 0) l = std::max(l, -(b + q) / (a + p));
                    if (a - p > 0) l = std::max(l, -(b - q) / (a - p));
                    d = {l, kInf};
                    break;
                }
                default: break;
            }
            if (std::isnan(lo)) lo = d.first;
            if (std::isnan(hi)) hi = d.second;
        }
        return {lo, hi};
    }

    // Cone constant of the general u-formula, in the H normalisation.
    double check_constant() const {
        switch (family) {
            case Family::canonical_CP2: return 36.0 * cone;
            case Family::canonical_S2xS2: return 256.0 * cone / 9.0;
            case Family::flat_C3: return 0.0;
            default: return cone;
        }
    }

    void validate() const {
        auto lock = [&](bool ok, const char* what) {
            if (!ok) throw std::invalid_argument(to_string(family) + ": parameter lock violated (" + what + ")");
        };
        auto eq = [](double x, double y) { return std::abs(x - y) < 1e-12; };
        switch (family) {
            case Family::flat_C3: break;
            case Family::canonical_CP2:
                lock(eq(a, 2) && eq(b, 0) && eq(p, 0) && eq(q, 0), "a=2, b=p=q=0");
                lock(eq(lambda, 0) && eq(C_einstein, 6), "lambda=0, C=6");
                lock(cone >= 0, "cone parameter >= 0");
                break;
            case Family::canonical_S2xS2:
                lock(eq(a, 1) && eq(b, 0) && eq(p, 0) && eq(q, 0), "a=1, b=p=q=0");
                lock(eq(lambda, 0) && eq(C_einstein, 8), "lambda=0, C=8");
                lock(cone >= 0, "cone parameter >= 0");
                break;
            case Family::CP3_type:
                lock(eq(a, 1) && eq(b, 0) && eq(p, 0) && eq(q, 0), "a=1, b=p=q=0");
                lock(eq(C_einstein, 12) && eq(lambda, -16) && eq(cone, 0), "C=12, lambda=-16, cone=0");
                break;
            case Family::negative_KE_dual:
                lock(eq(a, 1) && eq(b, 0) && eq(p, 0) && eq(q, 0), "a=1, b=p=q=0");
                lock(eq(C_einstein, -12) && eq(lambda, 16) && eq(cone, 0), "C=-12, lambda=16, cone=0");
                break;
            case Family::hyperkahler_base:
                lock(a > 0 && eq(b, 0) && eq(p, 0) && eq(q, 0), "a>0, b=p=q=0");
                lock(eq(C_einstein, 0) && lambda > 0 && eq(cone, 0), "C=0, lambda>0, cone=0");
                break;
            case Family::T4_nilmanifold:
                lock(eq(C_einstein, 0) && eq(lambda, 0), "C=0, lambda=0");
                break;
            case Family::conti_salamon:
                lock(eq(a, 1) && eq(b, 0) && eq(p, 0) && eq(q, 0), "a=1, b=p=q=0");
                lock(eq(C_einstein, 0) && eq(lambda, 0), "C=0, lambda=0");
                break;
        }
        if (!is_canonical(family) && family != Family::flat_C3) {
            auto [lo, hi] = H_range();
            if (!(lo < hi)) throw std::invalid_argument("empty H-range");
            // aH+b - |pH+q| is concave, so checking the ends is enough
            auto win = [&](double H) { return a * H + b - std::abs(p * H + q); };
            double probe_lo = lo + 1e-9 * std::max(1.0, std::abs(lo));
            double probe_hi = std::isfinite(hi) ? hi - 1e-9 * std::max(1.0, std::abs(hi)) : std::max(1e6, 2 * std::abs(lo) + 1e6);
            if (!(win(probe_lo) > 0) || !(win(probe_hi) > 0))
                throw std::invalid_argument("positivity window aH+b > |pH+q| violated on the H-range");
        }
    }
};

// ---------------------------------------------------------------------------
// base 4-manifolds, built into a chart at coordinate offset `off`

struct BaseData {
    std::string manifold;        // CP2, S2xS2, T4, H2xH2
    ChartPtr chart;
    int off = 0;
    KForm omega;                 // Kahler form of the base
    std::vector<Scalar> g;       // 4x4 block over coordinates off..off+3
    std::vector<Scalar> J;       // 4x4 block, J[i*4+j] = J^i_j

    // d^c f = df o J on the base directions
    KForm dc(const Scalar& f) const {
        KForm out(chart, 1);
        for (int j = 0; j < 4; ++j) {
            Scalar s = 0.0;
            for (int i = 0; i < 4; ++i) {
                if (J[i * 4 + j].is_zero()) continue;
                Scalar di = f.d(off + i);
                if (di.is_zero()) continue;
                s += J[i * 4 + j] * di;
            }
            out[off + j] = s;
        }
        return out;
    }

    std::vector<int> top_index() const { return {off, off + 1, off + 2, off + 3}; }

    // coefficient of a 4-form on the base directions relative to omega^2
    Scalar ratio_to_omega2(const KForm& four) const {
        auto o2 = wedge(omega, omega);
        return four.component(top_index()) / o2.component(top_index());
    }

    // alpha = alpha_omega * omega + (part orthogonal to omega)
    Scalar omega_component(const KForm& alpha) const { return ratio_to_omega2(wedge(alpha, omega)); }

    // Positive Laplacian through Delta f * omega^2 = 2 dd^c f ^ omega (Kahler identity)
    Scalar laplacian(const Scalar& f) const { return Scalar(2.0) * omega_component(d(dc(f))); }

    MetricField metric4() const {
        if (chart->dim() != 4) throw std::invalid_argument("metric4: base not built on a 4-dimensional chart");
        MetricField m(chart);
        m.m = g;
        return m;
    }
};

namespace detail {

inline std::vector<Scalar> block_of(const MetricField& g, int off) {
    std::vector<Scalar> b(16);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) b[i * 4 + j] = g(off + i, off + j);
    return b;
}

inline std::vector<Scalar> block_complex_structure(const std::vector<Scalar>& g, const KForm& omega, int off) {
    auto ginv = sym_inverse(g, 4);
    std::vector<Scalar> W(16, Scalar(0.0));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if (i != j) W[i * 4 + j] = omega.component({off + i, off + j});
    std::vector<Scalar> J(16, Scalar(0.0));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            Scalar s = 0.0;
            for (int k = 0; k < 4; ++k)
                if (!ginv[i * 4 + k].is_zero() && !W[k * 4 + j].is_zero()) s += ginv[i * 4 + k] * W[k * 4 + j];
            J[i * 4 + j] = -s;
        }
    return J;
}

inline BaseData finish_base(std::string name, const ChartPtr& ch, int off, KForm omega, const MetricField& g) {
    BaseData b;
    b.manifold = std::move(name);
    b.chart = ch;
    b.off = off;
    b.omega = std::move(omega);
    b.g = block_of(g, off);
    b.J = block_complex_structure(b.g, b.omega, off);
    return b;
}

}  // namespace detail

// Left-invariant coframe of S^3 in Euler angles together with t, the
// cohomogeneity coordinate of CP2.  Coordinates t, x1, x2, x3 sit at off..off+3.
struct CP2Frame {
    Scalar t, x1, x2, x3;
    KForm dt, s1, s2, s3;
};

inline CP2Frame cp2_frame(const ChartPtr& ch, int off) {
    CP2Frame f;
    f.t = Scalar::coord(off);
    f.x1 = Scalar::coord(off + 1);
    f.x2 = Scalar::coord(off + 2);
    f.x3 = Scalar::coord(off + 3);
    int n = ch->dim();
    std::vector<Scalar> c1(n, Scalar(0.0)), c2(n, Scalar(0.0)), c3(n, Scalar(0.0));
    c1[off + 2] = Scalar(0.5) * cos(f.x1);
    c1[off + 3] = Scalar(0.5) * sin(f.x1) * sin(f.x2);
    c2[off + 2] = Scalar(-0.5) * sin(f.x1);
    c2[off + 3] = Scalar(0.5) * cos(f.x1) * sin(f.x2);
    c3[off + 1] = 0.5;
    c3[off + 3] = Scalar(0.5) * cos(f.x2);
    f.dt = KForm::dx(ch, off);
    f.s1 = KForm::one_form(ch, c1);
    f.s2 = KForm::one_form(ch, c2);
    f.s3 = KForm::one_form(ch, c3);
    return f;
}

// Fubini-Study (Ric = 6 g)
inline BaseData cp2_base(const ChartPtr& ch, int off) {
    auto f = cp2_frame(ch, off);
    Scalar one = 1.0;
    MetricField g(ch);
    g.add_square(one / (Scalar(4.0) * f.t * (one - f.t)), f.dt);
    g.add_square(f.t * (one - f.t), f.s1);
    g.add_square(f.t, f.s2);
    g.add_square(f.t, f.s3);
    KForm omega = Scalar(0.5) * wedge(f.s1, f.dt) + f.t * wedge(f.s2, f.s3);
    return detail::finish_base("CP2", ch, off, omega, g);
}

// Orientation of the second sphere factor: the S2xS2 base carries the
// opposite orientation on its second factor.
constexpr double kSecondSphereOrientation = -1.0;

// Product of two round spheres of radius 1/2 (Ric = 4 g) in stereographic
// polar coordinates (r1, th1, r2, th2).
inline BaseData s2xs2_base(const ChartPtr& ch, int off) {
    Scalar one = 1.0;
    Scalar r1 = Scalar::coord(off), r2 = Scalar::coord(off + 2);
    auto dr1 = KForm::dx(ch, off), da1 = KForm::dx(ch, off + 1);
    auto dr2 = KForm::dx(ch, off + 2), da2 = KForm::dx(ch, off + 3);
    Scalar w1 = one / ((one + r1 * r1) * (one + r1 * r1)), w2 = one / ((one + r2 * r2) * (one + r2 * r2));
    MetricField g(ch);
    g.add_square(w1, dr1);
    g.add_square(w1 * r1 * r1, da1);
    g.add_square(w2, dr2);
    g.add_square(w2 * r2 * r2, da2);
    KForm omega = (w1 * r1) * wedge(dr1, da1) + Scalar(kSecondSphereOrientation) * (w2 * r2) * wedge(dr2, da2);
    return detail::finish_base("S2xS2", ch, off, omega, g);
}

inline BaseData t4_base(const ChartPtr& ch, int off) {
    MetricField g(ch);
    for (int i = 0; i < 4; ++i) g.add_square(1.0, KForm::dx(ch, off + i));
    KForm omega = wedge(KForm::dx(ch, off), KForm::dx(ch, off + 1)) + wedge(KForm::dx(ch, off + 2), KForm::dx(ch, off + 3));
    return detail::finish_base("T4", ch, off, omega, g);
}

// Product of two hyperbolic planes, each (dx^2+dy^2)/(6 y^2), so Ric = -6 g.
inline BaseData h2xh2_base(const ChartPtr& ch, int off) {
    Scalar y1 = Scalar::coord(off + 1), y2 = Scalar::coord(off + 3);
    Scalar c1 = Scalar(1.0) / (Scalar(6.0) * y1 * y1), c2 = Scalar(1.0) / (Scalar(6.0) * y2 * y2);
    MetricField g(ch);
    g.add_square(c1, KForm::dx(ch, off));
    g.add_square(c1, KForm::dx(ch, off + 1));
    g.add_square(c2, KForm::dx(ch, off + 2));
    g.add_square(c2, KForm::dx(ch, off + 3));
    KForm omega = c1 * wedge(KForm::dx(ch, off), KForm::dx(ch, off + 1)) + c2 * wedge(KForm::dx(ch, off + 2), KForm::dx(ch, off + 3));
    return detail::finish_base("H2xH2", ch, off, omega, g);
}

// 4-dimensional base charts

inline ChartPtr base_chart(const std::string& manifold) {
    if (manifold == "CP2")
        return ChartBuilder("CP2")
            .coord("t", 0, 1, 0, 1)
            .coord("x1", 0, 4 * pi, 0, 4 * pi, 4 * pi)
            .coord("x2", 0, pi, 0, pi)
            .coord("x3", 0, 2 * pi, 0, 2 * pi, 2 * pi)
            .build();
    if (manifold == "S2xS2")
        return ChartBuilder("S2xS2")
            .coord("r1", 0, kInf, 0, 3)
            .coord("th1", 0, 2 * pi, 0, 2 * pi, 2 * pi)
            .coord("r2", 0, kInf, 0, 3)
            .coord("th2", 0, 2 * pi, 0, 2 * pi, 2 * pi)
            .build();
    if (manifold == "T4" || manifold == "R4")
        return ChartBuilder(manifold)
            .coord("x1", -kInf, kInf, 0, 2 * pi)
            .coord("x2", -kInf, kInf, 0, 2 * pi)
            .coord("x3", -kInf, kInf, 0, 2 * pi)
            .coord("x4", -kInf, kInf, 0, 2 * pi)
            .build();
    if (manifold == "H2xH2")
        return ChartBuilder("H2xH2")
            .coord("x1", -kInf, kInf, -1, 1)
            .coord("y1", 0, kInf, 0.2, 3)
            .coord("x2", -kInf, kInf, -1, 1)
            .coord("y2", 0, kInf, 0.2, 3)
            .build();
    throw std::invalid_argument("unsupported base manifold: " + manifold);
}

inline BaseData base4(const std::string& manifold) {
    auto ch = base_chart(manifold);
    if (manifold == "CP2") return cp2_base(ch, 0);
    if (manifold == "S2xS2") return s2xs2_base(ch, 0);
    if (manifold == "T4" || manifold == "R4") return t4_base(ch, 0);
    return h2xh2_base(ch, 0);
}

// ---------------------------------------------------------------------------

struct SU3Structure {
    BackgroundSpec spec;
    ChartPtr chart;
    MetricField g;
    KForm om;
    std::optional<KForm> om_plus, om_minus;  // absent for lambda != 0
    KForm vol;
    Scalar u;          // u-profile as a field on the chart
    Scalar H;          // moment map of the circle action
    KForm Theta;       // connection form with omega = Theta ^ dH + ...
    KForm fiber_form;  // theta (CP2), eta (S2xS2), Theta otherwise
    int radial = 0;    // chart index of r or H
    int fiber = 1;     // chart index of the circle coordinate
    double fiber_period = 2 * pi;
    std::optional<BaseData> base;

    explicit SU3Structure(ChartPtr ch) : chart(ch), g(ch) {}

    bool has_holomorphic_volume() const { return om_plus.has_value(); }

    Eigen::MatrixXd J(std::span<const double> x) const { return complex_structure(g.at(x), om.at(x)); }

    // Orientation making omega^3 positive.
    int orientation(std::span<const double> x) const {
        auto w = wedge(om.at(x), wedge(om.at(x), om.at(x)));
        return w.v[0] >= 0 ? 1 : -1;
    }

    std::vector<ChartPoint> sample(const GridSpec& grid) const { return sample_points(chart, grid); }
};

namespace detail {

inline CForm cf(const KForm& re, const KForm& im) { return {re, im}; }

inline double r_min(double C) { return C > 0 ? std::pow(C, 1.0 / 6.0) : 0.0; }

inline ChartPtr canonical_cp2_chart(double C) {
    double r0 = r_min(C);
    return ChartBuilder("canonical_CP2")
        .coord("r", r0, kInf, r0, r0 + 2)
        .coord("y", 0, 2 * pi / 3, 0, 2 * pi / 3, 2 * pi / 3)
        .coord("t", 0, 1, 0, 1)
        .coord("x1", 0, 4 * pi, 0, 4 * pi, 4 * pi)
        .coord("x2", 0, pi, 0, pi)
        .coord("x3", 0, 2 * pi, 0, 2 * pi, 2 * pi)
        .build();
}

inline ChartPtr canonical_s2xs2_chart(double C) {
    double r0 = r_min(C);
    return ChartBuilder("canonical_S2xS2")
        .coord("r", r0, kInf, r0, r0 + 2)
        .coord("y", 0, pi / 2, 0, pi / 2, pi / 2)
        .coord("r1", 0, kInf, 0, 3)
        .coord("th1", 0, 2 * pi, 0, 2 * pi, 2 * pi)
        .coord("r2", 0, kInf, 0, 3)
        .coord("th2", 0, 2 * pi, 0, 2 * pi, 2 * pi)
        .build();
}

inline ChartPtr h_chart(const BackgroundSpec& s, const std::string& base) {
    auto [lo, hi] = s.H_range();
    double slo = lo, shi = std::isfinite(hi) ? hi : (std::isfinite(lo) ? std::max(lo, 0.0) + 5 : 5);
    if (!std::isfinite(slo)) slo = shi - 10;
    ChartBuilder b(to_string(s.family));
    b.coord("H", lo, hi, slo, shi);
    if (base == "CP2") {
        b.coord("y", 0, 4 * pi, 0, 4 * pi, 4 * pi)
            .coord("t", 0, 1, 0, 1)
            .coord("x1", 0, 4 * pi, 0, 4 * pi, 4 * pi)
            .coord("x2", 0, pi, 0, pi)
            .coord("x3", 0, 2 * pi, 0, 2 * pi, 2 * pi);
    } else if (base == "H2xH2") {
        b.coord("psi", 0, 2 * pi, 0, 2 * pi, 2 * pi)
            .coord("x1", -kInf, kInf, -1, 1)
            .coord("y1", 0, kInf, 0.2, 3)
            .coord("x2", -kInf, kInf, -1, 1)
            .coord("y2", 0, kInf, 0.2, 3);
    } else {
        b.coord("y", -kInf, kInf, 0, 2 * pi)
            .coord("x1", -kInf, kInf, 0, 2 * pi)
            .coord("x2", -kInf, kInf, 0, 2 * pi)
            .coord("x3", -kInf, kInf, 0, 2 * pi)
            .coord("x4", -kInf, kInf, 0, 2 * pi);
    }
    return b.build();
}

}  // namespace detail

// u as a function of H from the Einstein ODE, or the product formula on T4.
inline Scalar u_of_H(const BackgroundSpec& s, const Scalar& H) {
    if (s.family == Family::T4_nilmanifold || s.family == Family::conti_salamon) {
        Scalar A = Scalar(s.a + s.p) * H + Scalar(s.b + s.q);
        Scalar B = Scalar(s.a - s.p) * H + Scalar(s.b - s.q);
        return sqrt(A * B);
    }
    double a = s.a, b = s.b, C = s.C_einstein, l = s.lambda, Cc = s.check_constant();
    Scalar H2 = H * H, H3 = H2 * H, H4 = H3 * H;
    Scalar P = Scalar(9 * a * a * l) * H4 + Scalar(12 * a * (2 * b * l + a * C)) * H3 +
               Scalar(18 * b * (b * l + 2 * a * C)) * H2 - Scalar(36 * b * b * C) * H - Scalar(Cc);
    return Scalar(6.0) * (Scalar(a) * H + Scalar(b)) / sqrt(P);
}

// u^2 without the square root, so the kappa ODE can be continued past the
// edge of the positivity window
inline Scalar u2_of_H(const BackgroundSpec& s, const Scalar& H) {
    if (s.family == Family::T4_nilmanifold || s.family == Family::conti_salamon)
        return (Scalar(s.a + s.p) * H + Scalar(s.b + s.q)) * (Scalar(s.a - s.p) * H + Scalar(s.b - s.q));
    double a = s.a, b = s.b, C = s.C_einstein, l = s.lambda, Cc = s.check_constant();
    Scalar H2 = H * H, H3 = H2 * H, H4 = H3 * H;
    Scalar P = Scalar(9 * a * a * l) * H4 + Scalar(12 * a * (2 * b * l + a * C)) * H3 +
               Scalar(18 * b * (b * l + 2 * a * C)) * H2 - Scalar(36 * b * b * C) * H - Scalar(Cc);
    Scalar w = Scalar(a) * H + Scalar(b);
    return Scalar(36.0) * w * w / P;
}

namespace detail {

inline void finish(SU3Structure& S) {
    S.vol = Scalar(1.0 / 6.0) * wedge(S.om, S.om, S.om);
}

inline SU3Structure build_canonical_cp2(const BackgroundSpec& spec) {
    double C = spec.cone;
    auto ch = canonical_cp2_chart(C);
    SU3Structure S(ch);
    S.spec = spec;
    S.radial = 0;
    S.fiber = 1;
    S.fiber_period = 2 * pi / 3;
    Scalar one = 1.0;
    Scalar r = Scalar::coord(0), y = Scalar::coord(1);
    auto f = cp2_frame(ch, 2);
    auto dr = KForm::dx(ch, 0), dy = KForm::dx(ch, 1);
    KForm theta = dy - f.t * f.s1;
    auto base = cp2_base(ch, 2);
    Scalar r2 = r * r, r4 = r2 * r2, r6 = r4 * r2;
    Scalar R6 = r6 - Scalar(C);
    Scalar R = sqrt(R6);

    S.om = r * wedge(dr, theta) + r2 * base.omega;
    S.g.add_square(r6 / R6, dr);
    S.g.add_square(R6 / r4, theta);
    for (std::size_t k = 0; k < S.g.m.size(); ++k) {
        int i = static_cast<int>(k) / 6, j = static_cast<int>(k) % 6;
        if (i >= 2 && j >= 2) S.g.m[k] += r2 * base.g[(i - 2) * 4 + (j - 2)];
    }
    Scalar sq = sqrt(one - f.t);
    CForm A1 = cf((r4 * r / R) * dr, R * theta);
    CForm A2 = cf((one / (Scalar(2.0) * sq)) * f.dt, -(f.t * sq) * f.s1);
    CForm A3 = cf(f.s2, f.s3);
    CForm psi = wedge(wedge(A1, A2), A3);
    Scalar c3 = cos(Scalar(3.0) * y), s3 = sin(Scalar(3.0) * y);
    S.om_plus = c3 * psi.re - s3 * psi.im;
    S.om_minus = s3 * psi.re + c3 * psi.im;
    S.H = Scalar(0.5) * r2;
    S.u = r2 / R;
    S.Theta = -theta;
    S.fiber_form = theta;
    S.base = base;
    finish(S);
    return S;
}

inline SU3Structure build_canonical_s2xs2(const BackgroundSpec& spec) {
    double C = spec.cone;
    auto ch = canonical_s2xs2_chart(C);
    SU3Structure S(ch);
    S.spec = spec;
    S.radial = 0;
    S.fiber = 1;
    S.fiber_period = pi / 2;
    Scalar one = 1.0;
    Scalar r = Scalar::coord(0), y = Scalar::coord(1);
    Scalar r1 = Scalar::coord(2), a1 = Scalar::coord(3), r2c = Scalar::coord(4), a2 = Scalar::coord(5);
    auto dr = KForm::dx(ch, 0), dy = KForm::dx(ch, 1);
    auto dr1 = KForm::dx(ch, 2), da1 = KForm::dx(ch, 3), dr2 = KForm::dx(ch, 4), da2 = KForm::dx(ch, 5);
    auto base = s2xs2_base(ch, 2);
    KForm eta = dy - (one / (Scalar(2.0) * (one + r1 * r1))) * da1 -
                Scalar(kSecondSphereOrientation) * (one / (Scalar(2.0) * (one + r2c * r2c))) * da2;
    Scalar rr = r * r, r4 = rr * rr, r6 = r4 * rr;
    Scalar R6 = r6 - Scalar(C);
    Scalar R = sqrt(R6);

    S.om = Scalar(4.0 / 3.0) * r * wedge(dr, eta) + Scalar(2.0 / 3.0) * rr * base.omega;
    S.g.add_square(r6 / R6, dr);
    S.g.add_square(Scalar(16.0 / 9.0) * R6 / r4, eta);
    for (std::size_t k = 0; k < S.g.m.size(); ++k) {
        int i = static_cast<int>(k) / 6, j = static_cast<int>(k) % 6;
        if (i >= 2 && j >= 2) S.g.m[k] += Scalar(2.0 / 3.0) * rr * base.g[(i - 2) * 4 + (j - 2)];
    }
    Scalar pre = Scalar(2.0 / 3.0) * rr / ((one + r1 * r1) * (one + r2c * r2c));
    CForm A1 = cf((pre * rr * r / R) * dr, (pre * Scalar(4.0 / 3.0) * R / rr) * eta);
    // dz1 = d(r1 e^{i a1}),  conj(dz2) = d(r2 e^{-i a2})
    CForm dz1 = cf(cos(a1) * dr1 - (r1 * sin(a1)) * da1, sin(a1) * dr1 + (r1 * cos(a1)) * da1);
    CForm dz2b = cf(cos(a2) * dr2 - (r2c * sin(a2)) * da2, -(sin(a2) * dr2 + (r2c * cos(a2)) * da2));
    CForm psi = wedge(wedge(A1, dz1), dz2b);
    Scalar phase = Scalar(4.0) * y - Scalar(2.0) * a1 + Scalar(2.0) * a2;
    Scalar sp = sin(phase), cp = cos(phase);
    S.om_plus = sp * psi.re + cp * psi.im;
    S.om_minus = -(cp * psi.re) + sp * psi.im;
    S.H = Scalar(2.0 / 3.0) * rr;
    S.u = Scalar(0.75) * rr / R;
    S.Theta = -eta;
    S.fiber_form = eta;
    S.base = base;
    finish(S);
    return S;
}

inline SU3Structure build_flat(const BackgroundSpec& spec) {
    auto ch = ChartBuilder("flat_C3")
                  .coord("x1", -kInf, kInf, -1, 1)
                  .coord("y1", -kInf, kInf, -1, 1)
                  .coord("x2", -kInf, kInf, -1, 1)
                  .coord("y2", -kInf, kInf, -1, 1)
                  .coord("x3", -kInf, kInf, -1, 1)
                  .coord("y3", -kInf, kInf, -1, 1)
                  .build();
    SU3Structure S(ch);
    S.spec = spec;
    KForm om(ch, 2);
    CForm Om;
    Scalar H = 0.0;
    std::vector<Scalar> th(6, Scalar(0.0));
    for (int k = 0; k < 3; ++k) {
        auto dx = KForm::dx(ch, 2 * k), dy = KForm::dx(ch, 2 * k + 1);
        om += wedge(dx, dy);
        S.g.add_square(1.0, dx);
        S.g.add_square(1.0, dy);
        CForm dz = cf(dx, dy);
        Om = (k == 0) ? dz : wedge(Om, dz);
        Scalar x = Scalar::coord(2 * k), y = Scalar::coord(2 * k + 1);
        H += Scalar(0.5) * (x * x + y * y);
        th[2 * k] = y;
        th[2 * k + 1] = -x;
    }
    S.om = om;
    S.om_plus = Om.re;
    S.om_minus = Om.im;
    S.H = H;
    S.u = Scalar(1.0) / sqrt(Scalar(2.0) * H);
    // X = sum y d_x - x d_y satisfies X _| omega = dH; Theta = X^flat / |X|^2
    S.Theta = (Scalar(1.0) / (Scalar(2.0) * H)) * KForm::one_form(ch, th);
    S.fiber_form = S.Theta;
    S.radial = -1;
    S.fiber = -1;
    finish(S);
    return S;
}

// Families written in the H chart (H, fiber, base coordinates)
inline SU3Structure build_h_family(const BackgroundSpec& spec) {
    std::string base_name = "T4";
    if (spec.family == Family::CP3_type) base_name = "CP2";
    if (spec.family == Family::negative_KE_dual) base_name = "H2xH2";
    auto ch = h_chart(spec, base_name);
    SU3Structure S(ch);
    S.spec = spec;
    S.radial = 0;
    S.fiber = 1;
    Scalar H = Scalar::coord(0);
    auto dH = KForm::dx(ch, 0), dy = KForm::dx(ch, 1);
    Scalar u = u_of_H(spec, H);
    Scalar u2 = u * u;
    BaseData base;
    KForm Theta;
    KForm om1t;                    // omega1~
    std::vector<Scalar> g1t(16);   // g1~ block
    double a = spec.a, b = spec.b, p = spec.p, q = spec.q;
    if (base_name == "CP2") {
        base = cp2_base(ch, 2);
        auto f = cp2_frame(ch, 2);
        Theta = Scalar(-0.5) * (dy - f.t * f.s1);  // dTheta = -omega_CP2
        S.fiber_period = 4 * pi;
    } else if (base_name == "H2xH2") {
        base = h2xh2_base(ch, 2);
        Scalar y1 = Scalar::coord(3), y2 = Scalar::coord(5);
        Theta = dy - (Scalar(1.0) / (Scalar(6.0) * y1)) * KForm::dx(ch, 2) - (Scalar(1.0) / (Scalar(6.0) * y2)) * KForm::dx(ch, 4);
    } else {
        base = t4_base(ch, 2);
        Scalar x1 = Scalar::coord(2), x3 = Scalar::coord(4);
        Theta = dy - (Scalar(a + p) * x1) * KForm::dx(ch, 3) - (Scalar(a - p) * x3) * KForm::dx(ch, 5);
    }
    if (base_name == "T4") {
        Scalar A = Scalar(a + p) * H + Scalar(b + q), B = Scalar(a - p) * H + Scalar(b - q);
        om1t = A * wedge(KForm::dx(ch, 2), KForm::dx(ch, 3)) + B * wedge(KForm::dx(ch, 4), KForm::dx(ch, 5));
        for (int i = 0; i < 4; ++i) g1t[i * 4 + i] = i < 2 ? A : B;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                if (i != j) g1t[i * 4 + j] = 0.0;
    } else {
        Scalar w = Scalar(a) * H + Scalar(b);
        om1t = w * base.omega;
        for (int k = 0; k < 16; ++k) g1t[k] = w * base.g[k];
    }
    S.om = wedge(Theta, dH) + om1t;
    S.g.add_square(u2, dH);
    S.g.add_square(Scalar(1.0) / u2, Theta);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) S.g.m[(i + 2) * 6 + (j + 2)] += g1t[i * 4 + j];
    if (spec.lambda == 0 && base_name == "T4") {
        CForm lead = cf(Theta, u2 * dH);
        CForm dz1 = cf(KForm::dx(ch, 2), KForm::dx(ch, 3));
        CForm dz3 = cf(KForm::dx(ch, 4), KForm::dx(ch, 5));
        CForm Om = wedge(wedge(lead, dz1), dz3);
        S.om_plus = Om.re;
        S.om_minus = Om.im;
    }
    S.H = H;
    S.u = u;
    S.Theta = Theta;
    S.fiber_form = Theta;
    S.base = base;
    finish(S);
    return S;
}

}  // namespace detail

inline SU3Structure build_structure(const BackgroundSpec& spec) {
    spec.validate();
    switch (spec.family) {
        case Family::flat_C3: return detail::build_flat(spec);
        case Family::canonical_CP2: return detail::build_canonical_cp2(spec);
        case Family::canonical_S2xS2: return detail::build_canonical_s2xs2(spec);
        default: return detail::build_h_family(spec);
    }
}

// The y-independent forms psi+- before the fiber rotation (negative control).
inline std::pair<KForm, KForm> unrotated_psi(const SU3Structure& S) {
    if (S.spec.family != Family::canonical_CP2 || !S.om_plus)
        throw std::invalid_argument("unrotated_psi: canonical_CP2 only");
    // psi+ = cos3y Om+ + sin3y Om-, psi- = -sin3y Om+ + cos3y Om-
    Scalar y = Scalar::coord(S.fiber);
    Scalar c3 = cos(Scalar(3.0) * y), s3 = sin(Scalar(3.0) * y);
    return {c3 * *S.om_plus + s3 * *S.om_minus, c3 * *S.om_minus - s3 * *S.om_plus};
}

// ---------------------------------------------------------------------------
// verification

struct StructureCheckOptions {
    bool finite_differences = false;  // route d through central differences
    double fd_step = 1e-5;
    double tolerance = 1e-8;
};

inline Report verify_su3_structure(const SU3Structure& S, const GridSpec& grid, const StructureCheckOptions& opt = {}) {
    Report rep("verify_su3_structure/" + to_string(S.spec.family), opt.tolerance, grid);
    auto prep = [&](const KForm& f) { return opt.finite_differences ? f.to_opaque(opt.fd_step) : f; };
    std::vector<KForm> fs = {S.om, d(prep(S.om))};
    bool hol = S.has_holomorphic_volume();
    if (hol) {
        fs.push_back(*S.om_plus);
        fs.push_back(*S.om_minus);
        fs.push_back(d(prep(*S.om_plus)));
        fs.push_back(d(prep(*S.om_minus)));
    } else {
        rep.flag("no_holomorphic_volume_form");
    }
    FormTape tape(fs);
    Eigen::MatrixXd I6 = Eigen::MatrixXd::Identity(6, 6);
    for (auto& p : S.sample(grid)) {
        auto v = tape.eval(p.x);
        const auto& om = v[0];
        Eigen::MatrixXd g = S.g.at(p.x);
        rep.add("d_omega", v[1].max_abs());
        Eigen::MatrixXd J = complex_structure(g, om);
        rep.add("J2_plus_I", (J * J + I6).cwiseAbs().maxCoeff());
        rep.add("metric_compatibility", (J.transpose() * g * J - g).cwiseAbs().maxCoeff());
        Eigen::LLT<Eigen::MatrixXd> llt(g);
        rep.add("metric_positive", llt.info() == Eigen::Success ? 0.0 : 1.0);
        if (!hol) continue;
        const auto &op = v[2], &omm = v[3];
        rep.add("d_omega_plus", v[4].max_abs());
        rep.add("d_omega_minus", v[5].max_abs());
        rep.add("omega_wedge_omega_plus", wedge(om, op).max_abs());
        rep.add("omega_wedge_omega_minus", wedge(om, omm).max_abs());
        auto om3 = wedge(om, wedge(om, om));
        rep.add("normalization", ((2.0 / 3.0) * om3 - wedge(op, omm)).max_abs());
        Eigen::MatrixXd ginv = g.inverse();
        rep.add("norm_omega_plus", norm2(op, ginv) - 4.0);
        int o = om3.v[0] >= 0 ? 1 : -1;
        rep.add("hodge_omega_plus", (hodge(op, g, o) - omm).max_abs());
    }
    return rep;
}

// Einstein condition along H with u from the general u-formula.
struct EinsteinProfile {
    std::vector<double> H, residual;
    double sup = 0;
};

inline EinsteinProfile einstein_residuals(const BackgroundSpec& spec, double H_lo, double H_hi, int n = 100,
                                          double lambda_shift = 0) {
    if (spec.p != 0 || spec.q != 0) throw std::invalid_argument("einstein_residuals: needs p = q = 0");
    if (n < 2 || !(H_lo < H_hi)) throw std::invalid_argument("einstein_residuals: bad grid");
    Scalar H = Scalar::coord(0);
    auto s = spec;
    if (s.family == Family::T4_nilmanifold || s.family == Family::conti_salamon) s.family = Family::hyperkahler_base;
    Scalar u = u_of_H(s, H);
    Scalar u2 = u * u;
    Scalar w = Scalar(spec.a) * H + Scalar(spec.b);
    Scalar rho = Scalar(1.0) / (w * w);  // rho_1 = 1 for a homogeneous base
    Scalar lhs = (u2 * rho).d(0) / (u2 * u2 * rho);
    Scalar res = lhs + Scalar(spec.C_einstein) + Scalar(spec.lambda + lambda_shift) * H;
    Tape t({res, u2});
    EinsteinProfile out;
    for (int i = 0; i < n; ++i) {
        double h = H_lo + (H_hi - H_lo) * i / (n - 1);
        double x[1] = {h};
        auto v = t.eval(x);
        if (!(v[1] > 0) || !std::isfinite(v[1]))
            throw DomainError("einstein_residuals: u^2 not positive at H=" + std::to_string(h));
        out.H.push_back(h);
        out.residual.push_back(v[0]);
        out.sup = std::max(out.sup, std::abs(v[0]));
    }
    return out;
}

// Default H-grid: the structure's sampling range in H.
inline EinsteinProfile einstein_residuals(const BackgroundSpec& spec, int n = 100) {
    if (is_canonical(spec.family)) {
        double r0 = detail::r_min(spec.cone);
        double s = spec.family == Family::canonical_CP2 ? 0.5 : 2.0 / 3.0;
        double lo = std::max(1.1 * r0, 0.1), hi = 10;
        return einstein_residuals(spec, s * lo * lo, s * hi * hi, n);
    }
    auto [lo, hi] = spec.H_range();
    double w = (std::isfinite(hi) ? hi : lo + 5) - lo;
    double l = lo + 0.05 * w, h = (std::isfinite(hi) ? hi : lo + 5) - 0.05 * w;
    return einstein_residuals(spec, l, h, n);
}

// Ricci tensor by central differences of the metric (Christoffel symbols
// from first differences, their derivatives by a second nested difference).
inline Eigen::MatrixXd ricci4_numeric(const MetricField& g4, std::span<const double> x0, double h = 1e-4) {
    const ChartPtr& ch = g4.chart;
    int n = g4.dim();
    Tape tape(g4.m);
    std::vector<double> hs(n);
    for (int i = 0; i < n; ++i) {
        hs[i] = h * std::max(1.0, std::abs(x0[i]));
        if (ch->period[i] <= 0 && (x0[i] - 3 * hs[i] <= ch->lo[i] || x0[i] + 3 * hs[i] >= ch->hi[i]))
            throw DomainError("ricci4_numeric: stencil leaves the chart in coordinate " + ch->coords[i]);
    }
    auto metric = [&](const std::vector<double>& x) {
        auto v = tape.eval(x);
        Eigen::MatrixXd m(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) m(i, j) = v[i * n + j];
        return m;
    };
    // Gamma^i_{jk} at x, stored as G[i](j,k)
    auto christoffel = [&](const std::vector<double>& x) {
        std::vector<Eigen::MatrixXd> dg(n);
        for (int l = 0; l < n; ++l) {
            auto xp = x, xm = x;
            xp[l] += hs[l];
            xm[l] -= hs[l];
            dg[l] = (metric(xp) - metric(xm)) / (2 * hs[l]);
        }
        Eigen::MatrixXd ginv = metric(x).inverse();
        std::vector<Eigen::MatrixXd> G(n, Eigen::MatrixXd::Zero(n, n));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) {
                    double s = 0;
                    for (int l = 0; l < n; ++l) s += ginv(i, l) * (dg[j](l, k) + dg[k](l, j) - dg[l](j, k));
                    G[i](j, k) = 0.5 * s;
                }
        return G;
    };
    std::vector<double> x(x0.begin(), x0.end());
    auto G = christoffel(x);
    // dG[l][i](j,k) = d_l Gamma^i_{jk}
    std::vector<std::vector<Eigen::MatrixXd>> dG(n);
    for (int l = 0; l < n; ++l) {
        auto xp = x, xm = x;
        xp[l] += hs[l];
        xm[l] -= hs[l];
        auto Gp = christoffel(xp), Gm = christoffel(xm);
        dG[l].resize(n);
        for (int i = 0; i < n; ++i) dG[l][i] = (Gp[i] - Gm[i]) / (2 * hs[l]);
    }
    Eigen::MatrixXd Ric = Eigen::MatrixXd::Zero(n, n);
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
            double s = 0;
            for (int i = 0; i < n; ++i) {
                s += dG[i][i](j, k) - dG[k][i](i, j);
                for (int p = 0; p < n; ++p) s += G[i](i, p) * G[p](j, k) - G[i](k, p) * G[p](i, j);
            }
            Ric(j, k) = s;
        }
    return Ric;
}

// Einstein constants of the base metrics returned by base4
inline double base_einstein_constant(const std::string& name) {
    if (name == "CP2") return 6;
    if (name == "S2xS2") return 4;
    if (name == "T4" || name == "R4") return 0;
    if (name == "H2xH2") return -6;
    throw std::invalid_argument("base_einstein_constant: unknown base " + name);
}

// sup over the grid of max |Ric - lambda g| by finite differences
inline Report ricci_check(const std::string& name, const GridSpec& grid, double tolerance = 1e-3) {
    Report rep("ricci_check/" + name, tolerance, grid);
    auto b = base4(name);
    auto g = b.metric4();
    double lam = base_einstein_constant(name);
    for (auto& p : sample_points(g.chart, grid)) {
        Eigen::MatrixXd R = ricci4_numeric(g, p.x);
        rep.add("ricci_minus_lambda_g", (R - lam * g.at(p.x)).cwiseAbs().maxCoeff());
    }
    rep.values["lambda"] = lam;
    return rep;
}

// ---------------------------------------------------------------------------
// non-constant deformations on the flat torus: G = v(H) F(x1,x2) + H^4/12

struct DeformationData {
    double mu = 1;
    std::function<Scalar(const Scalar& x1, const Scalar& x2)> F;
    std::function<Scalar(const Scalar& H)> v;

    static DeformationData airy_sine() {
        return {1.0, [](const Scalar& x1, const Scalar&) { return sin(x1); },
                [](const Scalar& H) { return airy_ai(H); }};
    }
    static DeformationData airy_exp() {
        return {-1.0, [](const Scalar& x1, const Scalar&) { return exp(x1); },
                [](const Scalar& H) { return airy_ai(-H); }};
    }
};

inline Report verify_nonconstant_deformation(const DeformationData& dd, const GridSpec& grid, double tolerance = 1e-6,
                                             double H_lo = -2, double H_hi = 3) {
    Report rep("verify_nonconstant_deformation", tolerance, grid);
    auto spec = BackgroundSpec::t4_nilmanifold(1, 0, 0, 0);
    spec.H_lo = H_lo;
    spec.H_hi = H_hi;
    // the torus chart in (H, y, x1..x4); positivity is not needed here
    auto ch = detail::h_chart(spec, "T4");
    auto base = t4_base(ch, 2);
    Scalar H = Scalar::coord(0), x1 = Scalar::coord(2), x2 = Scalar::coord(3);
    Scalar F = dd.F(x1, x2), v = dd.v(H);
    Scalar G = v * F + Scalar(1.0 / 12.0) * H * H * H * H;
    Scalar lapF = base.laplacian(F);
    Scalar lapG = base.laplacian(G);
    auto ddcG = d(base.dc(G));
    Scalar quad = base.ratio_to_omega2(wedge(ddcG, ddcG));
    Scalar eig = lapF - Scalar(dd.mu) * F;
    Scalar ode = v.d(0).d(0) - Scalar(dd.mu) * H * v;
    Scalar pde = G.d(0).d(0) - H * H - H * lapG - quad;
    Tape t({eig, ode, pde, quad, F, v});
    Tape tv({v});
    for (auto& p : sample_points(ch, grid)) {
        auto r = t.eval(p.x);
        // independent check of v'' = mu H v from values of v alone (5-point stencil)
        const double h = 1e-3;
        auto vat = [&](double H0) {
            auto x = p.x;
            x[0] = H0;
            return tv.eval(x)[0];
        };
        double H0 = p.x[0];
        double v2 = (-vat(H0 + 2 * h) + 16 * vat(H0 + h) - 30 * vat(H0) + 16 * vat(H0 - h) - vat(H0 - 2 * h)) / (12 * h * h);
        double sF = std::max(1.0, std::abs(r[4])), sv = std::max(1.0, std::abs(r[5]));
        rep.add("laplace_eigen", r[0] / sF);
        rep.add("airy_ode", r[1] / sv);
        rep.add("airy_ode_fd", (v2 - dd.mu * H0 * r[5]) / sv);
        rep.add("G_pde", r[2] / std::max(1.0, std::abs(p.x[0] * p.x[0])));
        rep.add("quadratic_term", r[3]);
    }
    rep.values["mu"] = dd.mu;
    return rep;
}

}  // namespace khym
