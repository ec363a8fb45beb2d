#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

namespace khym {

struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace specfun {

// --- Gauss hypergeometric 2F1 -------------------------------------------

struct Hyp2F1Params {
    double a = 0, b = 0, c = 1;
    std::optional<int> polynomial_degree;
};

inline std::optional<int> nonpositive_integer(double v) {
    double r = std::round(v);
    if (r <= 0 && std::abs(v - r) < 1e-12) return static_cast<int>(-r);
    return std::nullopt;
}

inline Hyp2F1Params make_hyp2f1(double a, double b, double c) {
    Hyp2F1Params p{a, b, c, std::nullopt};
    auto na = nonpositive_integer(a), nb = nonpositive_integer(b);
    if (na && nb)
        p.polynomial_degree = std::min(*na, *nb);
    else if (na)
        p.polynomial_degree = na;
    else if (nb)
        p.polynomial_degree = nb;
    if (auto nc = nonpositive_integer(c)) {
        if (!p.polynomial_degree || *p.polynomial_degree > *nc)
            throw DomainError("hyp2f1: c is a non-positive integer and the series does not terminate first");
    }
    return p;
}

struct Hyp2F1Result {
    double value = 0;
    int terms = 0;
    bool truncated = false;  // hit the term cap before the stopping rule
};

inline Hyp2F1Result hyp2f1_eval(const Hyp2F1Params& p, double z, int max_terms = 1000000) {
    Hyp2F1Result res;
    if (p.polynomial_degree) {
        int n = *p.polynomial_degree;
        double term = 1, sum = 1;
        for (int k = 0; k < n; ++k) {
            term *= (p.a + k) * (p.b + k) / ((p.c + k) * (k + 1.0)) * z;
            sum += term;
        }
        res.value = sum;
        res.terms = n + 1;
        return res;
    }
    if (std::abs(z) >= 1.0)
        throw DomainError("hyp2f1: non-terminating series needs |z| < 1 (got z=" + std::to_string(z) + ")");
    double term = 1, sum = 1;
    int k = 0;
    for (; k < max_terms; ++k) {
        term *= (p.a + k) * (p.b + k) / ((p.c + k) * (k + 1.0)) * z;
        sum += term;
        if (std::abs(term) < 1e-16 * std::abs(sum)) break;
    }
    res.value = sum;
    res.terms = k + 2;
    res.truncated = (k == max_terms);
    return res;
}

inline double hyp2f1(double a, double b, double c, double z) {
    return hyp2f1_eval(make_hyp2f1(a, b, c), z).value;
}

// --- Bessel functions of real order --------------------------------------
// Non-negative orders go to the standard library's special math functions;
// negative orders use the reflection formulas.

enum class BesselKind { J, Y, I, K };

inline void check_bessel_arg(double x) {
    if (!(x > 0)) throw DomainError("bessel: argument must be positive");
}

inline double bessel_j(double nu, double x) {
    check_bessel_arg(x);
    if (nu >= 0) return std::cyl_bessel_j(nu, x);
    double m = -nu;
    if (std::abs(m - std::round(m)) < 1e-14) {
        double v = std::cyl_bessel_j(m, x);
        return (static_cast<long>(std::round(m)) % 2) ? -v : v;
    }
    return std::cos(m * std::numbers::pi) * std::cyl_bessel_j(m, x) -
           std::sin(m * std::numbers::pi) * std::cyl_neumann(m, x);
}

inline double bessel_y(double nu, double x) {
    check_bessel_arg(x);
    if (nu >= 0) return std::cyl_neumann(nu, x);
    double m = -nu;
    if (std::abs(m - std::round(m)) < 1e-14) {
        double v = std::cyl_neumann(m, x);
        return (static_cast<long>(std::round(m)) % 2) ? -v : v;
    }
    return std::sin(m * std::numbers::pi) * std::cyl_bessel_j(m, x) +
           std::cos(m * std::numbers::pi) * std::cyl_neumann(m, x);
}

inline double bessel_i(double nu, double x) {
    check_bessel_arg(x);
    if (nu >= 0) return std::cyl_bessel_i(nu, x);
    double m = -nu;
    return std::cyl_bessel_i(m, x) + 2.0 / std::numbers::pi * std::sin(m * std::numbers::pi) * std::cyl_bessel_k(m, x);
}

inline double bessel_k(double nu, double x) {
    check_bessel_arg(x);
    return std::cyl_bessel_k(std::abs(nu), x);
}

inline double bessel(BesselKind kind, double nu, double x) {
    switch (kind) {
        case BesselKind::J: return bessel_j(nu, x);
        case BesselKind::Y: return bessel_y(nu, x);
        case BesselKind::I: return bessel_i(nu, x);
        case BesselKind::K: return bessel_k(nu, x);
    }
    return 0;
}

// d/dx of the Bessel function via the three-term recurrences
inline double bessel_prime(BesselKind kind, double nu, double x) {
    switch (kind) {
        case BesselKind::J: return 0.5 * (bessel_j(nu - 1, x) - bessel_j(nu + 1, x));
        case BesselKind::Y: return 0.5 * (bessel_y(nu - 1, x) - bessel_y(nu + 1, x));
        case BesselKind::I: return 0.5 * (bessel_i(nu - 1, x) + bessel_i(nu + 1, x));
        case BesselKind::K: return -0.5 * (bessel_k(nu - 1, x) + bessel_k(nu + 1, x));
    }
    return 0;
}

// --- Airy ----------------------------------------------------------------

namespace detail {
constexpr double ai0 = 0.355028053887817239260;   // Ai(0)
constexpr double aip0 = -0.258819403792806798405; // Ai'(0)

// Maclaurin series, fine for |x| <= 1.5
inline void airy_series(double x, double& ai, double& aip) {
    double f = 1, g = x, fp = 0, gp = 1;
    double tf = 1, tg = x;
    double x3 = x * x * x;
    for (int k = 1; k < 60; ++k) {
        tf *= x3 / ((3.0 * k - 1) * (3.0 * k));
        tg *= x3 / ((3.0 * k) * (3.0 * k + 1));
        f += tf;
        g += tg;
        fp += tf * 3 * k / x;
        gp += tg * (3 * k + 1) / x;
        if (std::abs(tf) + std::abs(tg) < 1e-18 * (std::abs(f) + std::abs(g))) break;
    }
    ai = ai0 * f + aip0 * g;
    aip = ai0 * fp + aip0 * gp;
}
}  // namespace detail

inline void airy(double x, double& ai, double& aip) {
    using std::numbers::pi;
    if (std::abs(x) <= 1.5) {
        if (x == 0) {
            ai = detail::ai0;
            aip = detail::aip0;
            return;
        }
        detail::airy_series(x, ai, aip);
        return;
    }
    double ax = std::abs(x);
    double zeta = 2.0 / 3.0 * ax * std::sqrt(ax);
    if (x > 0) {
        ai = std::sqrt(x / 3.0) / pi * std::cyl_bessel_k(1.0 / 3.0, zeta);
        aip = -x / (pi * std::sqrt(3.0)) * std::cyl_bessel_k(2.0 / 3.0, zeta);
    } else {
        double s = std::sqrt(ax);
        ai = 0.5 * s * (std::cyl_bessel_j(1.0 / 3.0, zeta) - std::cyl_neumann(1.0 / 3.0, zeta) / std::sqrt(3.0));
        aip = 0.5 * ax * (std::cyl_bessel_j(2.0 / 3.0, zeta) + std::cyl_neumann(2.0 / 3.0, zeta) / std::sqrt(3.0));
    }
}

inline double airy_ai(double x) {
    double a, b;
    airy(x, a, b);
    return a;
}

inline double airy_ai_prime(double x) {
    double a, b;
    airy(x, a, b);
    return b;
}

}  // namespace specfun
}  // namespace khym
