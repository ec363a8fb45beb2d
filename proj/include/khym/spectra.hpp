#pragma once

// Laplacian spectra of the base 4-manifolds, explicit eigenfunctions and a
// finite-difference Laplace-Beltrami residual.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "chart.hpp"
#include "expr.hpp"
#include "forms.hpp"
#include "report.hpp"

namespace khym {

struct EigenvalueEntry {
    std::string manifold;
    long long k = 0;
    double mu = 0;
    long long multiplicity = 0;
};

namespace detail {

// number of representations of n as an ordered sum of four squares (Jacobi)
inline long long r4(long long n) {
    if (n == 0) return 1;
    long long s = 0;
    for (long long d = 1; d * d <= n; ++d) {
        if (n % d) continue;
        long long e = n / d;
        if (d % 4) s += d;
        if (e != d && e % 4) s += e;
    }
    return 8 * s;
}

}  // namespace detail

// CP2 with Fubini-Study (Ric = 6g); S2xS2 with (2/3) of the product of unit
// curvature-4 spheres; T4 = R^4 / (2 pi Z)^4 where k indexes mu = k = |n|^2.
inline EigenvalueEntry spectrum(const std::string& manifold, long long k) {
    if (k < 0) throw std::invalid_argument("spectrum: k must be >= 0");
    EigenvalueEntry e{manifold, k, 0, 0};
    if (manifold == "CP2") {
        e.mu = 4.0 * k * (k + 2);
        e.multiplicity = k == 0 ? 1 : 4 * (k + 1) * (k + 1) * (k + 1);
    } else if (manifold == "S2xS2") {
        e.mu = 6.0 * k * (k + 1);
        e.multiplicity = 2 * (2 * k + 1);
    } else if (manifold == "T4") {
        e.mu = static_cast<double>(k);
        e.multiplicity = detail::r4(k);
    } else {
        throw std::invalid_argument("spectrum: unsupported manifold " + manifold);
    }
    return e;
}

// The three explicit mu = 12 eigenfunctions on CP2 in the (t, x1, x2, x3) chart.
inline std::vector<Scalar> cp2_eigenfunctions_mu12(int off = 0) {
    Scalar t = Scalar::coord(off), x1 = Scalar::coord(off + 1), x2 = Scalar::coord(off + 2), x3 = Scalar::coord(off + 3);
    return {t * (cos(x3) * cos(x1) - sin(x3) * sin(x1) * cos(x2)),
            t * (sin(x3) * cos(x1) + cos(x3) * sin(x1) * cos(x2)),
            -(t * sin(x1) * sin(x2))};
}

// Laplace-Beltrami (positive sign convention) by fourth-order central
// differences of the divergence form -(1/sqrt g) d_i (sqrt g g^ij d_j f).
class FDLaplacian {
public:
    FDLaplacian(const MetricField& g, const Scalar& f, double h = 1e-3)
        : chart_(g.chart), n_(g.dim()), h_(h), gt_(g.m), ft_({f}) {}

    double operator()(std::span<const double> x0) const {
        std::vector<double> x(x0.begin(), x0.end());
        std::vector<double> hs = steps(x);
        double div = 0;
        for (int i = 0; i < n_; ++i)
            div += d5([&](const std::vector<double>& y) { return flux(y, i, hs); }, x, i, hs[i]);
        return -div / std::sqrt(std::abs(metric(x).determinant()));
    }

    double value(std::span<const double> x) const { return ft_.eval(x)[0]; }

private:
    std::vector<double> steps(const std::vector<double>& x) const {
        std::vector<double> hs(n_);
        for (int i = 0; i < n_; ++i) {
            hs[i] = h_ * std::max(1.0, std::abs(x[i]));
            if (chart_->period[i] <= 0 && (x[i] - 4 * hs[i] <= chart_->lo[i] || x[i] + 4 * hs[i] >= chart_->hi[i]))
                throw DomainError("laplacian: stencil leaves the chart in coordinate " + chart_->coords[i]);
        }
        return hs;
    }
    // fourth-order central difference in coordinate i
    template <class Fn>
    static double d5(const Fn& f, const std::vector<double>& x, int i, double h) {
        auto at = [&](double s) {
            auto y = x;
            y[i] += s * h;
            return f(y);
        };
        return (at(-2) - 8 * at(-1) + 8 * at(1) - at(2)) / (12 * h);
    }
    Eigen::MatrixXd metric(const std::vector<double>& x) const {
        auto v = gt_.eval(x);
        Eigen::MatrixXd m(n_, n_);
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j) m(i, j) = v[i * n_ + j];
        return m;
    }
    // sqrt(g) g^{ij} d_j f
    double flux(const std::vector<double>& x, int i, const std::vector<double>& hs) const {
        Eigen::MatrixXd g = metric(x);
        Eigen::MatrixXd gi = g.inverse();
        double s = 0;
        for (int j = 0; j < n_; ++j) {
            if (gi(i, j) == 0) continue;
            s += gi(i, j) * d5([&](const std::vector<double>& y) { return ft_.eval(y)[0]; }, x, j, hs[j]);
        }
        return std::sqrt(std::abs(g.determinant())) * s;
    }

    ChartPtr chart_;
    int n_;
    double h_;
    Tape gt_, ft_;
};

// sup over the grid of |Delta F - mu F| / max(1, |F|)
inline double laplacian_residual(const Scalar& F, double mu, const MetricField& g4, const GridSpec& grid = {},
                                 double h = 1e-3) {
    FDLaplacian lap(g4, F, h);
    double sup = 0;
    for (auto& p : sample_points(g4.chart, grid)) {
        double f = lap.value(p.x);
        sup = std::max(sup, std::abs(lap(p.x) - mu * f) / std::max(1.0, std::abs(f)));
    }
    return sup;
}

namespace detail {

// floor(sqrt(n)) exactly
inline std::uint64_t isqrt(std::uint64_t n) {
    auto r = static_cast<std::uint64_t>(std::sqrt(static_cast<long double>(n)));
    while (r * r > n) --r;
    while ((r + 1) * (r + 1) <= n) ++r;
    return r;
}

}  // namespace detail

// Whether the hypergeometric kappa for this k has a terminating branch.
inline bool polynomial_kappa(const std::string& manifold, long long k) {
    if (k < 0) return false;
    if (manifold == "CP2") return k % 3 != 2;
    if (manifold == "S2xS2") {
        if (k == 0) return true;  // mu = 0: c1 r^-4 + c2
        auto n = static_cast<std::uint64_t>(k);
        std::uint64_t v = 6 * n * n + 6 * n + 4;
        std::uint64_t s = detail::isqrt(v);
        if (s * s != v) return false;
        // (4 - s)/6 or (8 - s)/6 a non-positive integer
        return (s >= 4 && (s - 4) % 6 == 0) || (s >= 8 && (s - 8) % 6 == 0);
    }
    return false;
}

inline std::vector<long long> enumerate_polynomial_k(const std::string& manifold, long long k_max, long long k_min = 0) {
    if (manifold != "CP2" && manifold != "S2xS2")
        throw std::invalid_argument("enumerate_polynomial_k: unsupported manifold " + manifold);
    if (k_max > 1000000000LL) throw std::invalid_argument("enumerate_polynomial_k: k_max too large");
    std::vector<long long> out;
    for (long long k = std::max(0LL, k_min); k <= k_max; ++k)
        if (polynomial_kappa(manifold, k)) out.push_back(k);
    return out;
}

inline std::string spectrum_csv(const std::vector<EigenvalueEntry>& rows) {
    std::ostringstream os;
    os << "manifold,k,mu,multiplicity,polynomial_kappa\n";
    for (auto& e : rows)
        os << e.manifold << ',' << e.k << ',' << csv_double(e.mu) << ',' << e.multiplicity << ','
           << (polynomial_kappa(e.manifold, e.k) ? "true" : "false") << '\n';
    return os.str();
}

}  // namespace khym
