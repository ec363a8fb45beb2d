#pragma once

// Special Lagrangian leaves of the canonical bundles: generating
// distributions, involutivity, calibration and induced metrics.

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "instantons.hpp"

namespace khym {

// CP2 leaves: parameter "y". S2xS2 leaves: "family" 1 (th1 = th2, y = pi/8) or
// 2 (th1 = th2 + pi/2, y = 0), or explicit "dtheta" (= th1 - th2) and "y".
struct SLagLeafSpec {
    Family background = Family::canonical_CP2;
    std::map<std::string, double> parameters;

    static SLagLeafSpec cp2(double y) { return {Family::canonical_CP2, {{"y", y}}}; }
    static SLagLeafSpec s2xs2_family(int f) {
        if (f != 1 && f != 2) throw std::invalid_argument("SLagLeafSpec: S2xS2 family must be 1 or 2");
        return {Family::canonical_S2xS2, {{"family", f}}};
    }
    static SLagLeafSpec s2xs2(double dtheta, double y) { return {Family::canonical_S2xS2, {{"dtheta", dtheta}, {"y", y}}}; }

    double y() const {
        if (background == Family::canonical_S2xS2 && parameters.count("family"))
            return parameters.at("family") == 1 ? std::numbers::pi / 8 : 0.0;
        auto it = parameters.find("y");
        if (it == parameters.end()) throw std::invalid_argument("SLagLeafSpec: missing y");
        return it->second;
    }
    double dtheta() const {
        if (parameters.count("family")) return parameters.at("family") == 1 ? 0.0 : std::numbers::pi / 2;
        auto it = parameters.find("dtheta");
        if (it == parameters.end()) throw std::invalid_argument("SLagLeafSpec: missing dtheta");
        return it->second;
    }
    void validate() const {
        if (background != Family::canonical_CP2 && background != Family::canonical_S2xS2)
            throw std::invalid_argument("SLagLeafSpec: canonical_CP2 or canonical_S2xS2 only");
        double yy = y();
        if (!std::isfinite(yy)) throw std::invalid_argument("SLagLeafSpec: y must be finite");
        if (background == Family::canonical_S2xS2) {
            if (parameters.count("family")) {
                double f = parameters.at("family");
                if (f != 1 && f != 2) throw std::invalid_argument("SLagLeafSpec: S2xS2 family must be 1 or 2");
            } else if (!std::isfinite(dtheta())) {
                throw std::invalid_argument("SLagLeafSpec: dtheta must be finite");
            }
        }
    }
};

struct Distribution {
    std::string name;
    ChartPtr chart;
    std::vector<VectorField> generators;
};

inline Distribution build_distribution(const SLagLeafSpec& leaf, const ChartPtr& chart) {
    leaf.validate();
    Distribution D;
    D.chart = chart;
    if (leaf.background == Family::canonical_CP2) {
        if (chart->coords.size() != 6 || chart->coords[2] != "t") throw std::invalid_argument("build_distribution: needs the canonical_CP2 chart");
        auto sd = sigma_dual_fields(chart, 2);
        Scalar y = Scalar::coord(1);
        D.name = "cp2_leaf";
        D.generators = {VectorField::coordinate(chart, 0), VectorField::coordinate(chart, 2),
                        cos(Scalar(3.0) * y) * sd[1] - sin(Scalar(3.0) * y) * sd[2]};
    } else {
        if (chart->coords.size() != 6 || chart->coords[2] != "r1") throw std::invalid_argument("build_distribution: needs the canonical_S2xS2 chart");
        D.name = "s2xs2_leaf";
        D.generators = {VectorField::coordinate(chart, 0), VectorField::coordinate(chart, 2), VectorField::coordinate(chart, 4)};
    }
    return D;
}

// Span of named fields on the canonical_CP2 chart: "r", "t", "y", "sigma1".."sigma3".
inline Distribution cp2_coordinate_distribution(const ChartPtr& chart, const std::vector<std::string>& names) {
    auto sd = sigma_dual_fields(chart, 2);
    Distribution D;
    D.chart = chart;
    D.name = "custom";
    for (auto& n : names) {
        if (n == "r") D.generators.push_back(VectorField::coordinate(chart, 0));
        else if (n == "y") D.generators.push_back(VectorField::coordinate(chart, 1));
        else if (n == "t") D.generators.push_back(VectorField::coordinate(chart, 2));
        else if (n == "sigma1") D.generators.push_back(sd[0]);
        else if (n == "sigma2") D.generators.push_back(sd[1]);
        else if (n == "sigma3") D.generators.push_back(sd[2]);
        else throw std::invalid_argument("cp2_coordinate_distribution: unknown field " + n);
    }
    return D;
}

namespace detail {

inline Eigen::MatrixXd generator_matrix(const std::vector<Tape>& tapes, std::span<const double> x) {
    Eigen::MatrixXd M(static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(tapes.size()));
    for (std::size_t j = 0; j < tapes.size(); ++j) {
        auto v = tapes[j].eval(x);
        for (std::size_t i = 0; i < v.size(); ++i) M(i, j) = v[i];
    }
    return M;
}

}  // namespace detail

// [X_i, X_j] in span(D): relative distance of each bracket from the span.
inline Report verify_involutivity(const Distribution& D, const GridSpec& grid, double tolerance = 1e-6) {
    Report rep("verify_involutivity", tolerance, grid);
    std::vector<Tape> gens;
    for (auto& X : D.generators) gens.emplace_back(X.c);
    std::vector<Tape> brackets;
    for (std::size_t i = 0; i < D.generators.size(); ++i)
        for (std::size_t j = i + 1; j < D.generators.size(); ++j) brackets.emplace_back(lie_bracket(D.generators[i], D.generators[j]).c);
    double min_sv = kInf;
    for (auto& p : sample_points(D.chart, grid)) {
        Eigen::MatrixXd M = detail::generator_matrix(gens, p.x);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU);
        double smin = svd.singularValues().minCoeff();
        min_sv = std::min(min_sv, smin / std::max(1.0, svd.singularValues().maxCoeff()));
        Eigen::MatrixXd U = svd.matrixU();
        double worst = 0;
        for (auto& bt : brackets) {
            auto v = bt.eval(p.x);
            Eigen::VectorXd b = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
            Eigen::VectorXd perp = b - U * (U.transpose() * b);
            worst = std::max(worst, perp.norm() / std::max(1.0, b.norm()));
        }
        rep.add("bracket_out_of_span", worst);
    }
    rep.values["min_relative_singular_value"] = min_sv;
    if (min_sv < 1e-8) rep.flag("near_singular_generators");
    return rep;
}

// grid points moved onto the leaf (y and, for S2xS2, th1 fixed)
inline std::vector<ChartPoint> leaf_points(const SLagLeafSpec& leaf, const SU3Structure& S, const GridSpec& grid) {
    auto pts = S.sample(grid);
    double y = leaf.y();
    double per = S.chart->period[1];
    y = std::fmod(std::fmod(y, per) + per, per);
    for (auto& p : pts) {
        p.x[1] = y;
        if (leaf.background == Family::canonical_S2xS2) p.x[3] = p.x[5] + leaf.dtheta();
    }
    return pts;
}

// Gram-Schmidt in the generator order, with respect to g
inline std::vector<Eigen::VectorXd> orthonormalize(const std::vector<Eigen::VectorXd>& v, const Eigen::MatrixXd& g) {
    std::vector<Eigen::VectorXd> e;
    for (auto w : v) {
        for (auto& u : e) w -= (u.dot(g * w)) * u;
        double n = std::sqrt(w.dot(g * w));
        if (!(n > 0)) throw DomainError("orthonormalize: degenerate generators");
        e.push_back(w / n);
    }
    return e;
}

inline Report verify_calibration(const SLagLeafSpec& leaf, const SU3Structure& S, const GridSpec& grid, double tolerance = 1e-8,
                                 const Distribution* override_distribution = nullptr) {
    if (S.spec.family != leaf.background) throw std::invalid_argument("verify_calibration: leaf and structure backgrounds differ");
    if (!S.has_holomorphic_volume()) throw std::invalid_argument("verify_calibration: needs Omega");
    Report rep("verify_calibration", tolerance, grid);
    Distribution D = override_distribution ? *override_distribution : build_distribution(leaf, S.chart);
    std::vector<Tape> gens;
    for (auto& X : D.generators) gens.emplace_back(X.c);
    FormTape ft({S.om, *S.om_plus, *S.om_minus});
    double omin = kInf, omax = -kInf;
    for (auto& p : leaf_points(leaf, S, grid)) {
        Eigen::MatrixXd M = detail::generator_matrix(gens, p.x);
        std::vector<Eigen::VectorXd> v;
        for (int j = 0; j < M.cols(); ++j) v.push_back(M.col(j));
        auto e = orthonormalize(v, S.g.at(p.x));
        auto f = ft.eval(p.x);
        double om = 0;
        for (double w : restrict_to(f[0], e)) om = std::max(om, std::abs(w));
        double op = restrict_to(f[1], e)[0];
        double on = restrict_to(f[2], e)[0];
        rep.add("omega", om);
        rep.add("Omega_minus", on);
        // the fixed generator order may induce the opposite orientation
        rep.add("calibration", std::abs(op) - 1);
        omin = std::min(omin, op);
        omax = std::max(omax, op);
    }
    rep.values["Omega_plus_min"] = omin;
    rep.values["Omega_plus_max"] = omax;
    rep.values["orientation"] = omin > 0 ? 1.0 : (omax < 0 ? -1.0 : 0.0);
    rep.values["y"] = leaf.y();
    if (leaf.background == Family::canonical_S2xS2) rep.values["dtheta"] = leaf.dtheta();
    return rep;
}

inline Eigen::Matrix3d induced_metric(const SLagLeafSpec& leaf, const SU3Structure& S, std::span<const double> x) {
    Distribution D = build_distribution(leaf, S.chart);
    std::vector<double> p(x.begin(), x.end());
    p[1] = leaf.y();
    if (leaf.background == Family::canonical_S2xS2) p[3] = p[5] + leaf.dtheta();
    Eigen::MatrixXd g = S.g.at(p);
    std::vector<Eigen::VectorXd> v;
    for (auto& X : D.generators) v.push_back(X.at(p));
    Eigen::Matrix3d G;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) G(i, j) = v[i].dot(g * v[j]);
    return G;
}

// sup over the leaf of |F(X_i, X_j)| for the generators
inline double flat_restriction_check(const KForm& conn, const SLagLeafSpec& leaf, const SU3Structure& S, const GridSpec& grid) {
    Distribution D = build_distribution(leaf, S.chart);
    std::vector<Tape> gens;
    for (auto& X : D.generators) gens.emplace_back(X.c);
    FormTape ft({d(conn)});
    double sup = 0;
    for (auto& p : leaf_points(leaf, S, grid)) {
        Eigen::MatrixXd M = detail::generator_matrix(gens, p.x);
        std::vector<Eigen::VectorXd> v;
        for (int j = 0; j < M.cols(); ++j) v.push_back(M.col(j));
        for (double w : restrict_to(ft.eval(p.x)[0], v)) sup = std::max(sup, std::abs(w));
    }
    return sup;
}

}  // namespace khym
