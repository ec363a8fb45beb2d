// khym: command-line front end.  Exit codes: 0 all residuals within
// tolerance, 1 a check failed (report still written), 2 usage or domain error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "khym/khym.hpp"

using namespace khym;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    int points = 200;
    double margin = 0.05;
    std::uint64_t seed = 20240601;
    std::optional<double> tolerance;
    std::string output;

    GridSpec grid() const { return {points, margin, seed}; }
};

struct BackgroundOpts {
    std::string family = "canonical_CP2";
    std::string json_text;
    std::optional<double> C, a, b, p, q, lambda, H_lo, H_hi;

    BackgroundSpec spec() const {
        if (!json_text.empty()) {
            std::string text = json_text;
            if (text.find('{') == std::string::npos) {
                std::ifstream in(text);
                if (!in) throw UsageError("cannot read background file " + text);
                std::stringstream ss;
                ss << in.rdbuf();
                text = ss.str();
            }
            json j;
            try {
                j = json::parse(text);
            } catch (const json::parse_error& e) {
                throw UsageError(std::string("malformed background JSON: ") + e.what());
            }
            return background_from_json(j);
        }
        json j = {{"family", family}};
        auto put = [&](const char* k, const std::optional<double>& v) {
            if (v) j[k] = *v;
        };
        put("C", C);
        put("a", a);
        put("b", b);
        put("p", p);
        put("q", q);
        put("lambda", lambda);
        put("H_lo", H_lo);
        put("H_hi", H_hi);
        return background_from_json(j);
    }
};

void add_common(CLI::App* sc, Common& c) {
    sc->add_option("--grid-points", c.points, "number of seeded sample points")->check(CLI::PositiveNumber);
    sc->add_option("--margin", c.margin, "relative margin kept from chart boundaries")->check(CLI::Range(0.0, 0.49));
    sc->add_option("--seed", c.seed, "grid seed");
    sc->add_option("--tolerance", c.tolerance, "residual tolerance")->check(CLI::PositiveNumber);
    sc->add_option("-o,--output", c.output, "output file (default stdout)");
}

void add_background(CLI::App* sc, BackgroundOpts& b) {
    sc->add_option("--family", b.family, "background family");
    sc->add_option("--background", b.json_text, "background as JSON text or a path to a JSON file");
    sc->add_option("--C", b.C, "constant C of the canonical bundle (or the u-formula constant)");
    sc->add_option("--a", b.a);
    sc->add_option("--b", b.b);
    sc->add_option("--p", b.p);
    sc->add_option("--q", b.q);
    sc->add_option("--lambda", b.lambda);
    sc->add_option("--H-lo", b.H_lo);
    sc->add_option("--H-hi", b.H_hi);
}

// default tolerances may come from a JSON file named by KHYM_TOLERANCES:
// {"verify-structure": 1e-8, ...}
double tolerance_for(const std::string& command, const Common& c, double fallback) {
    if (c.tolerance) return *c.tolerance;
    if (const char* path = std::getenv("KHYM_TOLERANCES")) {
        std::ifstream in(path);
        if (!in) throw UsageError(std::string("KHYM_TOLERANCES: cannot read ") + path);
        json j;
        try {
            j = json::parse(in);
        } catch (const json::parse_error& e) {
            throw UsageError(std::string("KHYM_TOLERANCES: malformed JSON: ") + e.what());
        }
        if (j.contains(command)) {
            double t = j.at(command).get<double>();
            if (!(t > 0)) throw UsageError("KHYM_TOLERANCES: tolerances must be positive");
            return t;
        }
    }
    return fallback;
}

void write(const Common& c, const std::string& text) {
    if (c.output.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(c.output, std::ios::binary);
    if (!out) throw UsageError("cannot write " + c.output);
    out << text;
    if (!out) throw UsageError("write failed: " + c.output);
}

int emit(const Common& c, const json& j, bool pass) {
    write(c, dump_json(j));
    return pass ? 0 : 1;
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError("not a number: " + item);
        }
    }
    return out;
}

SU3Structure cp2_structure(double C) { return build_structure(BackgroundSpec::canonical_cp2(C)); }

// named connections on the canonical bundle of CP2
KForm named_connection(const std::string& name, const SU3Structure& S) {
    auto f = cp2_frame(S.chart, 2);
    Scalar r = Scalar::coord(0), t = Scalar::coord(2);
    if (name == "r4theta") return pow(r, -4.0) * S.fiber_form;
    if (name == "t_sigma1") return (Scalar(1.0) / t) * f.s1;
    if (name == "t_sigma2") return (Scalar(1.0) - Scalar(1.0) / t) * f.s2;
    throw UsageError("unknown example connection " + name + " (r4theta, t_sigma1, t_sigma2)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Abelian and SU(3) instantons on Calabi-Yau cones and canonical bundles"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "khym 1.0.0");

    // verify-structure
    Common vs_c;
    BackgroundOpts vs_b;
    bool vs_fd = false, vs_unrotated = false;
    auto* vs = app.add_subcommand("verify-structure", "closedness, compatibility and normalization of (omega, Omega)");
    add_common(vs, vs_c);
    add_background(vs, vs_b);
    vs->add_flag("--finite-differences", vs_fd, "differentiate numerically instead of symbolically");
    vs->add_flag("--unrotated", vs_unrotated, "negative control: use psi+- without the fibre rotation (canonical_CP2)");

    // einstein-check
    Common ec_c;
    BackgroundOpts ec_b;
    int ec_n = 100;
    std::string ec_base;
    auto* ec = app.add_subcommand("einstein-check", "Einstein condition of the base along H, or Ricci of a base metric");
    add_common(ec, ec_c);
    add_background(ec, ec_b);
    ec->add_option("--n", ec_n, "H-grid size")->check(CLI::Range(2, 1000000));
    ec->add_option("--base", ec_base, "check Ric = lambda g of a base metric instead (CP2, S2xS2, T4, H2xH2)");

    // spectrum
    Common sp_c;
    std::string sp_manifold = "CP2", sp_format = "csv";
    long long sp_kmax = 10, sp_kmin = 0;
    bool sp_poly = false;
    auto* sp = app.add_subcommand("spectrum", "Laplacian spectrum and polynomial-kappa indices");
    add_common(sp, sp_c);
    sp->add_option("--manifold", sp_manifold)->check(CLI::IsMember({"CP2", "S2xS2", "T4"}));
    sp->add_option("--kmax", sp_kmax)->check(CLI::NonNegativeNumber);
    sp->add_option("--kmin", sp_kmin)->check(CLI::NonNegativeNumber);
    sp->add_flag("--polynomial-only", sp_poly, "only k with a terminating hypergeometric branch");
    sp->add_option("--format", sp_format)->check(CLI::IsMember({"csv", "json"}));

    // solve-kappa
    Common sk_c;
    BackgroundOpts sk_b;
    std::optional<long long> sk_k;
    double sk_mu = 0, sk_c1 = 1, sk_c2 = 0;
    bool sk_global = false;
    int sk_n = 200;
    std::optional<double> sk_lo, sk_hi;
    auto* sk = app.add_subcommand("solve-kappa", "radial profile kappa for an eigenvalue, graded by the ODE residual");
    add_common(sk, sk_c);
    add_background(sk, sk_b);
    sk->add_option("--k", sk_k, "catalog index (canonical families)");
    sk->add_option("--mu", sk_mu, "eigenvalue (when --k is absent)");
    sk->add_option("--c1", sk_c1);
    sk->add_option("--c2", sk_c2);
    sk->add_flag("--require-global", sk_global);
    sk->add_option("--n", sk_n, "residual grid size")->check(CLI::Range(2, 1000000));
    sk->add_option("--lo", sk_lo, "residual grid start");
    sk->add_option("--hi", sk_hi, "residual grid end");

    // verify-instanton
    Common vi_c;
    double vi_C = 1;
    std::string vi_example;
    long long vi_k = 1;
    double vi_c1 = 0, vi_c2 = 1;
    int vi_eig = 0;
    auto* vi = app.add_subcommand("verify-instanton", "HYM check of an assembled or example abelian connection on canonical_CP2");
    add_common(vi, vi_c);
    vi->add_option("--C", vi_C)->check(CLI::NonNegativeNumber);
    vi->add_option("--example", vi_example, "r4theta, t_sigma1 or t_sigma2 instead of an assembled connection");
    vi->add_option("--k", vi_k, "0 or 1 (mu = 0 or 12)")->check(CLI::Range(0, 1));
    auto* vi_c1_opt = vi->add_option("--c1", vi_c1, "default 0 (k = 1) or 1 (k = 0)");
    auto* vi_c2_opt = vi->add_option("--c2", vi_c2, "default 1 (k = 1) or 0 (k = 0); k = 0 needs c2 = 0 without a base connection");
    vi->add_option("--eigenfunction", vi_eig, "which mu = 12 eigenfunction (0..2)")->check(CLI::Range(0, 2));

    // ym-energy
    Common ye_c;
    double ye_C = 1, ye_rmax = 20;
    std::string ye_example;
    int ye_eig = 0;
    auto* ye = app.add_subcommand("ym-energy", "Yang-Mills energy on canonical_CP2 with tail extrapolation");
    add_common(ye, ye_c);
    ye->add_option("--C", ye_C)->check(CLI::PositiveNumber);
    ye->add_option("--example", ye_example, "r4theta, t_sigma1, t_sigma2, or empty for the assembled mu = 12 connection");
    ye->add_option("--eigenfunction", ye_eig)->check(CLI::Range(0, 2));
    ye->add_option("--r-max", ye_rmax)->check(CLI::PositiveNumber);

    // killing-check
    Common kc_c;
    double kc_C = 1;
    std::string kc_field = "d_y";
    auto* kc = app.add_subcommand("killing-check", "dX^flat ^ omega^2 = c omega^3 for a Killing field");
    add_common(kc, kc_c);
    kc->add_option("--C", kc_C)->check(CLI::NonNegativeNumber);
    kc->add_option("--field", kc_field)->check(CLI::IsMember({"d_y", "d_sigma1", "right_1", "right_2", "right_x3"}));

    // levi-civita-check
    Common lc_c;
    double lc_C = 1;
    bool lc_control = false;
    auto* lc = app.add_subcommand("levi-civita-check", "the Levi-Civita connection as an SU(3) instanton");
    add_common(lc, lc_c);
    lc->add_option("--C", lc_C)->check(CLI::NonNegativeNumber);
    lc->add_flag("--control", lc_control, "pulled back Levi-Civita connection of CP2 (expected to fail)");

    // dhym
    auto* dh = app.add_subcommand("dhym", "deformed Hermitian Yang-Mills");
    dh->require_subcommand(1);
    Common ds_c;
    double ds_c_val = 0, ds_lo = 1, ds_hi = 10;
    int ds_n = 200;
    auto* ds = dh->add_subcommand("solve", "cubic branches and their ODE residuals");
    add_common(ds, ds_c);
    ds->add_option("--c", ds_c_val)->check(CLI::NonNegativeNumber);
    ds->add_option("--H-lo", ds_lo);
    ds->add_option("--H-hi", ds_hi);
    ds->add_option("--n", ds_n)->check(CLI::Range(1, 1000000));
    Common dv_c;
    double dv_C = 1, dv_cval = 0;
    std::string dv_branch = "upper";
    auto* dv = dh->add_subcommand("verify", "6D dHYM check of A = kappa(H) Theta on canonical_CP2");
    add_common(dv, dv_c);
    dv->add_option("--C", dv_C)->check(CLI::NonNegativeNumber);
    dv->add_option("--c", dv_cval)->check(CLI::NonNegativeNumber);
    dv->add_option("--branch", dv_branch)->check(CLI::IsMember({"upper", "middle", "lower"}));
    Common dp_c;
    std::string dp_cs = "0,1,8";
    double dp_hmax = 5;
    int dp_n = 101;
    auto* dp = dh->add_subcommand("plot", "CSV samples of all real branches (c, H, branch, kappa)");
    add_common(dp, dp_c);
    dp->add_option("--c", dp_cs, "comma separated c values (negative allowed)");
    dp->add_option("--Hmax", dp_hmax)->check(CLI::PositiveNumber);
    dp->add_option("--n", dp_n)->check(CLI::Range(2, 1000000));
    Common dc_c;
    double dc_C = 0, dc_cval = 1;
    auto* dc = dh->add_subcommand("count-branches", "branches defined on all of [H0, inf)");
    add_common(dc, dc_c);
    dc->add_option("--C", dc_C)->check(CLI::NonNegativeNumber);
    dc->add_option("--c", dc_cval);

    // slag
    auto* sl = app.add_subcommand("slag", "special Lagrangian leaves");
    sl->require_subcommand(1);
    Common sv_c;
    std::string sv_family = "canonical_CP2";
    double sv_C = 1;
    std::optional<double> sv_y, sv_dtheta;
    int sv_leaf = 1;
    auto* sv = sl->add_subcommand("verify", "involutivity and calibration of a leaf");
    add_common(sv, sv_c);
    sv->add_option("--family", sv_family)->check(CLI::IsMember({"canonical_CP2", "canonical_S2xS2"}));
    sv->add_option("--C", sv_C)->check(CLI::NonNegativeNumber);
    sv->add_option("--y", sv_y);
    sv->add_option("--dtheta", sv_dtheta, "th1 - th2 (S2xS2, with --y)");
    sv->add_option("--leaf-family", sv_leaf, "S2xS2 family 1 or 2")->check(CLI::Range(1, 2));
    Common sm_c;
    double sm_C = 1, sm_y = 0;
    std::string sm_point = "1.5,0.5,1,1,1";
    auto* sm = sl->add_subcommand("metric", "induced metric of a canonical_CP2 leaf at (r, t, x1, x2, x3)");
    add_common(sm, sm_c);
    sm->add_option("--C", sm_C)->check(CLI::NonNegativeNumber);
    sm->add_option("--y", sm_y);
    sm->add_option("--point", sm_point, "r,t,x1,x2,x3");

    // deformation-check
    Common df_c;
    std::string df_example = "sine";
    auto* df = app.add_subcommand("deformation-check", "non-constant Airy deformations on the flat torus");
    add_common(df, df_c);
    df->add_option("--example", df_example)->check(CLI::IsMember({"sine", "exp"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*vs) {
            auto spec = vs_b.spec();
            auto S = build_structure(spec);
            StructureCheckOptions opt;
            opt.finite_differences = vs_fd;
            opt.tolerance = tolerance_for("verify-structure", vs_c, vs_fd ? 1e-4 : 1e-8);
            if (vs_unrotated) {
                auto [pp, pm] = unrotated_psi(S);
                S.om_plus = pp;
                S.om_minus = pm;
            }
            auto rep = verify_su3_structure(S, vs_c.grid(), opt);
            if (vs_unrotated) rep.flag("unrotated_control");
            json j = rep.to_json();
            j["background"] = to_json(spec);
            return emit(vs_c, j, rep.pass());
        }
        if (*ec) {
            double tol = tolerance_for("einstein-check", ec_c, ec_base.empty() ? 1e-10 : 1e-3);
            if (!ec_base.empty()) {
                auto rep = ricci_check(ec_base, ec_c.grid(), tol);
                return emit(ec_c, rep.to_json(), rep.pass());
            }
            auto spec = ec_b.spec();
            auto prof = einstein_residuals(spec, ec_n);
            json j = {{"check", "einstein_residuals"}, {"background", to_json(spec)}, {"H", prof.H},
                      {"residual", prof.residual}, {"sup_residual", prof.sup}, {"tolerance", tol},
                      {"pass", prof.sup <= tol}};
            return emit(ec_c, j, prof.sup <= tol);
        }
        if (*sp) {
            if (sp_kmin > sp_kmax) throw UsageError("--kmin exceeds --kmax");
            std::vector<EigenvalueEntry> rows;
            if (sp_poly) {
                if (sp_manifold == "T4") throw UsageError("--polynomial-only needs CP2 or S2xS2");
                for (long long k : enumerate_polynomial_k(sp_manifold, sp_kmax, sp_kmin)) rows.push_back(spectrum(sp_manifold, k));
            } else {
                if (sp_kmax - sp_kmin > 10000000) throw UsageError("range too large without --polynomial-only");
                for (long long k = sp_kmin; k <= sp_kmax; ++k) rows.push_back(spectrum(sp_manifold, k));
            }
            if (sp_format == "csv") {
                write(sp_c, spectrum_csv(rows));
                return 0;
            }
            json arr = json::array();
            for (auto& e : rows)
                arr.push_back({{"manifold", e.manifold}, {"k", e.k}, {"mu", e.mu}, {"multiplicity", e.multiplicity},
                               {"polynomial_kappa", polynomial_kappa(e.manifold, e.k)}});
            return emit(sp_c, arr, true);
        }
        if (*sk) {
            auto spec = sk_b.spec();
            KappaRequest rq;
            rq.k = sk_k;
            rq.mu = sk_mu;
            rq.c1 = sk_c1;
            rq.c2 = sk_c2;
            rq.require_global = sk_global;
            auto sol = solve_kappa(spec, rq);
            std::optional<std::pair<double, double>> range;
            if (sk_lo || sk_hi) {
                auto d = default_kappa_grid(sol);
                range = std::make_pair(sk_lo.value_or(d.first), sk_hi.value_or(d.second));
            }
            auto rep = kappa_ode_residual(sol, sk_n, range, tolerance_for("solve-kappa", sk_c, 1e-8));
            json j = to_json(sol);
            j["residual"] = rep.to_json();
            j["pass"] = rep.pass();
            return emit(sk_c, j, rep.pass());
        }
        if (*vi) {
            auto S = cp2_structure(vi_C);
            double tol = tolerance_for("verify-instanton", vi_c, 1e-6);
            if (!vi_example.empty()) {
                auto rep = verify_hym(named_connection(vi_example, S), S, 0, vi_c.grid(), tol);
                json j = rep.to_json();
                j["example"] = vi_example;
                return emit(vi_c, j, rep.pass());
            }
            KappaRequest rq;
            rq.k = vi_k;
            rq.c1 = vi_c1;
            rq.c2 = vi_c2;
            if (vi_k == 0 && !*vi_c1_opt && !*vi_c2_opt) {
                rq.c1 = 1;
                rq.c2 = 0;
            }
            auto kap = solve_kappa(S.spec, rq);
            Scalar F = vi_k == 0 ? Scalar(1.0) : cp2_eigenfunctions_mu12(0).at(vi_eig);
            auto conn = assemble_connection(kap, F, S);
            auto hym = verify_hym(conn.A, S, 0, vi_c.grid(), tol);
            json j = hym.to_json();
            j["kappa"] = to_json(kap);
            j["integration_constant"] = conn.integration_constant;
            bool pass = hym.pass();
            if (vi_k != 0) {
                auto red = verify_reduced_equations(conn, S, vi_c.grid(), tol);
                j["reduced_equations"] = red.to_json();
                pass = pass && red.pass();
            }
            j["pass"] = pass;
            return emit(vi_c, j, pass);
        }
        if (*ye) {
            auto S = cp2_structure(ye_C);
            KForm A(S.chart, 1);
            if (!ye_example.empty()) {
                A = named_connection(ye_example, S);
            } else {
                KappaRequest rq;
                rq.k = 1;
                rq.c1 = 0;
                rq.c2 = 1;
                A = assemble_connection(solve_kappa(S.spec, rq), cp2_eigenfunctions_mu12(0).at(ye_eig), S).A;
            }
            auto e = yang_mills_energy(A, S, ye_rmax, tolerance_for("ym-energy", ye_c, 1e-8));
            json j = to_json(e);
            j["C"] = ye_C;
            j["r_max"] = ye_rmax;
            j["example"] = ye_example.empty() ? "assembled_mu12" : ye_example;
            return emit(ye_c, j, true);
        }
        if (*kc) {
            auto S = cp2_structure(kc_C);
            auto res = killing_dual_check(killing_field(S, kc_field), S, kc_c.grid(), tolerance_for("killing-check", kc_c, 1e-8));
            json j = res.report.to_json();
            j["field"] = kc_field;
            return emit(kc_c, j, res.report.pass());
        }
        if (*lc) {
            double tol = tolerance_for("levi-civita-check", lc_c, 1e-6);
            Report rep;
            if (lc_control) {
                auto S = cp2_structure(lc_C);
                rep = verify_matrix_instanton(cp2_levi_civita_pullback(S), S, lc_c.grid(), tol, "cp2_levi_civita_pullback");
            } else {
                rep = verify_levi_civita(lc_C, lc_c.grid(), tol);
            }
            return emit(lc_c, rep.to_json(), rep.pass());
        }
        if (*ds) {
            auto set = solve_cubic_branches(ds_c_val, ds_lo, ds_hi);
            json arr = json::array();
            bool pass = true;
            for (auto& b : set.branches) {
                auto rep = dhym_ode_residual(b, ds_n, tolerance_for("dhym", ds_c, 1e-10));
                json j = to_json(b);
                j["residual"] = rep.to_json();
                pass = pass && rep.pass();
                arr.push_back(j);
            }
            return emit(ds_c, {{"branches", arr}, {"flags", set.flags}, {"pass", pass}}, pass);
        }
        if (*dv) {
            auto S = cp2_structure(dv_C);
            double H0 = std::cbrt(dv_C) / 2;
            BranchLabel lab = dv_branch == "upper" ? BranchLabel::upper : dv_branch == "middle" ? BranchLabel::middle : BranchLabel::lower;
            auto set = solve_cubic_branches(dv_cval, std::max(H0, 1e-300), 1e300);
            const CubicBranch* pick = nullptr;
            for (auto& b : set.branches)
                if (b.branch == lab && (!pick || b.H_hi > pick->H_hi)) pick = &b;
            if (!pick) throw UsageError("no such branch");
            auto rep = verify_dhym_6d(*pick, S, dv_c.grid(), tolerance_for("dhym", dv_c, 1e-6));
            json j = rep.to_json();
            j["branch"] = to_json(*pick);
            return emit(dv_c, j, rep.pass());
        }
        if (*dp) {
            std::vector<double> H;
            for (int i = 0; i < dp_n; ++i) H.push_back(dp_hmax * i / (dp_n - 1));
            write(dp_c, emit_branch_samples(parse_list(dp_cs), H));
            return 0;
        }
        if (*dc) {
            int n = count_global_branches(dc_cval, BackgroundSpec::canonical_cp2(dc_C));
            return emit(dc_c, {{"C", dc_C}, {"c", dc_cval}, {"H0", std::cbrt(dc_C) / 2}, {"global_branches", n}}, true);
        }
        if (*sv) {
            SLagLeafSpec leaf;
            BackgroundSpec spec;
            if (sv_family == "canonical_CP2") {
                leaf = SLagLeafSpec::cp2(sv_y.value_or(0));
                spec = BackgroundSpec::canonical_cp2(sv_C);
            } else {
                leaf = sv_y || sv_dtheta ? SLagLeafSpec::s2xs2(sv_dtheta.value_or(0), sv_y.value_or(0)) : SLagLeafSpec::s2xs2_family(sv_leaf);
                spec = BackgroundSpec::canonical_s2xs2(sv_C);
            }
            auto S = build_structure(spec);
            double tol = tolerance_for("slag", sv_c, 1e-8);
            auto cal = verify_calibration(leaf, S, sv_c.grid(), tol);
            auto inv = verify_involutivity(build_distribution(leaf, S.chart), sv_c.grid(), 1e-6);
            bool pass = cal.pass() && inv.pass();
            return emit(sv_c, {{"calibration", cal.to_json()}, {"involutivity", inv.to_json()}, {"pass", pass}}, pass);
        }
        if (*sm) {
            auto v = parse_list(sm_point);
            if (v.size() != 5) throw UsageError("--point needs r,t,x1,x2,x3");
            auto S = cp2_structure(sm_C);
            std::vector<double> x = {v[0], sm_y, v[1], v[2], v[3], v[4]};
            auto G = induced_metric(SLagLeafSpec::cp2(sm_y), S, x);
            json m = json::array();
            for (int i = 0; i < 3; ++i) m.push_back({G(i, 0), G(i, 1), G(i, 2)});
            return emit(sm_c, {{"generators", {"d_r", "d_t", "cos3y d_sigma2 - sin3y d_sigma3"}}, {"gram", m}}, true);
        }
        if (*df) {
            auto dd = df_example == "sine" ? DeformationData::airy_sine() : DeformationData::airy_exp();
            auto rep = verify_nonconstant_deformation(dd, df_c.grid(), tolerance_for("deformation-check", df_c, 1e-6));
            json j = rep.to_json();
            j["example"] = df_example;
            return emit(df_c, j, rep.pass());
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NoGlobalSolution& e) {
        std::cerr << "no global solution: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "domain error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid argument: " << e.what() << "\n";
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "domain error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "json error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
