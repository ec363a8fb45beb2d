#pragma once

// Scalar fields on a coordinate chart as an immutable expression DAG.
// Partial derivatives are exact (built by differentiation rules and cached
// per node); opaque callables fall back to central differences.

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "quadrature.hpp"
#include "specfun.hpp"

namespace khym {

enum class Op : unsigned char {
    Const, Var, Add, Mul, Div, Neg, Pow, Sqrt, Sin, Cos, Exp, Log, Atan,
    Hyp2F1, BesselJ, BesselY, BesselI, BesselK, AiryAi, AiryAiPrime,
    Opaque, Integral
};

class Expr;
using ExprPtr = std::shared_ptr<const Expr>;

// Black-box function of the full coordinate vector.  `chain` lists the
// coordinates already differentiated (by central differences).
struct OpaqueFn {
    std::function<double(const double*)> f;
    int dim = 0;
    double step = 1e-5;
    std::vector<double> lo, hi;  // open ranges; +-inf means unbounded / periodic
};

class Expr {
public:
    Op op = Op::Const;
    double c = 0;                    // constant value or exponent
    int var = -1;                    // coordinate index (Var, Integral)
    std::array<double, 3> par{};     // special-function parameters
    std::vector<ExprPtr> kids;
    std::shared_ptr<const OpaqueFn> fn;
    std::vector<int> chain;          // Opaque: FD derivative chain

    ExprPtr diff(int i, const ExprPtr& self) const;

private:
    mutable std::mutex mu_;
    mutable std::vector<ExprPtr> dcache_;
};

class Scalar;
Scalar operator+(const Scalar& a, const Scalar& b);
Scalar operator-(const Scalar& a, const Scalar& b);
Scalar operator*(const Scalar& a, const Scalar& b);
Scalar operator/(const Scalar& a, const Scalar& b);
Scalar operator-(const Scalar& a);

class Scalar {
public:
    Scalar() : e_(constant_node(0.0)) {}
    Scalar(double v) : e_(constant_node(v)) {}  // NOLINT: implicit on purpose
    explicit Scalar(ExprPtr e) : e_(std::move(e)) {}

    static Scalar coord(int i) {
        auto n = std::make_shared<Expr>();
        n->op = Op::Var;
        n->var = i;
        return Scalar(ExprPtr(n));
    }

    const ExprPtr& expr() const { return e_; }
    bool is_const() const { return e_->op == Op::Const; }
    bool is_zero() const { return is_const() && e_->c == 0.0; }
    bool is_one() const { return is_const() && e_->c == 1.0; }
    double const_value() const { return e_->c; }

    Scalar d(int i) const { return Scalar(e_->diff(i, e_)); }

    double operator()(std::span<const double> x) const;

    Scalar& operator+=(const Scalar& o) { return *this = *this + o; }
    Scalar& operator-=(const Scalar& o) { return *this = *this - o; }
    Scalar& operator*=(const Scalar& o) { return *this = *this * o; }

    static ExprPtr constant_node(double v) {
        auto n = std::make_shared<Expr>();
        n->op = Op::Const;
        n->c = v;
        return n;
    }

private:
    ExprPtr e_;
};

namespace detail {

inline ExprPtr make(Op op, std::vector<ExprPtr> kids, double c = 0) {
    auto n = std::make_shared<Expr>();
    n->op = op;
    n->kids = std::move(kids);
    n->c = c;
    return n;
}

inline ExprPtr make_special(Op op, const ExprPtr& arg, double p0, double p1 = 0, double p2 = 0) {
    auto n = std::make_shared<Expr>();
    n->op = op;
    n->kids = {arg};
    n->par = {p0, p1, p2};
    return n;
}

}  // namespace detail

inline Scalar operator+(const Scalar& a, const Scalar& b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    if (a.is_const() && b.is_const()) return Scalar(a.const_value() + b.const_value());
    return Scalar(detail::make(Op::Add, {a.expr(), b.expr()}));
}

inline Scalar operator-(const Scalar& a) {
    if (a.is_const()) return Scalar(-a.const_value());
    if (a.expr()->op == Op::Neg) return Scalar(a.expr()->kids[0]);
    return Scalar(detail::make(Op::Neg, {a.expr()}));
}

inline Scalar operator-(const Scalar& a, const Scalar& b) {
    if (b.is_zero()) return a;
    if (a.is_zero()) return -b;
    if (a.is_const() && b.is_const()) return Scalar(a.const_value() - b.const_value());
    return a + (-b);
}

inline Scalar operator*(const Scalar& a, const Scalar& b) {
    if (a.is_zero() || b.is_zero()) return Scalar(0.0);
    if (a.is_one()) return b;
    if (b.is_one()) return a;
    if (a.is_const() && b.is_const()) return Scalar(a.const_value() * b.const_value());
    if (a.is_const() && a.const_value() == -1.0) return -b;
    if (b.is_const() && b.const_value() == -1.0) return -a;
    // keep constants on the left and merge c1*(c2*x)
    if (b.is_const()) return b * a;
    if (a.is_const() && b.expr()->op == Op::Mul && b.expr()->kids[0]->op == Op::Const)
        return Scalar(a.const_value() * b.expr()->kids[0]->c) * Scalar(b.expr()->kids[1]);
    return Scalar(detail::make(Op::Mul, {a.expr(), b.expr()}));
}

inline Scalar operator/(const Scalar& a, const Scalar& b) {
    if (b.is_zero()) throw std::domain_error("Scalar: division by constant zero");
    if (a.is_zero()) return Scalar(0.0);
    if (b.is_one()) return a;
    if (b.is_const()) return Scalar(1.0 / b.const_value()) * a;
    return Scalar(detail::make(Op::Div, {a.expr(), b.expr()}));
}

inline Scalar pow(const Scalar& a, double p) {
    if (p == 0) return Scalar(1.0);
    if (p == 1) return a;
    if (a.is_const()) return Scalar(std::pow(a.const_value(), p));
    if (p == 2) return a * a;
    if (p == 0.5) return Scalar(detail::make(Op::Sqrt, {a.expr()}));
    return Scalar(detail::make(Op::Pow, {a.expr()}, p));
}
inline Scalar sqrt(const Scalar& a) {
    if (a.is_const()) return Scalar(std::sqrt(a.const_value()));
    return Scalar(detail::make(Op::Sqrt, {a.expr()}));
}
inline Scalar sin(const Scalar& a) {
    if (a.is_const()) return Scalar(std::sin(a.const_value()));
    return Scalar(detail::make(Op::Sin, {a.expr()}));
}
inline Scalar cos(const Scalar& a) {
    if (a.is_const()) return Scalar(std::cos(a.const_value()));
    return Scalar(detail::make(Op::Cos, {a.expr()}));
}
inline Scalar exp(const Scalar& a) {
    if (a.is_const()) return Scalar(std::exp(a.const_value()));
    return Scalar(detail::make(Op::Exp, {a.expr()}));
}
inline Scalar log(const Scalar& a) {
    if (a.is_const()) return Scalar(std::log(a.const_value()));
    return Scalar(detail::make(Op::Log, {a.expr()}));
}
inline Scalar atan(const Scalar& a) {
    if (a.is_const()) return Scalar(std::atan(a.const_value()));
    return Scalar(detail::make(Op::Atan, {a.expr()}));
}

inline Scalar hyp2f1(double a, double b, double c, const Scalar& z) {
    auto p = specfun::make_hyp2f1(a, b, c);  // validates parameters early
    if (p.polynomial_degree && *p.polynomial_degree == 0) return Scalar(1.0);
    return Scalar(detail::make_special(Op::Hyp2F1, z.expr(), a, b, c));
}
inline Scalar bessel(specfun::BesselKind kind, double nu, const Scalar& x) {
    Op op = Op::BesselJ;
    switch (kind) {
        case specfun::BesselKind::J: op = Op::BesselJ; break;
        case specfun::BesselKind::Y: op = Op::BesselY; break;
        case specfun::BesselKind::I: op = Op::BesselI; break;
        case specfun::BesselKind::K: op = Op::BesselK; break;
    }
    return Scalar(detail::make_special(op, x.expr(), nu));
}
inline Scalar airy_ai(const Scalar& x) { return Scalar(detail::make_special(Op::AiryAi, x.expr(), 0)); }
inline Scalar airy_ai_prime(const Scalar& x) { return Scalar(detail::make_special(Op::AiryAiPrime, x.expr(), 0)); }

// Black-box field with FD derivatives.  lo/hi are the chart ranges used for
// the near-boundary check; pass +-inf for unbounded or periodic coordinates.
inline Scalar opaque(std::function<double(const double*)> f, int dim, std::vector<double> lo = {},
                     std::vector<double> hi = {}, double step = 1e-5) {
    auto fn = std::make_shared<OpaqueFn>();
    fn->f = std::move(f);
    fn->dim = dim;
    fn->step = step;
    const double inf = std::numeric_limits<double>::infinity();
    fn->lo = lo.empty() ? std::vector<double>(dim, -inf) : std::move(lo);
    fn->hi = hi.empty() ? std::vector<double>(dim, inf) : std::move(hi);
    auto n = std::make_shared<Expr>();
    n->op = Op::Opaque;
    n->fn = fn;
    return Scalar(ExprPtr(n));
}

// x_var -> integral_{lower}^{x_var} f ds, with f evaluated at the current point
// with coordinate `var` replaced by s.  f must depend on coordinate `var` only
// (other coordinates are passed through unchanged).
inline Scalar integral(const Scalar& f, int var, double lower, double rel_tol = 1e-12) {
    auto n = std::make_shared<Expr>();
    n->op = Op::Integral;
    n->var = var;
    n->kids = {f.expr()};
    n->par = {lower, rel_tol, 0};
    return Scalar(ExprPtr(n));
}

// ---------------------------------------------------------------------------
// Differentiation

inline ExprPtr Expr::diff(int i, const ExprPtr& self) const {
    {
        std::lock_guard<std::mutex> lk(mu_);
        if (i < static_cast<int>(dcache_.size()) && dcache_[i]) return dcache_[i];
    }
    using specfun::BesselKind;
    auto K = [&](int j) { return Scalar(kids[j]); };
    auto dK = [&](int j) { return Scalar(kids[j]->diff(i, kids[j])); };
    Scalar S(self);
    Scalar r;
    switch (op) {
        case Op::Const: r = 0.0; break;
        case Op::Var: r = (var == i) ? 1.0 : 0.0; break;
        case Op::Add: r = dK(0) + dK(1); break;
        case Op::Neg: r = -dK(0); break;
        case Op::Mul: r = dK(0) * K(1) + K(0) * dK(1); break;
        case Op::Div: {
            auto da = dK(0), db = dK(1);
            if (db.is_zero())
                r = da / K(1);
            else
                r = (da * K(1) - K(0) * db) / (K(1) * K(1));
            break;
        }
        case Op::Pow: r = Scalar(c) * pow(K(0), c - 1) * dK(0); break;
        case Op::Sqrt: r = dK(0) / (Scalar(2.0) * S); break;
        case Op::Sin: r = cos(K(0)) * dK(0); break;
        case Op::Cos: r = -(sin(K(0)) * dK(0)); break;
        case Op::Exp: r = S * dK(0); break;
        case Op::Log: r = dK(0) / K(0); break;
        case Op::Atan: r = dK(0) / (Scalar(1.0) + K(0) * K(0)); break;
        case Op::Hyp2F1: {
            auto dz = dK(0);
            double a = par[0], b = par[1], cc = par[2];
            if (dz.is_zero() || a * b == 0)
                r = 0.0;
            else
                r = Scalar(a * b / cc) * hyp2f1(a + 1, b + 1, cc + 1, K(0)) * dz;
            break;
        }
        case Op::BesselJ:
        case Op::BesselY:
        case Op::BesselI:
        case Op::BesselK: {
            auto dx = dK(0);
            if (dx.is_zero()) {
                r = 0.0;
                break;
            }
            double nu = par[0];
            BesselKind k = op == Op::BesselJ ? BesselKind::J
                           : op == Op::BesselY ? BesselKind::Y
                           : op == Op::BesselI ? BesselKind::I
                                               : BesselKind::K;
            auto lo = bessel(k, nu - 1, K(0)), hi = bessel(k, nu + 1, K(0));
            Scalar d;
            if (k == BesselKind::I)
                d = Scalar(0.5) * (lo + hi);
            else if (k == BesselKind::K)
                d = Scalar(-0.5) * (lo + hi);
            else
                d = Scalar(0.5) * (lo - hi);
            r = d * dx;
            break;
        }
        case Op::AiryAi: r = airy_ai_prime(K(0)) * dK(0); break;
        case Op::AiryAiPrime: r = K(0) * airy_ai(K(0)) * dK(0); break;
        case Op::Opaque: {
            auto n = std::make_shared<Expr>();
            n->op = Op::Opaque;
            n->fn = fn;
            n->chain = chain;
            n->chain.push_back(i);
            r = Scalar(ExprPtr(n));
            break;
        }
        case Op::Integral: r = (var == i) ? K(0) : Scalar(0.0); break;
    }
    std::lock_guard<std::mutex> lk(mu_);
    if (i >= static_cast<int>(dcache_.size())) dcache_.resize(i + 1);
    if (!dcache_[i]) dcache_[i] = r.expr();
    return dcache_[i];
}

// ---------------------------------------------------------------------------
// Evaluation: a flat tape over the unique nodes of one or more expressions.

namespace detail {

inline double opaque_eval(const OpaqueFn& fn, const std::vector<int>& chain, std::size_t depth, double* x) {
    if (depth == chain.size()) return fn.f(x);
    int i = chain[depth];
    double xi = x[i];
    // higher FD orders use a slightly larger step to limit round-off growth
    double h = fn.step * std::pow(10.0, 0.5 * depth) * std::max(1.0, std::abs(xi));
    if (xi - 2 * h <= fn.lo[i] || xi + 2 * h >= fn.hi[i])
        throw DomainError("finite difference stencil leaves the chart range in coordinate " + std::to_string(i));
    x[i] = xi + h;
    double fp = opaque_eval(fn, chain, depth + 1, x);
    x[i] = xi - h;
    double fm = opaque_eval(fn, chain, depth + 1, x);
    x[i] = xi;
    return (fp - fm) / (2 * h);
}

}  // namespace detail

class Tape {
public:
    Tape() = default;
    explicit Tape(const std::vector<Scalar>& outs) {
        std::unordered_map<const Expr*, int> index;
        for (auto& s : outs) {
            roots_.push_back(s.expr());
            outs_.push_back(visit(s.expr(), index));
        }
    }

    std::size_t size() const { return code_.size(); }
    std::size_t outputs() const { return outs_.size(); }

    void eval(std::span<const double> x, double* out) const {
        std::vector<double> v(code_.size());
        std::vector<double> xs(x.begin(), x.end());
        for (std::size_t k = 0; k < code_.size(); ++k) {
            const Ins& in = code_[k];
            const Expr& n = *in.node;
            double a = in.a >= 0 ? v[in.a] : 0, b = in.b >= 0 ? v[in.b] : 0;
            double r = 0;
            switch (n.op) {
                case Op::Const: r = n.c; break;
                case Op::Var: r = xs.at(n.var); break;
                case Op::Add: r = a + b; break;
                case Op::Mul: r = a * b; break;
                case Op::Div: r = a / b; break;
                case Op::Neg: r = -a; break;
                case Op::Pow: r = std::pow(a, n.c); break;
                case Op::Sqrt: r = std::sqrt(a); break;
                case Op::Sin: r = std::sin(a); break;
                case Op::Cos: r = std::cos(a); break;
                case Op::Exp: r = std::exp(a); break;
                case Op::Log: r = std::log(a); break;
                case Op::Atan: r = std::atan(a); break;
                case Op::Hyp2F1: r = specfun::hyp2f1(n.par[0], n.par[1], n.par[2], a); break;
                case Op::BesselJ: r = specfun::bessel_j(n.par[0], a); break;
                case Op::BesselY: r = specfun::bessel_y(n.par[0], a); break;
                case Op::BesselI: r = specfun::bessel_i(n.par[0], a); break;
                case Op::BesselK: r = specfun::bessel_k(n.par[0], a); break;
                case Op::AiryAi: r = specfun::airy_ai(a); break;
                case Op::AiryAiPrime: r = specfun::airy_ai_prime(a); break;
                case Op::Opaque: r = detail::opaque_eval(*n.fn, n.chain, 0, xs.data()); break;
                case Op::Integral: {
                    const Tape& inner = *inner_[in.sub];
                    std::vector<double> y = xs;
                    int vi = n.var;
                    auto f = [&](double s) {
                        y[vi] = s;
                        double o;
                        inner.eval(y, &o);
                        return o;
                    };
                    auto q = quad::gauss_kronrod(f, n.par[0], xs[vi], n.par[1]);
                    r = q.value;
                    break;
                }
            }
            v[k] = r;
        }
        for (std::size_t j = 0; j < outs_.size(); ++j) out[j] = v[outs_[j]];
    }

    std::vector<double> eval(std::span<const double> x) const {
        std::vector<double> o(outs_.size());
        eval(x, o.data());
        return o;
    }

private:
    struct Ins {
        const Expr* node;
        int a = -1, b = -1;
        int sub = -1;  // Integral: index into inner_
    };

    int visit(const ExprPtr& root, std::unordered_map<const Expr*, int>& index) {
        // iterative post-order so deep expressions do not blow the stack
        std::vector<std::pair<const Expr*, std::size_t>> stack;
        stack.push_back({root.get(), 0});
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (index.count(node)) {
                stack.pop_back();
                continue;
            }
            bool inline_kids = node->op != Op::Integral;  // integrand is evaluated by the node itself
            if (inline_kids && next < node->kids.size()) {
                const Expr* kid = node->kids[next++].get();
                if (!index.count(kid)) stack.push_back({kid, 0});
                continue;
            }
            Ins in{node};
            if (!inline_kids) {
                in.sub = static_cast<int>(inner_.size());
                inner_.push_back(std::make_shared<Tape>(std::vector<Scalar>{Scalar(node->kids[0])}));
            } else {
                if (node->kids.size() > 0) in.a = index.at(node->kids[0].get());
                if (node->kids.size() > 1) in.b = index.at(node->kids[1].get());
            }
            index[node] = static_cast<int>(code_.size());
            code_.push_back(in);
            stack.pop_back();
        }
        return index.at(root.get());
    }

    std::vector<Ins> code_;
    std::vector<int> outs_;
    std::vector<ExprPtr> roots_;  // keeps the nodes alive
    std::vector<std::shared_ptr<Tape>> inner_;
};

inline double Scalar::operator()(std::span<const double> x) const {
    if (is_const()) return e_->c;
    Tape t({*this});
    double o;
    t.eval(x, &o);
    return o;
}

// Rename coordinates: Var(i) -> Var(map[i]).  Used to lift fields built on a
// 4-dimensional base chart into a 6-dimensional chart.
inline Scalar reindex(const Scalar& s, const std::vector<int>& map) {
    std::unordered_map<const Expr*, ExprPtr> memo;
    std::function<ExprPtr(const ExprPtr&)> go = [&](const ExprPtr& e) -> ExprPtr {
        if (auto it = memo.find(e.get()); it != memo.end()) return it->second;
        ExprPtr out;
        if (e->op == Op::Const) {
            out = e;
        } else if (e->op == Op::Var) {
            out = Scalar::coord(map.at(e->var)).expr();
        } else if (e->op == Op::Opaque || e->op == Op::Integral) {
            throw std::invalid_argument("reindex: opaque and integral nodes cannot be reindexed");
        } else {
            auto n = std::make_shared<Expr>();
            n->op = e->op;
            n->c = e->c;
            n->par = e->par;
            for (auto& k : e->kids) n->kids.push_back(go(k));
            out = n;
        }
        memo[e.get()] = out;
        return out;
    };
    return Scalar(go(s.expr()));
}

// Count of unique nodes; handy for keeping an eye on expression growth.
inline std::size_t node_count(const std::vector<Scalar>& v) { return Tape(v).size(); }

}  // namespace khym
