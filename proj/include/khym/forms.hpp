#pragma once

// Differential forms, vector fields and metrics on a coordinate chart.
// Components are Scalars indexed by strictly increasing multi-indices;
// pointwise values (FormValue) are plain doubles for the numerical checks.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "chart.hpp"
#include "expr.hpp"

namespace khym {

// ---------------------------------------------------------------------------
// multi-index bookkeeping

namespace combi {

constexpr int kMaxDim = 8;

struct Table {
    std::vector<std::vector<int>> list;  // increasing index tuples, lexicographic
    std::vector<unsigned> masks;
    std::vector<int> rank;               // mask -> rank, -1 if the mask has another size
};

inline const Table& table(int n, int k) {
    static const auto all = [] {
        std::vector<std::vector<Table>> t(kMaxDim + 1);
        for (int n = 0; n <= kMaxDim; ++n) {
            t[n].resize(n + 1);
            for (int k = 0; k <= n; ++k) {
                Table& tb = t[n][k];
                tb.rank.assign(1u << n, -1);
                std::vector<int> cur;
                // lexicographic enumeration
                std::vector<int> idx(k);
                for (int i = 0; i < k; ++i) idx[i] = i;
                while (true) {
                    unsigned m = 0;
                    for (int i : idx) m |= 1u << i;
                    tb.rank[m] = static_cast<int>(tb.list.size());
                    tb.list.push_back(idx);
                    tb.masks.push_back(m);
                    int p = k - 1;
                    while (p >= 0 && idx[p] == n - k + p) --p;
                    if (p < 0) break;
                    ++idx[p];
                    for (int q = p + 1; q < k; ++q) idx[q] = idx[q - 1] + 1;
                }
            }
        }
        return t;
    }();
    if (n < 0 || n > kMaxDim || k < 0 || k > n) throw std::out_of_range("combi::table: bad (n,k)");
    return all[n][k];
}

inline std::size_t count(int n, int k) { return table(n, k).list.size(); }

// Sort in place; return the sign of the sorting permutation, 0 on a repeat.
inline int sort_sign(std::vector<int>& v) {
    int s = 1;
    for (std::size_t i = 1; i < v.size(); ++i)
        for (std::size_t j = i; j > 0 && v[j - 1] >= v[j]; --j) {
            if (v[j - 1] == v[j]) return 0;
            std::swap(v[j - 1], v[j]);
            s = -s;
        }
    return s;
}

inline unsigned mask_of(const std::vector<int>& v) {
    unsigned m = 0;
    for (int i : v) m |= 1u << i;
    return m;
}

// sign of the permutation taking the concatenation I ++ J to sorted order
inline int merge_sign(const std::vector<int>& I, const std::vector<int>& J) {
    int inv = 0;
    for (int i : I)
        for (int j : J) {
            if (i == j) return 0;
            if (i > j) ++inv;
        }
    return (inv % 2) ? -1 : 1;
}

inline std::vector<int> complement(const std::vector<int>& I, int n) {
    std::vector<int> out;
    unsigned m = mask_of(I);
    for (int i = 0; i < n; ++i)
        if (!(m & (1u << i))) out.push_back(i);
    return out;
}

}  // namespace combi

// ---------------------------------------------------------------------------
// pointwise forms

struct FormValue {
    int dim = 0, degree = 0;
    std::vector<double> v;

    FormValue() = default;
    FormValue(int n, int k) : dim(n), degree(k), v(combi::count(n, k), 0.0) {}

    const std::vector<int>& indices(std::size_t r) const { return combi::table(dim, degree).list[r]; }

    double component(std::vector<int> idx) const {
        int s = combi::sort_sign(idx);
        if (!s) return 0;
        return s * v[combi::table(dim, degree).rank[combi::mask_of(idx)]];
    }

    // a(v_1, ..., v_k) = sum_I a_I det[v_m^{i_n}]
    double on(const std::vector<Eigen::VectorXd>& vecs) const {
        if (static_cast<int>(vecs.size()) != degree) throw std::invalid_argument("FormValue::on: wrong number of vectors");
        if (degree == 0) return v[0];
        double total = 0;
        Eigen::MatrixXd m(degree, degree);
        for (std::size_t r = 0; r < v.size(); ++r) {
            if (v[r] == 0) continue;
            const auto& I = indices(r);
            for (int a = 0; a < degree; ++a)
                for (int b = 0; b < degree; ++b) m(a, b) = vecs[b](I[a]);
            total += v[r] * m.determinant();
        }
        return total;
    }

    double max_abs() const {
        double m = 0;
        for (double x : v) m = std::max(m, std::abs(x));
        return m;
    }

    FormValue& operator+=(const FormValue& o) {
        check(o);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
        return *this;
    }
    FormValue& operator-=(const FormValue& o) {
        check(o);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= o.v[i];
        return *this;
    }
    FormValue& operator*=(double s) {
        for (double& x : v) x *= s;
        return *this;
    }

private:
    void check(const FormValue& o) const {
        if (o.dim != dim || o.degree != degree) throw std::invalid_argument("FormValue: degree mismatch");
    }
};

inline FormValue operator+(FormValue a, const FormValue& b) { return a += b; }
inline FormValue operator-(FormValue a, const FormValue& b) { return a -= b; }
inline FormValue operator*(double s, FormValue a) { return a *= s; }

inline FormValue wedge(const FormValue& a, const FormValue& b) {
    if (a.dim != b.dim) throw std::invalid_argument("wedge: dimension mismatch");
    int n = a.dim, k = a.degree + b.degree;
    if (k > n) return FormValue(n, std::min(k, n));  // zero, degree clipped
    FormValue out(n, k);
    const auto& tk = combi::table(n, k);
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        if (a.v[i] == 0) continue;
        for (std::size_t j = 0; j < b.v.size(); ++j) {
            if (b.v[j] == 0) continue;
            const auto& I = a.indices(i);
            const auto& J = b.indices(j);
            int s = combi::merge_sign(I, J);
            if (!s) continue;
            out.v[tk.rank[combi::mask_of(I) | combi::mask_of(J)]] += s * a.v[i] * b.v[j];
        }
    }
    return out;
}

// <dx^I, dx^J> = det(g^{-1}[I,J]) for increasing I, J
inline double gram_det(const Eigen::MatrixXd& ginv, const std::vector<int>& I, const std::vector<int>& J) {
    int k = static_cast<int>(I.size());
    if (k == 0) return 1;
    Eigen::MatrixXd m(k, k);
    for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) m(a, b) = ginv(I[a], J[b]);
    return m.determinant();
}

inline double inner(const FormValue& a, const FormValue& b, const Eigen::MatrixXd& ginv) {
    if (a.dim != b.dim || a.degree != b.degree) throw std::invalid_argument("inner: degree mismatch");
    double s = 0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        if (a.v[i] == 0) continue;
        for (std::size_t j = 0; j < b.v.size(); ++j) {
            if (b.v[j] == 0) continue;
            s += a.v[i] * b.v[j] * gram_det(ginv, a.indices(i), b.indices(j));
        }
    }
    return s;
}

inline double norm2(const FormValue& a, const Eigen::MatrixXd& ginv) { return inner(a, a, ginv); }

// Hodge star for the metric g; orientation = +1 means dx^0 ^ ... ^ dx^{n-1} is positive.
inline FormValue hodge(const FormValue& a, const Eigen::MatrixXd& g, int orientation = 1) {
    int n = a.dim, k = a.degree;
    Eigen::MatrixXd ginv = g.inverse();
    double vol = std::sqrt(std::abs(g.determinant())) * (orientation >= 0 ? 1 : -1);
    FormValue out(n, n - k);
    const auto& tk = combi::table(n, k);
    const auto& tc = combi::table(n, n - k);
    for (std::size_t i = 0; i < tk.list.size(); ++i) {
        const auto& I = tk.list[i];
        double up = 0;  // a^I
        for (std::size_t j = 0; j < a.v.size(); ++j)
            if (a.v[j] != 0) up += gram_det(ginv, I, tk.list[j]) * a.v[j];
        if (up == 0) continue;
        auto Ic = combi::complement(I, n);
        out.v[tc.rank[combi::mask_of(Ic)]] += vol * combi::merge_sign(I, Ic) * up;
    }
    return out;
}

// ---------------------------------------------------------------------------
// symbolic forms

class KForm {
public:
    KForm() = default;
    KForm(ChartPtr chart, int k) : chart_(std::move(chart)), k_(k) {
        if (!chart_) throw std::invalid_argument("KForm: null chart");
        if (k < 0 || k > chart_->dim()) throw std::invalid_argument("KForm: bad degree");
        c_.assign(combi::count(chart_->dim(), k), Scalar(0.0));
    }

    static KForm function(ChartPtr chart, const Scalar& f) {
        KForm out(std::move(chart), 0);
        out.c_[0] = f;
        return out;
    }
    static KForm dx(ChartPtr chart, int i) {
        KForm out(std::move(chart), 1);
        out.c_.at(i) = 1.0;
        return out;
    }
    // sum_i coeffs[i] dx^i
    static KForm one_form(ChartPtr chart, const std::vector<Scalar>& coeffs) {
        KForm out(std::move(chart), 1);
        if (coeffs.size() != out.c_.size()) throw std::invalid_argument("one_form: wrong number of coefficients");
        out.c_ = coeffs;
        return out;
    }

    const ChartPtr& chart() const { return chart_; }
    int degree() const { return k_; }
    int dim() const { return chart_->dim(); }
    std::size_t size() const { return c_.size(); }
    const std::vector<int>& indices(std::size_t r) const { return combi::table(dim(), k_).list[r]; }

    const Scalar& operator[](std::size_t r) const { return c_[r]; }
    Scalar& operator[](std::size_t r) { return c_[r]; }
    const std::vector<Scalar>& components() const { return c_; }

    // component for an arbitrary (unsorted) index list, with sign
    Scalar component(std::vector<int> idx) const {
        int s = combi::sort_sign(idx);
        if (!s) return 0.0;
        const Scalar& v = c_[rank(idx)];
        return s > 0 ? v : -v;
    }
    void add(std::vector<int> idx, const Scalar& v) {
        int s = combi::sort_sign(idx);
        if (!s) return;
        Scalar& t = c_[rank(idx)];
        t = s > 0 ? t + v : t - v;
    }

    bool structurally_zero() const {
        return std::all_of(c_.begin(), c_.end(), [](const Scalar& s) { return s.is_zero(); });
    }

    FormValue at(std::span<const double> x) const {
        FormValue out(dim(), k_);
        Tape t(c_);
        t.eval(x, out.v.data());
        return out;
    }
    FormValue at(const ChartPoint& p) const { return at(std::span<const double>(p.x)); }

    KForm& operator+=(const KForm& o) {
        same(o);
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
        return *this;
    }
    KForm& operator-=(const KForm& o) {
        same(o);
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
        return *this;
    }
    KForm& operator*=(const Scalar& s) {
        for (auto& x : c_) x = s * x;
        return *this;
    }

    // Replace every component by a black box so that derivatives fall back
    // to central differences.
    KForm to_opaque(double step = 1e-5) const {
        KForm out(chart_, k_);
        auto tape = std::make_shared<Tape>(c_);
        int n = dim();
        for (std::size_t r = 0; r < c_.size(); ++r) {
            if (c_[r].is_const()) {
                out.c_[r] = c_[r];
                continue;
            }
            auto f = [tape, r, n](const double* x) {
                auto v = tape->eval(std::span<const double>(x, n));
                return v[r];
            };
            std::vector<double> lo(n), hi(n);
            for (int i = 0; i < n; ++i) {
                bool per = chart_->period[i] > 0;
                lo[i] = per ? -kInf : chart_->lo[i];
                hi[i] = per ? kInf : chart_->hi[i];
            }
            out.c_[r] = opaque(f, n, lo, hi, step);
        }
        return out;
    }

private:
    int rank(const std::vector<int>& sorted) const {
        if (static_cast<int>(sorted.size()) != k_) throw std::invalid_argument("KForm: index length does not match degree");
        for (int i : sorted)
            if (i < 0 || i >= dim()) throw std::out_of_range("KForm: index out of range");
        return combi::table(dim(), k_).rank[combi::mask_of(sorted)];
    }
    void same(const KForm& o) const {
        if (o.chart_ != chart_ || o.k_ != k_) throw std::invalid_argument("KForm: chart or degree mismatch");
    }

    ChartPtr chart_;
    int k_ = 0;
    std::vector<Scalar> c_;
};

inline KForm operator+(KForm a, const KForm& b) { return a += b; }
inline KForm operator-(KForm a, const KForm& b) { return a -= b; }
inline KForm operator-(KForm a) { return a *= Scalar(-1.0); }
inline KForm operator*(const Scalar& s, KForm a) { return a *= s; }
inline KForm operator*(KForm a, const Scalar& s) { return a *= s; }

inline KForm wedge(const KForm& a, const KForm& b) {
    if (a.chart() != b.chart()) throw std::invalid_argument("wedge: chart mismatch");
    int n = a.dim(), k = a.degree() + b.degree();
    if (k > n) return KForm(a.chart(), n);  // zero top form
    KForm out(a.chart(), k);
    const auto& tk = combi::table(n, k);
    std::vector<std::vector<Scalar>> acc(out.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].is_zero()) continue;
        for (std::size_t j = 0; j < b.size(); ++j) {
            if (b[j].is_zero()) continue;
            int s = combi::merge_sign(a.indices(i), b.indices(j));
            if (!s) continue;
            auto r = tk.rank[combi::mask_of(a.indices(i)) | combi::mask_of(b.indices(j))];
            Scalar p = a[i] * b[j];
            acc[r].push_back(s > 0 ? p : -p);
        }
    }
    for (std::size_t r = 0; r < acc.size(); ++r)
        for (auto& t : acc[r]) out[r] += t;
    return out;
}

template <class... Rest>
KForm wedge(const KForm& a, const KForm& b, const KForm& c, const Rest&... rest) {
    return wedge(wedge(a, b), c, rest...);
}

// exterior derivative
inline KForm d(const KForm& a) {
    int n = a.dim(), k = a.degree();
    if (k == n) return KForm(a.chart(), n);
    KForm out(a.chart(), k + 1);
    for (std::size_t r = 0; r < a.size(); ++r) {
        if (a[r].is_const()) continue;
        const auto& I = a.indices(r);
        for (int j = 0; j < n; ++j) {
            std::vector<int> idx{j};
            idx.insert(idx.end(), I.begin(), I.end());
            Scalar dj = a[r].d(j);
            if (dj.is_zero()) continue;
            out.add(idx, dj);
        }
    }
    return out;
}

inline KForm d(const Scalar& f, const ChartPtr& chart) { return d(KForm::function(chart, f)); }

// ---------------------------------------------------------------------------
// vector fields

struct VectorField {
    ChartPtr chart;
    std::vector<Scalar> c;

    static VectorField zero(ChartPtr ch) {
        int n = ch->dim();
        return {std::move(ch), std::vector<Scalar>(n, Scalar(0.0))};
    }
    static VectorField coordinate(ChartPtr ch, int i) {
        auto v = zero(std::move(ch));
        v.c.at(i) = 1.0;
        return v;
    }

    // X(f) = X^i d_i f
    Scalar apply(const Scalar& f) const {
        Scalar s = 0.0;
        for (std::size_t i = 0; i < c.size(); ++i)
            if (!c[i].is_zero()) s += c[i] * f.d(static_cast<int>(i));
        return s;
    }

    Eigen::VectorXd at(std::span<const double> x) const {
        Tape t(c);
        auto v = t.eval(x);
        return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
};

inline VectorField operator+(VectorField a, const VectorField& b) {
    for (std::size_t i = 0; i < a.c.size(); ++i) a.c[i] += b.c[i];
    return a;
}
inline VectorField operator-(VectorField a, const VectorField& b) {
    for (std::size_t i = 0; i < a.c.size(); ++i) a.c[i] -= b.c[i];
    return a;
}
inline VectorField operator*(const Scalar& s, VectorField a) {
    for (auto& x : a.c) x = s * x;
    return a;
}

inline VectorField lie_bracket(const VectorField& X, const VectorField& Y) {
    auto out = VectorField::zero(X.chart);
    for (std::size_t j = 0; j < X.c.size(); ++j) out.c[j] = X.apply(Y.c[j]) - Y.apply(X.c[j]);
    return out;
}

inline KForm interior(const VectorField& X, const KForm& a) {
    int k = a.degree();
    if (k == 0) return KForm(a.chart(), 0);
    KForm out(a.chart(), k - 1);
    for (std::size_t r = 0; r < a.size(); ++r) {
        if (a[r].is_zero()) continue;
        const auto& I = a.indices(r);
        for (int p = 0; p < k; ++p) {
            const Scalar& x = X.c[I[p]];
            if (x.is_zero()) continue;
            std::vector<int> rest;
            for (int q = 0; q < k; ++q)
                if (q != p) rest.push_back(I[q]);
            Scalar t = x * a[r];
            out.add(rest, (p % 2) ? -t : t);
        }
    }
    return out;
}

// (L_X a)_{i1..ik} = X^j d_j a_{i1..ik} + sum_p a_{i1..j..ik} d_{ip} X^j
inline KForm lie_derivative(const VectorField& X, const KForm& a) {
    int n = a.dim(), k = a.degree();
    KForm out(a.chart(), k);
    for (std::size_t r = 0; r < a.size(); ++r) {
        const auto& I = a.indices(r);
        Scalar s = X.apply(a[r]);
        for (int p = 0; p < k; ++p)
            for (int j = 0; j < n; ++j) {
                Scalar dX = X.c[j].d(I[p]);
                if (dX.is_zero()) continue;
                auto J = I;
                J[p] = j;
                Scalar comp = a.component(J);
                if (comp.is_zero()) continue;
                s += comp * dX;
            }
        out[r] = s;
    }
    return out;
}

// ---------------------------------------------------------------------------
// symbolic linear algebra (small matrices, row-major n x n)

namespace detail {

// determinant of rows[0..] x columns in `mask`, memoised by column mask
inline Scalar det_rows(const std::vector<Scalar>& m, int n, const std::vector<int>& rows, unsigned mask,
                       std::size_t depth, std::map<unsigned, Scalar>& memo) {
    if (depth == rows.size()) return 1.0;
    if (auto it = memo.find(mask); it != memo.end()) return it->second;
    Scalar s = 0.0;
    int pos = 0;
    for (int j = 0; j < n; ++j) {
        if (!(mask & (1u << j))) continue;
        const Scalar& e = m[rows[depth] * n + j];
        if (!e.is_zero()) {
            Scalar t = e * det_rows(m, n, rows, mask & ~(1u << j), depth + 1, memo);
            s = (pos % 2) ? s - t : s + t;
        }
        ++pos;
    }
    memo[mask] = s;
    return s;
}

}  // namespace detail

inline Scalar sym_det(const std::vector<Scalar>& m, int n) {
    std::vector<int> rows(n);
    for (int i = 0; i < n; ++i) rows[i] = i;
    std::map<unsigned, Scalar> memo;
    return detail::det_rows(m, n, rows, (1u << n) - 1, 0, memo);
}

// inverse via the adjugate; det_out receives the determinant
inline std::vector<Scalar> sym_inverse(const std::vector<Scalar>& m, int n, Scalar* det_out = nullptr) {
    Scalar det = sym_det(m, n);
    if (det.is_zero()) throw std::domain_error("sym_inverse: structurally singular matrix");
    std::vector<Scalar> inv(n * n, Scalar(0.0));
    for (int i = 0; i < n; ++i) {
        std::vector<int> rows;
        for (int r = 0; r < n; ++r)
            if (r != i) rows.push_back(r);
        for (int j = 0; j < n; ++j) {
            std::map<unsigned, Scalar> memo;
            Scalar minor = detail::det_rows(m, n, rows, ((1u << n) - 1) & ~(1u << j), 0, memo);
            if (minor.is_zero()) continue;
            // inv[j][i] = (-1)^{i+j} M_ij / det
            inv[j * n + i] = ((i + j) % 2 ? -minor : minor) / det;
        }
    }
    if (det_out) *det_out = det;
    return inv;
}

// ---------------------------------------------------------------------------
// metrics

struct MetricField {
    ChartPtr chart;
    std::vector<Scalar> m;  // row-major, symmetric

    explicit MetricField(ChartPtr ch) : chart(std::move(ch)) {
        int n = chart->dim();
        m.assign(n * n, Scalar(0.0));
    }

    int dim() const { return chart->dim(); }
    const Scalar& operator()(int i, int j) const { return m[i * dim() + j]; }

    // g += coef * (a (x) b + b (x) a) / 2
    void add_sym(const Scalar& coef, const KForm& a, const KForm& b) {
        int n = dim();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                Scalar t = a[i] * b[j] + b[i] * a[j];
                if (t.is_zero()) continue;
                m[i * n + j] += Scalar(0.5) * coef * t;
            }
    }
    void add_square(const Scalar& coef, const KForm& a) {
        int n = dim();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                Scalar t = a[i] * a[j];
                if (t.is_zero()) continue;
                m[i * n + j] += coef * t;
            }
    }

    Eigen::MatrixXd at(std::span<const double> x) const {
        int n = dim();
        Tape t(m);
        auto v = t.eval(x);
        Eigen::MatrixXd out(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) out(i, j) = v[i * n + j];
        return out;
    }

    double apply(std::span<const double> x, const Eigen::VectorXd& u, const Eigen::VectorXd& w) const {
        return u.dot(at(x) * w);
    }

    std::vector<Scalar> inverse(Scalar* det_out = nullptr) const { return sym_inverse(m, dim(), det_out); }
};

// W_ij = omega(d_i, d_j)
inline Eigen::MatrixXd two_form_matrix(const FormValue& w) {
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(w.dim, w.dim);
    for (std::size_t r = 0; r < w.v.size(); ++r) {
        const auto& I = w.indices(r);
        W(I[0], I[1]) = w.v[r];
        W(I[1], I[0]) = -w.v[r];
    }
    return W;
}

// J = -g^{-1} W, so that omega(X, Y) = g(JX, Y).  Flat C^n with
// omega = sum dx^dy gives J d_x = d_y.
inline Eigen::MatrixXd complex_structure(const Eigen::MatrixXd& g, const FormValue& omega) {
    return -g.inverse() * two_form_matrix(omega);
}

inline double complex_structure_defect(const Eigen::MatrixXd& J) {
    Eigen::MatrixXd e = J * J + Eigen::MatrixXd::Identity(J.rows(), J.cols());
    return e.cwiseAbs().maxCoeff();
}

// Symbolic J (row-major, J[i*n+j] = J^i_j) from a metric and a Kahler form.
inline std::vector<Scalar> complex_structure_field(const MetricField& g, const KForm& omega) {
    int n = g.dim();
    auto ginv = g.inverse();
    std::vector<Scalar> W(n * n, Scalar(0.0));
    for (std::size_t r = 0; r < omega.size(); ++r) {
        const auto& I = omega.indices(r);
        W[I[0] * n + I[1]] = omega[r];
        W[I[1] * n + I[0]] = -omega[r];
    }
    std::vector<Scalar> J(n * n, Scalar(0.0));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            Scalar s = 0.0;
            for (int k = 0; k < n; ++k)
                if (!ginv[i * n + k].is_zero() && !W[k * n + j].is_zero()) s += ginv[i * n + k] * W[k * n + j];
            J[i * n + j] = -s;
        }
    return J;
}

// d^c f = df o J
inline KForm dc(const Scalar& f, const std::vector<Scalar>& J, const ChartPtr& chart) {
    int n = chart->dim();
    KForm out(chart, 1);
    for (int j = 0; j < n; ++j) {
        Scalar s = 0.0;
        for (int i = 0; i < n; ++i) {
            const Scalar& Jij = J[i * n + j];
            if (Jij.is_zero()) continue;
            Scalar di = f.d(i);
            if (di.is_zero()) continue;
            s += Jij * di;
        }
        out[j] = s;
    }
    return out;
}

// ---------------------------------------------------------------------------
// complex and matrix-valued forms

struct CForm {
    KForm re, im;

    static CForm zero(const ChartPtr& ch, int k) { return {KForm(ch, k), KForm(ch, k)}; }
    CForm& operator+=(const CForm& o) {
        re += o.re;
        im += o.im;
        return *this;
    }
    int degree() const { return re.degree(); }
};

inline CForm wedge(const CForm& a, const CForm& b) {
    return {wedge(a.re, b.re) - wedge(a.im, b.im), wedge(a.re, b.im) + wedge(a.im, b.re)};
}
inline CForm d(const CForm& a) { return {d(a.re), d(a.im)}; }

// n x n matrix of complex forms, e.g. a connection (1-forms) or its curvature.
struct MatrixForm {
    int n = 0;
    std::vector<CForm> e;  // row-major

    MatrixForm() = default;
    MatrixForm(const ChartPtr& ch, int size, int degree) : n(size), e(size * size, CForm::zero(ch, degree)) {}

    CForm& operator()(int i, int j) { return e[i * n + j]; }
    const CForm& operator()(int i, int j) const { return e[i * n + j]; }
};

// F = dA + A ^ A
inline MatrixForm matrix_curvature(const MatrixForm& A) {
    const ChartPtr& ch = A.e.at(0).re.chart();
    MatrixForm F(ch, A.n, A.e[0].degree() + 1);
    for (int i = 0; i < A.n; ++i)
        for (int j = 0; j < A.n; ++j) {
            CForm f = d(A(i, j));
            for (int k = 0; k < A.n; ++k) f += wedge(A(i, k), A(k, j));
            F(i, j) = f;
        }
    return F;
}

// All components of a list of forms compiled into one tape.
class FormTape {
public:
    explicit FormTape(const std::vector<KForm>& forms) {
        std::vector<Scalar> all;
        for (auto& f : forms) {
            shape_.push_back({f.dim(), f.degree()});
            all.insert(all.end(), f.components().begin(), f.components().end());
        }
        tape_ = Tape(all);
    }

    std::vector<FormValue> eval(std::span<const double> x) const {
        auto v = tape_.eval(x);
        std::vector<FormValue> out;
        std::size_t off = 0;
        for (auto [n, k] : shape_) {
            FormValue f(n, k);
            std::copy(v.begin() + off, v.begin() + off + f.v.size(), f.v.begin());
            off += f.v.size();
            out.push_back(std::move(f));
        }
        return out;
    }

private:
    Tape tape_;
    std::vector<std::pair<int, int>> shape_;
};

// Restriction of a pointwise form to the span of the given tangent vectors:
// the values a(v_{i1}, ..., v_{ik}) over increasing index tuples.
inline std::vector<double> restrict_to(const FormValue& a, const std::vector<Eigen::VectorXd>& gens) {
    int m = static_cast<int>(gens.size());
    std::vector<double> out;
    if (a.degree > m) return out;
    for (const auto& I : combi::table(m, a.degree).list) {
        std::vector<Eigen::VectorXd> vs;
        for (int i : I) vs.push_back(gens[i]);
        out.push_back(a.on(vs));
    }
    return out;
}

}  // namespace khym
