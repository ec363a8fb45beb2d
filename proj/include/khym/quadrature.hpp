#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <queue>
#include <vector>

namespace khym::quad {

struct QuadResult {
    double value = 0;
    double error = 0;
    int evaluations = 0;
    bool converged = true;
};

namespace detail {
// 15-point Kronrod nodes on [-1,1] (non-negative half) with the embedded 7-point Gauss rule
constexpr std::array<double, 8> xk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> wk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> wg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
    double a, b, value, error;
    bool operator<(const Segment& o) const { return error < o.error; }
};

inline Segment gk15(const std::function<double(double)>& f, double a, double b) {
    double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double fc = f(c);
    double resk = fc * wk[7], resg = fc * wg[3];
    for (int j = 0; j < 7; ++j) {
        double dx = h * xk[j];
        double f1 = f(c - dx), f2 = f(c + dx);
        resk += wk[j] * (f1 + f2);
        if (j % 2 == 1) resg += wg[j / 2] * (f1 + f2);
    }
    return {a, b, resk * h, std::abs((resk - resg) * h)};
}
}  // namespace detail

// Adaptive Gauss-Kronrod (G7K15) with a global error priority queue.
inline QuadResult gauss_kronrod(const std::function<double(double)>& f, double a, double b,
                                double rel_tol = 1e-10, double abs_tol = 1e-300, int max_segments = 2000) {
    QuadResult out;
    if (a == b) return out;
    double sign = 1;
    if (b < a) {
        std::swap(a, b);
        sign = -1;
    }
    std::priority_queue<detail::Segment> heap;
    auto s = detail::gk15(f, a, b);
    heap.push(s);
    double total = s.value, err = s.error;
    int nseg = 1;
    while (err > std::max(abs_tol, rel_tol * std::abs(total))) {
        if (nseg >= max_segments) {
            out.converged = false;
            break;
        }
        auto top = heap.top();
        heap.pop();
        double mid = 0.5 * (top.a + top.b);
        if (mid <= top.a || mid >= top.b) {
            heap.push(top);
            out.converged = false;
            break;
        }
        auto l = detail::gk15(f, top.a, mid), r = detail::gk15(f, mid, top.b);
        total += l.value + r.value - top.value;
        err += l.error + r.error - top.error;
        heap.push(l);
        heap.push(r);
        ++nseg;
    }
    // re-sum for a clean total (fixed order: sort by left endpoint)
    std::vector<detail::Segment> segs;
    while (!heap.empty()) {
        segs.push_back(heap.top());
        heap.pop();
    }
    std::sort(segs.begin(), segs.end(), [](auto& x, auto& y) { return x.a < y.a; });
    double v = 0, e = 0;
    for (auto& sg : segs) {
        v += sg.value;
        e += sg.error;
    }
    out.value = sign * v;
    out.error = e;
    out.evaluations = 15 * (2 * nseg - 1);
    return out;
}

// Trapezoid rule over a full period, doubling until two successive estimates agree.
// Spectrally accurate for smooth periodic integrands.
inline QuadResult periodic_trapezoid(const std::function<double(double)>& f, double a, double period,
                                     double rel_tol = 1e-10, int n0 = 16, int n_max = 1 << 12) {
    QuadResult out;
    int n = n0;
    double h = period / n;
    double sum = 0;
    for (int i = 0; i < n; ++i) sum += f(a + i * h);
    double est = sum * h;
    out.evaluations = n;
    while (n < n_max) {
        double h2 = period / (2 * n);
        double add = 0;
        for (int i = 0; i < n; ++i) add += f(a + (2 * i + 1) * h2);
        out.evaluations += n;
        sum += add;
        n *= 2;
        double next = sum * h2;
        double diff = std::abs(next - est);
        est = next;
        if (diff <= rel_tol * std::abs(est) || diff < 1e-300) {
            out.value = est;
            out.error = diff;
            return out;
        }
    }
    out.value = est;
    out.converged = false;
    return out;
}

}  // namespace khym::quad
