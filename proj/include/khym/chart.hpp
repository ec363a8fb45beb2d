#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "specfun.hpp"

namespace khym {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Chart {
    std::string name;
    std::vector<std::string> coords;
    std::vector<double> lo, hi;        // open coordinate ranges (possibly infinite)
    std::vector<double> period;        // 0 = not periodic
    std::vector<double> sample_lo, sample_hi;  // finite box used for random sampling

    int dim() const { return static_cast<int>(coords.size()); }

    int index(const std::string& c) const {
        for (int i = 0; i < dim(); ++i)
            if (coords[i] == c) return i;
        throw std::out_of_range("chart " + name + " has no coordinate " + c);
    }

    void validate() const {
        std::size_t n = coords.size();
        if (n != 4 && n != 6) throw std::invalid_argument("chart " + name + ": dimension must be 4 or 6");
        if (lo.size() != n || hi.size() != n || period.size() != n || sample_lo.size() != n ||
            sample_hi.size() != n)
            throw std::invalid_argument("chart " + name + ": range arrays do not match dimension");
        for (std::size_t i = 0; i < n; ++i) {
            if (!(lo[i] < hi[i])) throw std::invalid_argument("chart " + name + ": empty range for " + coords[i]);
            if (!(sample_lo[i] < sample_hi[i]) || !std::isfinite(sample_lo[i]) || !std::isfinite(sample_hi[i]))
                throw std::invalid_argument("chart " + name + ": bad sampling box for " + coords[i]);
        }
    }
};

using ChartPtr = std::shared_ptr<const Chart>;

// Builder: one call per coordinate.
class ChartBuilder {
public:
    explicit ChartBuilder(std::string name) { c_.name = std::move(name); }
    ChartBuilder& coord(std::string n, double lo, double hi, double slo, double shi, double period = 0) {
        c_.coords.push_back(std::move(n));
        c_.lo.push_back(lo);
        c_.hi.push_back(hi);
        c_.period.push_back(period);
        c_.sample_lo.push_back(slo);
        c_.sample_hi.push_back(shi);
        return *this;
    }
    ChartPtr build() const {
        c_.validate();
        return std::make_shared<const Chart>(c_);
    }

private:
    Chart c_;
};

struct ChartPoint {
    ChartPtr chart;
    std::vector<double> x;

    double operator[](int i) const { return x[i]; }
};

inline ChartPoint make_point(const ChartPtr& chart, std::vector<double> x) {
    if (static_cast<int>(x.size()) != chart->dim()) throw std::invalid_argument("make_point: wrong number of coordinates");
    for (int i = 0; i < chart->dim(); ++i) {
        if (chart->period[i] > 0) {
            double p = chart->period[i];
            x[i] = chart->lo[i] + std::fmod(std::fmod(x[i] - chart->lo[i], p) + p, p);
            continue;
        }
        if (!(x[i] > chart->lo[i] && x[i] < chart->hi[i]))
            throw DomainError("point outside chart " + chart->name + " in coordinate " + chart->coords[i]);
    }
    return {chart, std::move(x)};
}

struct GridSpec {
    int points = 200;
    double margin = 0.05;     // fraction of each sampling interval trimmed at both ends
    std::uint64_t seed = 20240601;
};

// Uniform double in [0,1) from the top 53 bits; independent of the
// standard library's distribution implementation.
inline double unit_double(std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

inline std::vector<ChartPoint> sample_points(const ChartPtr& chart, const GridSpec& grid) {
    std::mt19937_64 gen(grid.seed);
    std::vector<ChartPoint> out;
    out.reserve(grid.points);
    int n = chart->dim();
    for (int k = 0; k < grid.points; ++k) {
        std::vector<double> x(n);
        for (int i = 0; i < n; ++i) {
            double a = chart->sample_lo[i], b = chart->sample_hi[i];
            double m = (chart->period[i] > 0) ? 0.0 : grid.margin * (b - a);
            x[i] = a + m + (b - a - 2 * m) * unit_double(gen);
        }
        out.push_back(make_point(chart, std::move(x)));
    }
    return out;
}

}  // namespace khym
