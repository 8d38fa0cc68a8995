#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "modalml/matrix.hpp"

namespace oracle {

struct Split {
    bool found = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    double sse = std::numeric_limits<double>::infinity();
};

/// Exhaustive search over every feature and every midpoint between distinct
/// sorted values, scoring the summed squared error of both children around
/// their means. Ties keep the first candidate in (feature, threshold) order.
inline Split best_split(const modalml::RMatrix& x, const modalml::RMatrix& y) {
    Split best;
    const std::size_t n = x.rows();
    for (std::size_t f = 0; f < x.cols(); ++f) {
        std::vector<double> v;
        for (std::size_t i = 0; i < n; ++i) v.push_back(x(i, f));
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        for (std::size_t k = 0; k + 1 < v.size(); ++k) {
            const double t = v[k] + (v[k + 1] - v[k]) / 2;
            double sse = 0.0;
            for (int side = 0; side < 2; ++side) {
                for (std::size_t o = 0; o < y.cols(); ++o) {
                    double s = 0.0, c = 0.0;
                    for (std::size_t i = 0; i < n; ++i)
                        if ((x(i, f) < t) == (side == 0)) {
                            s += y(i, o);
                            c += 1;
                        }
                    const double mean = s / c;
                    for (std::size_t i = 0; i < n; ++i)
                        if ((x(i, f) < t) == (side == 0)) sse += (y(i, o) - mean) * (y(i, o) - mean);
                }
            }
            if (!best.found || sse < best.sse - 1e-12 * std::max(1.0, best.sse)) best = {true, f, t, sse};
        }
    }
    return best;
}

/// Summed squared error of a given split, for tie comparisons.
inline double split_sse(const modalml::RMatrix& x, const modalml::RMatrix& y, std::size_t f, double t) {
    double sse = 0.0;
    for (int side = 0; side < 2; ++side)
        for (std::size_t o = 0; o < y.cols(); ++o) {
            double s = 0.0, c = 0.0;
            for (std::size_t i = 0; i < x.rows(); ++i)
                if ((x(i, f) < t) == (side == 0)) {
                    s += y(i, o);
                    c += 1;
                }
            if (c == 0) continue;
            for (std::size_t i = 0; i < x.rows(); ++i)
                if ((x(i, f) < t) == (side == 0)) sse += (y(i, o) - s / c) * (y(i, o) - s / c);
        }
    return sse;
}

/// Polynomial sum_k c[k] x^k.
inline double poly(const std::vector<double>& c, double x) {
    double v = 0.0;
    for (std::size_t k = c.size(); k-- > 0;) v = v * x + c[k];
    return v;
}

} // namespace oracle
