#pragma once

// B-splines in B-form: basis evaluation, interpolation, least-squares
// approximation with knot re-placement, two-step tensor-product fits, and
// families of curves/surfaces indexed by the remaining features.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "modalml/error.hpp"
#include "modalml/matrix.hpp"

namespace modalml::spline {

/// Non-decreasing knot sequence of a spline of order k (degree k - 1).
struct KnotVector {
    std::vector<double> t;
    int k = 4;

    std::size_t n_basis() const noexcept { return t.size() - std::size_t(k); }
    double lo() const { return t[std::size_t(k) - 1]; }
    double hi() const { return t[n_basis()]; }

    void validate() const {
        if (k < 1) throw DomainError("KnotVector: order must be >= 1");
        if (t.size() < 2 * std::size_t(k)) throw DomainError("KnotVector: fewer than 2k knots");
        for (std::size_t i = 1; i < t.size(); ++i)
            if (!(t[i] >= t[i - 1])) throw DomainError("KnotVector: knots must be non-decreasing");
        if (!(lo() < hi())) throw DomainError("KnotVector: empty parameter span");
        std::size_t run = 1;
        for (std::size_t i = 1; i + 1 < t.size(); ++i) {
            run = t[i] == t[i - 1] ? run + 1 : 1;
            if (run > std::size_t(k)) throw DomainError("KnotVector: knot multiplicity exceeds the order");
        }
    }

    friend bool operator==(const KnotVector&, const KnotVector&) = default;
};

/// Knots from break points: boundary breaks repeated k times, interior simple.
inline KnotVector augment(std::span<const double> breaks, int k) {
    if (breaks.size() < 2) throw DomainError("augment: at least two break points are required");
    KnotVector kv;
    kv.k = k;
    kv.t.insert(kv.t.end(), std::size_t(k), breaks.front());
    kv.t.insert(kv.t.end(), breaks.begin() + 1, breaks.end() - 1);
    kv.t.insert(kv.t.end(), std::size_t(k), breaks.back());
    kv.validate();
    return kv;
}

inline std::vector<double> uniform_breaks(double lo, double hi, std::size_t n_segments) {
    std::vector<double> b(n_segments + 1);
    for (std::size_t i = 0; i <= n_segments; ++i) b[i] = lo + (hi - lo) * double(i) / double(n_segments);
    b.back() = hi;
    return b;
}

/// Interpolation knots by the averaging rule: interior knots are the means of
/// k - 1 consecutive interior data sites.
inline KnotVector averaging_knots(std::span<const double> xs, int k) {
    const std::size_t n = xs.size();
    if (n < std::size_t(k)) throw DomainError("averaging_knots: need at least k sites");
    KnotVector kv;
    kv.k = k;
    kv.t.assign(std::size_t(k), xs.front());
    for (std::size_t j = 1; j + std::size_t(k) <= n; ++j) {
        double s = 0.0;
        for (std::size_t q = j; q < j + std::size_t(k) - 1; ++q) s += xs[q];
        kv.t.push_back(s / double(k - 1));
    }
    kv.t.insert(kv.t.end(), std::size_t(k), xs.back());
    kv.validate();
    return kv;
}

/// Span index i with t[i] <= x < t[i+1]; the right end maps to the last span.
inline std::size_t find_span(const KnotVector& kv, double x) {
    if (!(x >= kv.lo() && x <= kv.hi()))
        throw DomainError("B-spline: x = " + std::to_string(x) + " outside [" + std::to_string(kv.lo()) + ", " +
                          std::to_string(kv.hi()) + "]");
    const std::size_t last = kv.n_basis() - 1;
    if (x >= kv.hi()) {
        std::size_t i = last;
        while (kv.t[i] == kv.t[i + 1]) --i;
        return i;
    }
    const auto it = std::upper_bound(kv.t.begin(), kv.t.end(), x);
    return std::min(static_cast<std::size_t>(it - kv.t.begin()) - 1, last);
}

/// The k basis functions non-zero on span i, B_{i-k+1..i}(x).
inline void nonzero_basis(const KnotVector& kv, std::size_t i, double x, std::span<double> out) {
    const auto k = std::size_t(kv.k);
    double left[32], right[32];
    if (k > 32) throw DomainError("B-spline: order above 32 is not supported");
    out[0] = 1.0;
    for (std::size_t j = 1; j < k; ++j) {
        left[j] = x - kv.t[i + 1 - j];
        right[j] = kv.t[i + j] - x;
        double saved = 0.0;
        for (std::size_t r = 0; r < j; ++r) {
            const double den = right[r + 1] + left[j - r];
            const double tmp = den != 0.0 ? out[r] / den : 0.0;
            out[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        out[j] = saved;
    }
}

/// B_{j,k}(x) by the Cox-de Boor recursion.
inline double basis(const KnotVector& kv, std::size_t j, double x) {
    if (j >= kv.n_basis()) throw DomainError("basis: index out of range");
    const std::size_t i = find_span(kv, x);
    const std::size_t first = i + 1 - std::size_t(kv.k);
    if (j < first || j > i) return 0.0;
    double n[32];
    nonzero_basis(kv, i, x, std::span<double>(n, std::size_t(kv.k)));
    return n[j - first];
}

struct BSplineCurve {
    KnotVector knots;
    std::vector<double> coef;

    int order() const noexcept { return knots.k; }

    double operator()(double x) const {
        const std::size_t i = find_span(knots, x);
        double n[32];
        const auto k = std::size_t(knots.k);
        nonzero_basis(knots, i, x, std::span<double>(n, k));
        double s = 0.0;
        for (std::size_t r = 0; r < k; ++r) s += coef[i + 1 - k + r] * n[r];
        return s;
    }

    /// Derivative as a spline of order k - 1 on the inner knots.
    BSplineCurve derivative() const {
        const int k = knots.k;
        if (k < 2) throw DomainError("derivative: order-1 spline has no derivative spline");
        BSplineCurve d;
        d.knots.k = k - 1;
        d.knots.t.assign(knots.t.begin() + 1, knots.t.end() - 1);
        for (std::size_t j = 0; j + 1 < coef.size(); ++j) {
            const double den = knots.t[j + std::size_t(k)] - knots.t[j + 1];
            d.coef.push_back(den > 0.0 ? double(k - 1) * (coef[j + 1] - coef[j]) / den : 0.0);
        }
        return d;
    }

    void validate() const {
        knots.validate();
        if (coef.size() != knots.n_basis()) throw DimensionError("BSplineCurve: J must equal len(knots) - k");
    }

    friend bool operator==(const BSplineCurve&, const BSplineCurve&) = default;
};

namespace detail {

inline RMatrix design_matrix(const KnotVector& kv, std::span<const double> sites) {
    RMatrix b(sites.size(), kv.n_basis());
    double n[32];
    const auto k = std::size_t(kv.k);
    for (std::size_t r = 0; r < sites.size(); ++r) {
        const std::size_t i = find_span(kv, sites[r]);
        nonzero_basis(kv, i, sites[r], std::span<double>(n, k));
        for (std::size_t q = 0; q < k; ++q) b(r, i + 1 - k + q) = n[q];
    }
    return b;
}

// Least-squares coefficients for every column of values (sites x c), by the
// normal equations; the square case is solved directly.
inline RMatrix fit_coefficients(const KnotVector& kv, std::span<const double> sites, const RMatrix& values) {
    modalml::detail::require_dims(values.rows() == sites.size(), "spline fit: values/sites length mismatch");
    const RMatrix b = design_matrix(kv, sites);
    const std::size_t n = kv.n_basis(), c = values.cols();
    if (n > sites.size())
        throw DomainError("spline fit: " + std::to_string(n) + " coefficients for " + std::to_string(sites.size()) +
                          " data sites (rank-deficient design matrix)");
    const bool square = n == sites.size();
    const RMatrix g = square ? b : b.transposed() * b;
    const RMatrix rhs = square ? values : b.transposed() * values;
    const LuDecomposition<double> lu(g);
    if (lu.singular() || lu.pivot_ratio() < 1e-13)
        throw NumericalError(square ? "spline interpolation: singular collocation matrix"
                                    : "spline approximation: rank-deficient design matrix");
    RMatrix out(n, c);
    std::vector<double> col(n);
    for (std::size_t q = 0; q < c; ++q) {
        for (std::size_t r = 0; r < n; ++r) col[r] = rhs(r, q);
        const auto s = lu.solve(col);
        for (std::size_t r = 0; r < n; ++r) out(r, q) = s[r];
    }
    return out;
}

inline void check_sites(std::span<const double> xs, std::span<const double> ys, const char* who) {
    if (xs.size() != ys.size()) throw DimensionError(std::string(who) + ": xs and ys lengths differ");
    for (std::size_t i = 0; i < xs.size(); ++i)
        if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) throw DomainError(std::string(who) + ": non-finite data");
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (!(xs[i] > xs[i - 1])) throw DomainError(std::string(who) + ": sites must be strictly increasing");
}

inline BSplineCurve fit_curve(const KnotVector& kv, std::span<const double> xs, std::span<const double> ys) {
    RMatrix v(ys.size(), 1);
    for (std::size_t i = 0; i < ys.size(); ++i) v(i, 0) = ys[i];
    const RMatrix a = fit_coefficients(kv, xs, v);
    return {kv, a.col(0)};
}

} // namespace detail

/// Spline of order k through every data point (1DLI).
inline BSplineCurve interpolate_1d(std::span<const double> xs, std::span<const double> ys, int k = 4) {
    detail::check_sites(xs, ys, "interpolate_1d");
    if (xs.size() < std::size_t(k)) throw DomainError("interpolate_1d: need at least k data points");
    return detail::fit_curve(averaging_knots(xs, k), xs, ys);
}

/// Break points that equidistribute |f^(k)|^(1/k) for the current fit f,
/// estimating f^(k) from the jumps of the piecewise-constant f^(k-1).
inline std::vector<double> newknt_breaks(const BSplineCurve& f) {
    std::vector<double> br;
    for (std::size_t i = std::size_t(f.order()) - 1; i <= f.knots.n_basis(); ++i)
        if (br.empty() || f.knots.t[i] > br.back()) br.push_back(f.knots.t[i]);
    const std::size_t l = br.size() - 1;
    if (l < 2) return br;
    BSplineCurve d = f;
    for (int q = 1; q < f.order(); ++q) d = d.derivative();
    std::vector<double> dv(l);
    for (std::size_t i = 0; i < l; ++i) dv[i] = d(0.5 * (br[i] + br[i + 1]));
    // Jump at interior break b, scaled by the span of its two intervals.
    std::vector<double> jump(l + 1, 0.0);
    for (std::size_t b = 1; b < l; ++b) jump[b] = std::abs(dv[b] - dv[b - 1]) / (br[b + 1] - br[b - 1]);
    jump[0] = jump[1];
    jump[l] = jump[l - 1];
    const double inv_k = 1.0 / double(f.order());
    std::vector<double> cum(l + 1, 0.0);
    for (std::size_t i = 0; i < l; ++i)
        cum[i + 1] = cum[i] + std::pow(jump[i] + jump[i + 1], inv_k) * (br[i + 1] - br[i]);
    if (!(cum[l] > 0.0)) return br;
    std::vector<double> out{br.front()};
    std::size_t seg = 0;
    for (std::size_t j = 1; j < l; ++j) {
        const double target = cum[l] * double(j) / double(l);
        while (cum[seg + 1] < target) ++seg;
        const double w = (target - cum[seg]) / (cum[seg + 1] - cum[seg]);
        out.push_back(br[seg] + w * (br[seg + 1] - br[seg]));
    }
    out.push_back(br.back());
    return out;
}

/// Breaks that equidistribute |f^(k)|^(1/k) estimated from k-th divided
/// differences of the data itself, with a floor of 5% of the mean density so
/// flat stretches still get breaks.
inline std::vector<double> divided_difference_breaks(std::span<const double> xs, std::span<const double> ys,
                                                     std::size_t n_segments, int k) {
    const std::size_t n = xs.size(), kk = std::size_t(k);
    if (n < kk + 1 || n_segments < 2) return uniform_breaks(xs.front(), xs.back(), n_segments);
    std::vector<double> dd(ys.begin(), ys.end());
    for (std::size_t q = 1; q <= kk; ++q)
        for (std::size_t i = 0; i + q < n; ++i) dd[i] = (dd[i + 1] - dd[i]) / (xs[i + q] - xs[i]) * double(q);
    // Density on data interval [x_j, x_j+1]: windows covering it, averaged.
    std::vector<double> dens(n - 1, 0.0);
    for (std::size_t j = 0; j + 1 < n; ++j) {
        const std::size_t lo = j + 1 > kk ? j + 1 - kk : 0, hi = std::min(j, n - 1 - kk);
        double s = 0.0;
        for (std::size_t i = lo; i <= hi; ++i) s += std::pow(std::abs(dd[i]), 1.0 / double(k));
        dens[j] = s / double(hi - lo + 1);
    }
    double mean = 0.0;
    for (std::size_t j = 0; j + 1 < n; ++j) mean += dens[j] * (xs[j + 1] - xs[j]);
    mean /= xs.back() - xs.front();
    if (!(mean > 0.0) || !std::isfinite(mean)) return uniform_breaks(xs.front(), xs.back(), n_segments);
    std::vector<double> cum(n, 0.0);
    for (std::size_t j = 0; j + 1 < n; ++j) cum[j + 1] = cum[j] + (dens[j] + 0.05 * mean) * (xs[j + 1] - xs[j]);
    std::vector<double> out{xs.front()};
    std::size_t seg = 0;
    for (std::size_t b = 1; b < n_segments; ++b) {
        const double target = cum[n - 1] * double(b) / double(n_segments);
        while (cum[seg + 1] < target) ++seg;
        const double w = (target - cum[seg]) / (cum[seg + 1] - cum[seg]);
        const double v = xs[seg] + w * (xs[seg + 1] - xs[seg]);
        if (v > out.back()) out.push_back(v);
    }
    if (xs.back() > out.back()) out.push_back(xs.back());
    return out;
}

/// Least-squares spline with n_segments uniform segments (1DLA). With
/// optimize_knots the breaks are re-placed once by newknt_breaks and once by
/// divided_difference_breaks; the fit with the smallest squared residual
/// among the three is kept (uniform wins ties).
inline BSplineCurve approximate_1d(std::span<const double> xs, std::span<const double> ys, std::size_t n_segments,
                                   int k = 4, bool optimize_knots = true) {
    detail::check_sites(xs, ys, "approximate_1d");
    if (n_segments < 1) throw DomainError("approximate_1d: n_segments must be >= 1");
    if (xs.size() < 2) throw DomainError("approximate_1d: need at least two data points");
    BSplineCurve f = detail::fit_curve(augment(uniform_breaks(xs.front(), xs.back(), n_segments), k), xs, ys);
    if (!optimize_knots || n_segments < 2) return f;
    auto sse = [&](const BSplineCurve& c) {
        double s = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) s += (c(xs[i]) - ys[i]) * (c(xs[i]) - ys[i]);
        return s;
    };
    double best = sse(f);
    const auto candidates = {newknt_breaks(f), divided_difference_breaks(xs, ys, n_segments, k)};
    for (const auto& br : candidates) {
        if (br.size() != n_segments + 1) continue;
        try {
            auto g = detail::fit_curve(augment(br, k), xs, ys);
            const double e = sse(g);
            if (e < best) best = e, f = std::move(g);
        } catch (const Error&) {
            // Re-placed breaks left a span without enough sites.
        }
    }
    return f;
}

/// Default segment count max(4, ceil(n_sites / 5)), capped so the fit stays
/// determined.
inline std::size_t default_segments(std::size_t n_sites, int k = 4) {
    std::size_t j = std::max<std::size_t>(4, (n_sites + 4) / 5);
    if (n_sites + 1 > std::size_t(k)) j = std::min(j, n_sites + 1 - std::size_t(k));
    return std::max<std::size_t>(j, 1);
}

struct TensorSurface {
    KnotVector kx, ky;
    RMatrix coef;  ///< J x V

    double operator()(double x, double y) const {
        const std::size_t i = find_span(kx, x), v = find_span(ky, y);
        const auto k = std::size_t(kx.k), l = std::size_t(ky.k);
        double bx[32], by[32];
        nonzero_basis(kx, i, x, std::span<double>(bx, k));
        nonzero_basis(ky, v, y, std::span<double>(by, l));
        double s = 0.0;
        for (std::size_t a = 0; a < k; ++a) {
            double inner = 0.0;
            for (std::size_t b = 0; b < l; ++b) inner += coef(i + 1 - k + a, v + 1 - l + b) * by[b];
            s += bx[a] * inner;
        }
        return s;
    }

    void validate() const {
        kx.validate();
        ky.validate();
        if (coef.rows() != kx.n_basis() || coef.cols() != ky.n_basis())
            throw DimensionError("TensorSurface: coefficient matrix does not match the knot vectors");
    }

    friend bool operator==(const TensorSurface&, const TensorSurface&) = default;
};

enum class Direction { x_first, y_first };

/// Two-step tensor-product least-squares fit of z (x_sites x y_sites): one
/// spline in x per y column, then splines in y through those coefficients
/// (or the reverse order).
inline TensorSurface fit_2d(std::span<const double> x_sites, std::span<const double> y_sites, const RMatrix& z,
                            const KnotVector& kx, const KnotVector& ky, Direction dir = Direction::x_first) {
    if (z.rows() != x_sites.size() || z.cols() != y_sites.size())
        throw DimensionError("fit_2d: z must be len(x_sites) x len(y_sites)");
    if (!all_finite(z)) throw DomainError("fit_2d: incomplete grid (non-finite values)");
    kx.validate();
    ky.validate();
    TensorSurface s{kx, ky, {}};
    if (dir == Direction::x_first) {
        const RMatrix c = detail::fit_coefficients(kx, x_sites, z);             // J x Ny
        s.coef = detail::fit_coefficients(ky, y_sites, c.transposed()).transposed();  // J x V
    } else {
        const RMatrix c = detail::fit_coefficients(ky, y_sites, z.transposed());  // V x Nx
        s.coef = detail::fit_coefficients(kx, x_sites, c.transposed());           // J x V
    }
    return s;
}

// ---------------------------------------------------------------------------
// Families

enum class Kind { li1d, la1d, la2d };

NLOHMANN_JSON_SERIALIZE_ENUM(Kind, {{Kind::li1d, "1DLI"}, {Kind::la1d, "1DLA"}, {Kind::la2d, "2DLA"}})

struct FamilyParams {
    Kind kind = Kind::la1d;
    std::vector<std::size_t> swept;  ///< one feature (1D) or two (x then y)
    int order = 4;
    std::optional<std::size_t> n_segments;  ///< default_segments() when unset
    bool optimize_knots = true;
};

/// One curve or surface per training combination of the non-swept features;
/// prediction linearly interpolates between the bracketing members.
class SplineFamily {
public:
    using Member = std::variant<BSplineCurve, TensorSurface>;

    Kind kind() const noexcept { return kind_; }
    std::size_t n_features() const noexcept { return n_features_; }
    const std::vector<std::size_t>& swept() const noexcept { return swept_; }
    const std::vector<std::size_t>& fixed() const noexcept { return fixed_; }
    const std::vector<std::vector<double>>& levels() const noexcept { return levels_; }
    std::size_t n_members() const {
        return std::size_t(std::count_if(members_.begin(), members_.end(), [](const auto& m) { return m.has_value(); }));
    }

    /// Member at the given fixed-feature values (exact training levels).
    const Member* member(std::span<const double> fixed_values) const {
        std::vector<std::size_t> idx(fixed_.size());
        for (std::size_t f = 0; f < fixed_.size(); ++f) {
            const auto& lv = levels_[f];
            const auto it = std::lower_bound(lv.begin(), lv.end(), fixed_values[f]);
            if (it == lv.end() || *it != fixed_values[f]) return nullptr;
            idx[f] = std::size_t(it - lv.begin());
        }
        const auto& m = members_[flat(idx)];
        return m ? &*m : nullptr;
    }

    /// Evaluates the bracketing members at the swept coordinate(s) and
    /// interpolates linearly across each non-swept feature. Points outside the
    /// training hull raise DomainError unless allow_extrapolation, which clamps.
    double predict(std::span<const double> x, bool allow_extrapolation = false) const {
        if (x.size() != n_features_)
            throw DimensionError("spline predict: expected " + std::to_string(n_features_) + " features");
        const std::size_t d = fixed_.size();
        std::vector<std::size_t> lo(d), hi(d);
        std::vector<double> w(d);
        for (std::size_t f = 0; f < d; ++f) {
            const auto& lv = levels_[f];
            double v = x[fixed_[f]];
            if (v < lv.front() || v > lv.back()) {
                if (!allow_extrapolation) throw DomainError(outside_msg(fixed_[f], v, lv.front(), lv.back()));
                v = std::clamp(v, lv.front(), lv.back());
            }
            const auto it = std::lower_bound(lv.begin(), lv.end(), v);
            const std::size_t u = std::size_t(it - lv.begin());
            if (*it == v) {
                lo[f] = hi[f] = u;
                w[f] = 0.0;
            } else {
                lo[f] = u - 1;
                hi[f] = u;
                w[f] = (v - lv[u - 1]) / (lv[u] - lv[u - 1]);
            }
        }
        double s = 0.0;
        std::vector<std::size_t> idx(d);
        for (std::size_t corner = 0; corner < (std::size_t{1} << d); ++corner) {
            double weight = 1.0;
            bool skip = false;
            for (std::size_t f = 0; f < d; ++f) {
                const bool up = (corner >> f) & 1u;
                if (up && lo[f] == hi[f]) {
                    skip = true;
                    break;
                }
                idx[f] = up ? hi[f] : lo[f];
                weight *= lo[f] == hi[f] ? 1.0 : (up ? w[f] : 1.0 - w[f]);
            }
            if (skip || weight == 0.0) continue;
            const auto& m = members_[flat(idx)];
            if (!m) throw DomainError("spline predict: no family member for a bracketing feature combination");
            s += weight * evaluate(*m, x, allow_extrapolation);
        }
        return s;
    }

    friend SplineFamily fit_family(const RMatrix&, std::span<const double>, const FamilyParams&,
                                   const SplineFamily*);
    friend nlohmann::json family_to_json(const SplineFamily&);
    friend SplineFamily family_from_json(const nlohmann::json&);

private:
    std::size_t flat(std::span<const std::size_t> idx) const {
        std::size_t k = 0;
        for (std::size_t f = 0; f < idx.size(); ++f) k = k * levels_[f].size() + idx[f];
        return k;
    }

    static std::string outside_msg(std::size_t feature, double v, double lo, double hi) {
        return "spline predict: feature " + std::to_string(feature) + " = " + std::to_string(v) +
               " outside the training hull [" + std::to_string(lo) + ", " + std::to_string(hi) + "]";
    }

    double coord(const KnotVector& kv, std::size_t feature, double v, bool allow) const {
        if (v < kv.lo() || v > kv.hi()) {
            if (!allow) throw DomainError(outside_msg(feature, v, kv.lo(), kv.hi()));
            v = std::clamp(v, kv.lo(), kv.hi());
        }
        return v;
    }

    double evaluate(const Member& m, std::span<const double> x, bool allow) const {
        if (const auto* c = std::get_if<BSplineCurve>(&m)) return (*c)(coord(c->knots, swept_[0], x[swept_[0]], allow));
        const auto& s = std::get<TensorSurface>(m);
        return s(coord(s.kx, swept_[0], x[swept_[0]], allow), coord(s.ky, swept_[1], x[swept_[1]], allow));
    }

    Kind kind_ = Kind::la1d;
    std::size_t n_features_ = 0;
    std::vector<std::size_t> swept_, fixed_;
    std::vector<std::vector<double>> levels_;
    std::vector<std::optional<Member>> members_;
};

/// Fits one member per combination of the non-swept features of (x, y).
/// For 2DLA the x-direction knots are the element-wise mean of the knot
/// sequences of `knot_source` (a 1D family over swept[0]) across members that
/// agree on the remaining fixed features; without a source, uniform breaks are
/// used. The y direction uses interpolation knots.
inline SplineFamily fit_family(const RMatrix& x, std::span<const double> y, const FamilyParams& p,
                               const SplineFamily* knot_source = nullptr) {
    modalml::detail::require_dims(x.rows() == y.size(), "fit_family: x and y row counts differ");
    if (x.rows() == 0) throw DomainError("fit_family: empty training set");
    const std::size_t want = p.kind == Kind::la2d ? 2 : 1;
    if (p.swept.size() != want) throw DomainError("fit_family: wrong number of swept features for this kind");
    for (auto s : p.swept)
        if (s >= x.cols()) throw DomainError("fit_family: swept feature out of range");
    if (want == 2 && p.swept[0] == p.swept[1]) throw DomainError("fit_family: swept features must differ");

    SplineFamily fam;
    fam.kind_ = p.kind;
    fam.n_features_ = x.cols();
    fam.swept_ = p.swept;
    for (std::size_t f = 0; f < x.cols(); ++f)
        if (std::find(p.swept.begin(), p.swept.end(), f) == p.swept.end()) fam.fixed_.push_back(f);
    fam.levels_.resize(fam.fixed_.size());
    for (std::size_t f = 0; f < fam.fixed_.size(); ++f) {
        auto col = x.col(fam.fixed_[f]);
        std::sort(col.begin(), col.end());
        col.erase(std::unique(col.begin(), col.end()), col.end());
        fam.levels_[f] = std::move(col);
    }
    std::size_t slots = 1;
    for (const auto& lv : fam.levels_) slots *= lv.size();
    fam.members_.assign(slots, std::nullopt);

    std::map<std::vector<double>, std::vector<std::size_t>> groups;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        std::vector<double> key;
        for (auto f : fam.fixed_) key.push_back(x(r, f));
        groups[key].push_back(r);
    }

    auto distinct_sorted = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        return v;
    };

    for (const auto& [key, rows] : groups) {
        std::vector<std::size_t> idx(fam.fixed_.size());
        for (std::size_t f = 0; f < key.size(); ++f) {
            const auto& lv = fam.levels_[f];
            idx[f] = std::size_t(std::lower_bound(lv.begin(), lv.end(), key[f]) - lv.begin());
        }
        if (want == 1) {
            std::vector<std::pair<double, double>> pts;
            for (auto r : rows) pts.emplace_back(x(r, p.swept[0]), y[r]);
            std::sort(pts.begin(), pts.end());
            std::vector<double> xs, ys;
            for (auto [a, b] : pts) {
                xs.push_back(a);
                ys.push_back(b);
            }
            for (std::size_t i = 1; i < xs.size(); ++i)
                if (xs[i] == xs[i - 1])
                    throw DomainError("fit_family: repeated swept value within one feature combination");
            const int k = std::min<int>(p.order, int(xs.size()));
            BSplineCurve c = p.kind == Kind::li1d
                                 ? interpolate_1d(xs, ys, k)
                                 : approximate_1d(xs, ys, p.n_segments.value_or(default_segments(xs.size(), k)), k,
                                                  p.optimize_knots);
            fam.members_[fam.flat(idx)] = std::move(c);
            continue;
        }
        std::vector<double> xcol, ycol;
        for (auto r : rows) {
            xcol.push_back(x(r, p.swept[0]));
            ycol.push_back(x(r, p.swept[1]));
        }
        const auto xs = distinct_sorted(xcol), ys = distinct_sorted(ycol);
        RMatrix z(xs.size(), ys.size(), std::numeric_limits<double>::quiet_NaN());
        for (std::size_t q = 0; q < rows.size(); ++q) {
            const auto a = std::size_t(std::lower_bound(xs.begin(), xs.end(), xcol[q]) - xs.begin());
            const auto b = std::size_t(std::lower_bound(ys.begin(), ys.end(), ycol[q]) - ys.begin());
            if (!std::isnan(z(a, b))) throw DomainError("fit_family: repeated grid cell in 2D fit");
            z(a, b) = y[rows[q]];
        }
        if (rows.size() != xs.size() * ys.size() || !all_finite(z))
            throw DomainError("fit_family: incomplete grid for 2D fit");
        const int kx = std::min<int>(p.order, int(xs.size()));
        const int ky = std::min<int>(p.order, int(ys.size()));
        KnotVector knx;
        if (knot_source) {
            if (knot_source->swept_.size() != 1 || knot_source->swept_[0] != p.swept[0])
                throw DomainError("fit_family: knot source must be a 1D family over the same swept feature");
            std::vector<double> acc;
            std::size_t count = 0;
            for (std::size_t slot = 0; slot < knot_source->members_.size(); ++slot) {
                const auto& m = knot_source->members_[slot];
                if (!m) continue;
                // Decode the slot into fixed values and compare on our fixed features.
                std::size_t rem = slot;
                std::vector<double> vals(knot_source->fixed_.size());
                for (std::size_t f = knot_source->fixed_.size(); f-- > 0;) {
                    const auto& lv = knot_source->levels_[f];
                    vals[f] = lv[rem % lv.size()];
                    rem /= lv.size();
                }
                bool match = true;
                for (std::size_t f = 0; f < knot_source->fixed_.size(); ++f) {
                    const auto pos = std::find(fam.fixed_.begin(), fam.fixed_.end(), knot_source->fixed_[f]);
                    if (pos != fam.fixed_.end() && key[std::size_t(pos - fam.fixed_.begin())] != vals[f]) match = false;
                }
                if (!match) continue;
                const auto& kv = std::get<BSplineCurve>(*m).knots;
                if (acc.empty()) acc.assign(kv.t.size(), 0.0);
                if (kv.t.size() != acc.size() || kv.k != kx)
                    throw DomainError("fit_family: knot source members disagree on knot count");
                for (std::size_t q = 0; q < acc.size(); ++q) acc[q] += kv.t[q];
                ++count;
            }
            if (count == 0) throw DomainError("fit_family: knot source has no matching members");
            knx.k = kx;
            knx.t.resize(acc.size());
            for (std::size_t q = 0; q < acc.size(); ++q) knx.t[q] = acc[q] / double(count);
            for (int q = 0; q < kx; ++q) {
                knx.t[std::size_t(q)] = xs.front();
                knx.t[knx.t.size() - 1 - std::size_t(q)] = xs.back();
            }
            knx.validate();
        } else {
            knx = augment(uniform_breaks(xs.front(), xs.back(), p.n_segments.value_or(default_segments(xs.size(), kx))),
                          kx);
        }
        fam.members_[fam.flat(idx)] = fit_2d(xs, ys, z, knx, averaging_knots(ys, ky));
    }
    return fam;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const KnotVector& kv) { j = {{"order", kv.k}, {"knots", kv.t}}; }
inline void from_json(const nlohmann::json& j, KnotVector& kv) {
    kv.k = j.at("order").get<int>();
    kv.t = j.at("knots").get<std::vector<double>>();
    kv.validate();
}

inline void to_json(nlohmann::json& j, const BSplineCurve& c) { j = {{"knots", c.knots}, {"coefficients", c.coef}}; }
inline void from_json(const nlohmann::json& j, BSplineCurve& c) {
    j.at("knots").get_to(c.knots);
    c.coef = j.at("coefficients").get<std::vector<double>>();
    c.validate();
}

inline void to_json(nlohmann::json& j, const TensorSurface& s) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < s.coef.rows(); ++r) {
        const auto row = s.coef.row(r);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    j = {{"knots_x", s.kx}, {"knots_y", s.ky}, {"coefficients", std::move(rows)}};
}
inline void from_json(const nlohmann::json& j, TensorSurface& s) {
    j.at("knots_x").get_to(s.kx);
    j.at("knots_y").get_to(s.ky);
    s.coef = RMatrix();
    for (const auto& row : j.at("coefficients")) s.coef.append_row(row.get<std::vector<double>>());
    s.validate();
}

inline nlohmann::json family_to_json(const SplineFamily& f) {
    nlohmann::json members = nlohmann::json::array();
    std::vector<std::size_t> idx(f.fixed_.size());
    for (std::size_t slot = 0; slot < f.members_.size(); ++slot) {
        const auto& m = f.members_[slot];
        if (!m) continue;
        std::size_t rem = slot;
        std::vector<double> key(f.fixed_.size());
        for (std::size_t q = f.fixed_.size(); q-- > 0;) {
            key[q] = f.levels_[q][rem % f.levels_[q].size()];
            rem /= f.levels_[q].size();
        }
        nlohmann::json mj = {{"key", key}};
        if (const auto* c = std::get_if<BSplineCurve>(&*m))
            mj["curve"] = *c;
        else
            mj["surface"] = std::get<TensorSurface>(*m);
        members.push_back(std::move(mj));
    }
    return {{"kind", f.kind_},     {"n_features", f.n_features_}, {"swept", f.swept_},
            {"fixed", f.fixed_},   {"levels", f.levels_},         {"members", std::move(members)}};
}

inline SplineFamily family_from_json(const nlohmann::json& j) {
    try {
        SplineFamily f;
        j.at("kind").get_to(f.kind_);
        f.n_features_ = j.at("n_features").get<std::size_t>();
        f.swept_ = j.at("swept").get<std::vector<std::size_t>>();
        f.fixed_ = j.at("fixed").get<std::vector<std::size_t>>();
        f.levels_ = j.at("levels").get<std::vector<std::vector<double>>>();
        if (f.levels_.size() != f.fixed_.size() || f.swept_.size() + f.fixed_.size() != f.n_features_)
            throw FormatError("spline family JSON: inconsistent feature layout");
        std::size_t slots = 1;
        for (const auto& lv : f.levels_) {
            if (lv.empty() || !std::is_sorted(lv.begin(), lv.end()))
                throw FormatError("spline family JSON: levels must be sorted and non-empty");
            slots *= lv.size();
        }
        f.members_.assign(slots, std::nullopt);
        for (const auto& mj : j.at("members")) {
            const auto key = mj.at("key").get<std::vector<double>>();
            if (key.size() != f.fixed_.size()) throw FormatError("spline family JSON: member key width mismatch");
            std::size_t slot = 0;
            for (std::size_t q = 0; q < key.size(); ++q) {
                const auto& lv = f.levels_[q];
                const auto it = std::lower_bound(lv.begin(), lv.end(), key[q]);
                if (it == lv.end() || *it != key[q]) throw FormatError("spline family JSON: member key not a level");
                slot = slot * lv.size() + std::size_t(it - lv.begin());
            }
            if (mj.contains("curve"))
                f.members_[slot] = mj["curve"].get<BSplineCurve>();
            else
                f.members_[slot] = mj.at("surface").get<TensorSurface>();
        }
        return f;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("spline family JSON: ") + e.what());
    } catch (const DomainError& e) {
        throw FormatError(std::string("spline family JSON: ") + e.what());
    }
}

} // namespace modalml::spline
