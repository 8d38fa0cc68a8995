#pragma once

// Dense nonsymmetric eigenanalysis and modal participation.
//
// The solver reduces A to upper Hessenberg form with Householder reflections,
// iterates Francis double-shift QR steps down to real Schur form, and recovers
// eigenvectors by back-substitution on the quasi-triangular factor followed by
// the accumulated basis rotation. Left eigenvectors are the rows of the inverse
// of the right-eigenvector matrix, so the pair is biorthonormal by construction.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "modalml/error.hpp"
#include "modalml/matrix.hpp"

namespace modalml::eigen {

/// Sorted ascending list of group indices.
using GroupSet = std::vector<std::size_t>;

struct ModalSolution {
    std::vector<Complex> lambdas;
    CMatrix phi;  ///< N x M, column m is the right eigenvector of lambdas[m]
    CMatrix psi;  ///< M x N, row m is the left eigenvector of lambdas[m]
    RMatrix p;    ///< N x M normalized participation magnitudes
    std::vector<GroupSet> dominant;
};

struct SolverOptions {
    double tol_resid_rel = 1e-8;  ///< residual tolerance relative to ||A||_F
    std::size_t sweeps_per_dim = 30;
    int inverse_iteration_retries = 3;
};

namespace detail {

inline double eps() { return std::numeric_limits<double>::epsilon(); }

// Householder reduction to upper Hessenberg form; v accumulates the
// orthogonal similarity so that A = v * h * v^T.
inline void reduce_to_hessenberg(RMatrix& h, RMatrix& v) {
    const std::size_t n = h.rows();
    v = RMatrix::identity(n);
    if (n < 3) return;
    const std::size_t high = n - 1;
    std::vector<double> ort(n, 0.0);
    for (std::size_t m = 1; m < high; ++m) {
        double scale = 0.0;
        for (std::size_t i = m; i <= high; ++i) scale += std::abs(h(i, m - 1));
        if (scale == 0.0) continue;
        double hh = 0.0;
        for (std::size_t i = high + 1; i-- > m;) {
            ort[i] = h(i, m - 1) / scale;
            hh += ort[i] * ort[i];
        }
        double g = std::sqrt(hh);
        if (ort[m] > 0) g = -g;
        hh -= ort[m] * g;
        ort[m] -= g;
        for (std::size_t j = m; j < n; ++j) {
            double f = 0.0;
            for (std::size_t i = high + 1; i-- > m;) f += ort[i] * h(i, j);
            f /= hh;
            for (std::size_t i = m; i <= high; ++i) h(i, j) -= f * ort[i];
        }
        for (std::size_t i = 0; i <= high; ++i) {
            double f = 0.0;
            for (std::size_t j = high + 1; j-- > m;) f += ort[j] * h(i, j);
            f /= hh;
            for (std::size_t j = m; j <= high; ++j) h(i, j) -= f * ort[j];
        }
        ort[m] *= scale;
        h(m, m - 1) = scale * g;
    }
    for (std::size_t m = high - 1; m >= 1; --m) {
        if (h(m, m - 1) != 0.0) {
            for (std::size_t i = m + 1; i <= high; ++i) ort[i] = h(i, m - 1);
            for (std::size_t j = m; j <= high; ++j) {
                double g = 0.0;
                for (std::size_t i = m; i <= high; ++i) g += ort[i] * v(i, j);
                g = (g / ort[m]) / h(m, m - 1);
                for (std::size_t i = m; i <= high; ++i) v(i, j) += g * ort[i];
            }
        }
    }
}

inline std::complex<double> cdiv(double xr, double xi, double yr, double yi) {
    if (std::abs(yr) > std::abs(yi)) {
        const double r = yi / yr, d = yr + r * yi;
        return {(xr + r * xi) / d, (xi - r * xr) / d};
    }
    const double r = yr / yi, d = yi + r * yr;
    return {(r * xr + xi) / d, (r * xi - xr) / d};
}

struct SchurResult {
    std::vector<double> re, im;
    RMatrix vectors;  // real-packed eigenvectors (re, im column pairs)
};

// Francis double-shift QR on the Hessenberg matrix h. With want_vectors the
// transformations are accumulated into v and eigenvectors are back-substituted.
inline SchurResult schur_eigen(RMatrix h, RMatrix v, bool want_vectors, std::size_t max_sweeps) {
    const int nn = static_cast<int>(h.rows());
    const int low = 0, high = nn - 1;
    const double e = eps();
    std::vector<double> d(nn, 0.0), ei(nn, 0.0);
    double exshift = 0.0, p = 0, q = 0, r = 0, s = 0, z = 0, t, w, x, y;

    double norm = 0.0;
    for (int i = 0; i < nn; ++i)
        for (int j = std::max(i - 1, 0); j < nn; ++j) norm += std::abs(h(i, j));

    int n = nn - 1;
    int iter = 0;
    std::size_t total_sweeps = 0;
    while (n >= low) {
        int l = n;
        while (l > low) {
            s = std::abs(h(l - 1, l - 1)) + std::abs(h(l, l));
            if (s == 0.0) s = norm;
            if (std::abs(h(l, l - 1)) < e * s) break;
            --l;
        }
        if (l == n) {
            h(n, n) += exshift;
            d[n] = h(n, n);
            ei[n] = 0.0;
            --n;
            iter = 0;
        } else if (l == n - 1) {
            w = h(n, n - 1) * h(n - 1, n);
            p = (h(n - 1, n - 1) - h(n, n)) / 2.0;
            q = p * p + w;
            z = std::sqrt(std::abs(q));
            h(n, n) += exshift;
            h(n - 1, n - 1) += exshift;
            x = h(n, n);
            if (q >= 0) {
                z = (p >= 0) ? p + z : p - z;
                d[n - 1] = x + z;
                d[n] = d[n - 1];
                if (z != 0.0) d[n] = x - w / z;
                ei[n - 1] = 0.0;
                ei[n] = 0.0;
                x = h(n, n - 1);
                s = std::abs(x) + std::abs(z);
                p = x / s;
                q = z / s;
                r = std::sqrt(p * p + q * q);
                p /= r;
                q /= r;
                for (int j = n - 1; j < nn; ++j) {
                    z = h(n - 1, j);
                    h(n - 1, j) = q * z + p * h(n, j);
                    h(n, j) = q * h(n, j) - p * z;
                }
                for (int i = 0; i <= n; ++i) {
                    z = h(i, n - 1);
                    h(i, n - 1) = q * z + p * h(i, n);
                    h(i, n) = q * h(i, n) - p * z;
                }
                if (want_vectors)
                    for (int i = low; i <= high; ++i) {
                        z = v(i, n - 1);
                        v(i, n - 1) = q * z + p * v(i, n);
                        v(i, n) = q * v(i, n) - p * z;
                    }
            } else {
                d[n - 1] = x + p;
                d[n] = x + p;
                ei[n - 1] = z;
                ei[n] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            x = h(n, n);
            y = 0.0;
            w = 0.0;
            if (l < n) {
                y = h(n - 1, n - 1);
                w = h(n, n - 1) * h(n - 1, n);
            }
            if (iter == 10) {
                exshift += x;
                for (int i = low; i <= n; ++i) h(i, i) -= x;
                s = std::abs(h(n, n - 1)) + std::abs(h(n - 1, n - 2));
                x = y = 0.75 * s;
                w = -0.4375 * s * s;
            }
            if (iter == 30) {
                s = (y - x) / 2.0;
                s = s * s + w;
                if (s > 0) {
                    s = std::sqrt(s);
                    if (y < x) s = -s;
                    s = x - w / ((y - x) / 2.0 + s);
                    for (int i = low; i <= n; ++i) h(i, i) -= s;
                    exshift += s;
                    x = y = w = 0.964;
                }
            }
            ++iter;
            if (++total_sweeps > max_sweeps)
                throw NumericalError("eigenvalues: QR iteration did not converge within " +
                                     std::to_string(max_sweeps) + " sweeps");

            int m = n - 2;
            while (m >= l) {
                z = h(m, m);
                r = x - z;
                s = y - z;
                p = (r * s - w) / h(m + 1, m) + h(m, m + 1);
                q = h(m + 1, m + 1) - z - r - s;
                r = h(m + 2, m + 1);
                s = std::abs(p) + std::abs(q) + std::abs(r);
                p /= s;
                q /= s;
                r /= s;
                if (m == l) break;
                if (std::abs(h(m, m - 1)) * (std::abs(q) + std::abs(r)) <
                    e * (std::abs(p) * (std::abs(h(m - 1, m - 1)) + std::abs(z) + std::abs(h(m + 1, m + 1)))))
                    break;
                --m;
            }
            for (int i = m + 2; i <= n; ++i) {
                h(i, i - 2) = 0.0;
                if (i > m + 2) h(i, i - 3) = 0.0;
            }
            for (int k = m; k <= n - 1; ++k) {
                const bool notlast = (k != n - 1);
                if (k != m) {
                    p = h(k, k - 1);
                    q = h(k + 1, k - 1);
                    r = notlast ? h(k + 2, k - 1) : 0.0;
                    x = std::abs(p) + std::abs(q) + std::abs(r);
                    if (x == 0.0) continue;
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = std::sqrt(p * p + q * q + r * r);
                if (p < 0) s = -s;
                if (s != 0) {
                    if (k != m)
                        h(k, k - 1) = -s * x;
                    else if (l != m)
                        h(k, k - 1) = -h(k, k - 1);
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for (int j = k; j < nn; ++j) {
                        p = h(k, j) + q * h(k + 1, j);
                        if (notlast) {
                            p += r * h(k + 2, j);
                            h(k + 2, j) -= p * z;
                        }
                        h(k, j) -= p * x;
                        h(k + 1, j) -= p * y;
                    }
                    for (int i = 0; i <= std::min(n, k + 3); ++i) {
                        p = x * h(i, k) + y * h(i, k + 1);
                        if (notlast) {
                            p += z * h(i, k + 2);
                            h(i, k + 2) -= p * r;
                        }
                        h(i, k) -= p;
                        h(i, k + 1) -= p * q;
                    }
                    if (want_vectors)
                        for (int i = low; i <= high; ++i) {
                            p = x * v(i, k) + y * v(i, k + 1);
                            if (notlast) {
                                p += z * v(i, k + 2);
                                v(i, k + 2) -= p * r;
                            }
                            v(i, k) -= p;
                            v(i, k + 1) -= p * q;
                        }
                }
            }
        }
    }

    SchurResult out{d, ei, {}};
    if (!want_vectors || norm == 0.0) {
        if (want_vectors) out.vectors = std::move(v);
        return out;
    }

    // Back-substitution on the quasi-triangular Schur factor.
    for (n = nn - 1; n >= 0; --n) {
        p = d[n];
        q = ei[n];
        if (q == 0) {
            int l = n;
            h(n, n) = 1.0;
            for (int i = n - 1; i >= 0; --i) {
                w = h(i, i) - p;
                r = 0.0;
                for (int j = l; j <= n; ++j) r += h(i, j) * h(j, n);
                if (ei[i] < 0.0) {
                    z = w;
                    s = r;
                } else {
                    l = i;
                    if (ei[i] == 0.0) {
                        h(i, n) = (w != 0.0) ? -r / w : -r / (e * norm);
                    } else {
                        x = h(i, i + 1);
                        y = h(i + 1, i);
                        q = (d[i] - p) * (d[i] - p) + ei[i] * ei[i];
                        t = (x * s - z * r) / q;
                        h(i, n) = t;
                        h(i + 1, n) = (std::abs(x) > std::abs(z)) ? (-r - w * t) / x : (-s - y * t) / z;
                    }
                    t = std::abs(h(i, n));
                    if ((e * t) * t > 1)
                        for (int j = i; j <= n; ++j) h(j, n) /= t;
                }
            }
        } else if (q < 0) {
            int l = n - 1;
            if (std::abs(h(n, n - 1)) > std::abs(h(n - 1, n))) {
                h(n - 1, n - 1) = q / h(n, n - 1);
                h(n - 1, n) = -(h(n, n) - p) / h(n, n - 1);
            } else {
                const auto c = cdiv(0.0, -h(n - 1, n), h(n - 1, n - 1) - p, q);
                h(n - 1, n - 1) = c.real();
                h(n - 1, n) = c.imag();
            }
            h(n, n - 1) = 0.0;
            h(n, n) = 1.0;
            for (int i = n - 2; i >= 0; --i) {
                double ra = 0.0, sa = 0.0;
                for (int j = l; j <= n; ++j) {
                    ra += h(i, j) * h(j, n - 1);
                    sa += h(i, j) * h(j, n);
                }
                w = h(i, i) - p;
                if (ei[i] < 0.0) {
                    z = w;
                    r = ra;
                    s = sa;
                } else {
                    l = i;
                    if (ei[i] == 0) {
                        const auto c = cdiv(-ra, -sa, w, q);
                        h(i, n - 1) = c.real();
                        h(i, n) = c.imag();
                    } else {
                        x = h(i, i + 1);
                        y = h(i + 1, i);
                        double vr = (d[i] - p) * (d[i] - p) + ei[i] * ei[i] - q * q;
                        const double vi = (d[i] - p) * 2.0 * q;
                        if (vr == 0.0 && vi == 0.0)
                            vr = e * norm * (std::abs(w) + std::abs(q) + std::abs(x) + std::abs(y) + std::abs(z));
                        const auto c = cdiv(x * r - z * ra + q * sa, x * s - z * sa - q * ra, vr, vi);
                        h(i, n - 1) = c.real();
                        h(i, n) = c.imag();
                        if (std::abs(x) > (std::abs(z) + std::abs(q))) {
                            h(i + 1, n - 1) = (-ra - w * h(i, n - 1) + q * h(i, n)) / x;
                            h(i + 1, n) = (-sa - w * h(i, n) - q * h(i, n - 1)) / x;
                        } else {
                            const auto c2 = cdiv(-r - y * h(i, n - 1), -s - y * h(i, n), z, q);
                            h(i + 1, n - 1) = c2.real();
                            h(i + 1, n) = c2.imag();
                        }
                    }
                    t = std::max(std::abs(h(i, n - 1)), std::abs(h(i, n)));
                    if ((e * t) * t > 1)
                        for (int j = i; j <= n; ++j) {
                            h(j, n - 1) /= t;
                            h(j, n) /= t;
                        }
                }
            }
        }
    }
    for (int j = nn - 1; j >= low; --j)
        for (int i = low; i <= high; ++i) {
            z = 0.0;
            for (int k = low; k <= std::min(j, high); ++k) z += v(i, k) * h(k, j);
            v(i, j) = z;
        }
    out.vectors = std::move(v);
    return out;
}

inline void validate_square_finite(const RMatrix& a, const char* who) {
    if (a.rows() != a.cols()) throw DimensionError(std::string(who) + ": matrix must be square");
    if (a.rows() == 0) throw DimensionError(std::string(who) + ": matrix is empty");
    if (!all_finite(a)) throw DomainError(std::string(who) + ": matrix has non-finite entries");
}

inline bool pole_less(const Complex& a, const Complex& b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
}

inline double column_residual(const RMatrix& a, const CMatrix& phi, std::size_t m, Complex lambda) {
    const std::size_t n = a.rows();
    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        Complex acc = -lambda * phi(i, m);
        for (std::size_t j = 0; j < n; ++j) acc += a(i, j) * phi(j, m);
        res += std::norm(acc);
    }
    return std::sqrt(res);
}

inline void normalize_column(CMatrix& phi, std::size_t m) {
    double nrm = 0.0;
    std::size_t big = 0;
    double big_mag = -1.0;
    for (std::size_t i = 0; i < phi.rows(); ++i) {
        nrm += std::norm(phi(i, m));
        if (std::abs(phi(i, m)) > big_mag) {
            big_mag = std::abs(phi(i, m));
            big = i;
        }
    }
    nrm = std::sqrt(nrm);
    if (nrm == 0.0) return;
    // Fix the phase so the largest component is real positive.
    const Complex phase = std::conj(phi(big, m)) / std::abs(phi(big, m));
    for (std::size_t i = 0; i < phi.rows(); ++i) phi(i, m) *= phase / nrm;
}

// Inverse iteration for one eigenvector with the given shift.
inline std::vector<Complex> inverse_iteration(const RMatrix& a, Complex shift, std::size_t seed_index) {
    const std::size_t n = a.rows();
    CMatrix s = to_complex(a);
    for (std::size_t i = 0; i < n; ++i) s(i, i) -= shift;
    LuDecomposition<Complex> lu(s);
    if (lu.singular()) throw NumericalError("inverse iteration: shifted matrix is exactly singular");
    std::vector<Complex> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = Complex(1.0 + 0.1 * double((i + seed_index) % 7), 0.05 * double(i));
    for (int it = 0; it < 4; ++it) {
        x = lu.solve(x);
        double nrm = 0.0;
        for (const auto& c : x) nrm += std::norm(c);
        nrm = std::sqrt(nrm);
        if (!(nrm > 0.0) || !std::isfinite(nrm)) throw NumericalError("inverse iteration: breakdown");
        for (auto& c : x) c /= nrm;
    }
    return x;
}

} // namespace detail

/// Eigenvalues of a real square matrix, sorted by (real asc, imag asc).
inline std::vector<Complex> eigenvalues(const RMatrix& a, const SolverOptions& opt = {}) {
    detail::validate_square_finite(a, "eigenvalues");
    RMatrix h = a, v;
    detail::reduce_to_hessenberg(h, v);
    const auto sr = detail::schur_eigen(std::move(h), RMatrix{}, false, opt.sweeps_per_dim * a.rows());
    std::vector<Complex> out(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) out[i] = {sr.re[i], sr.im[i]};
    std::sort(out.begin(), out.end(), detail::pole_less);
    return out;
}

struct EigenPairs {
    std::vector<Complex> lambdas;
    CMatrix phi;
    CMatrix psi;
};

/// Right and left eigenvectors, eigenvalues sorted by (real asc, imag asc).
/// Columns of phi have unit 2-norm; psi = phi^{-1} so psi[m,:]·phi[:,m] = 1.
inline EigenPairs eigenvectors(const RMatrix& a, const SolverOptions& opt = {}) {
    detail::validate_square_finite(a, "eigenvectors");
    const std::size_t n = a.rows();
    RMatrix h = a, v;
    detail::reduce_to_hessenberg(h, v);
    auto sr = detail::schur_eigen(std::move(h), std::move(v), true, opt.sweeps_per_dim * n);

    std::vector<Complex> lambdas(n);
    CMatrix phi(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        lambdas[j] = {sr.re[j], sr.im[j]};
        if (sr.im[j] == 0.0) {
            for (std::size_t i = 0; i < n; ++i) phi(i, j) = sr.vectors(i, j);
        } else if (sr.im[j] > 0.0) {
            for (std::size_t i = 0; i < n; ++i) {
                phi(i, j) = {sr.vectors(i, j), sr.vectors(i, j + 1)};
                phi(i, j + 1) = std::conj(phi(i, j));
            }
        }
    }

    const double anorm = frobenius_norm(a);
    const double tol = opt.tol_resid_rel * std::max(anorm, std::numeric_limits<double>::min());
    for (std::size_t m = 0; m < n; ++m) {
        detail::normalize_column(phi, m);
        if (detail::column_residual(a, phi, m, lambdas[m]) <= tol) continue;
        bool fixed = false;
        for (int attempt = 0; attempt <= opt.inverse_iteration_retries && !fixed; ++attempt) {
            const Complex shift = lambdas[m] + Complex(attempt * 1e-10 * anorm, 0.0);
            try {
                const auto x = detail::inverse_iteration(a, shift, m);
                for (std::size_t i = 0; i < n; ++i) phi(i, m) = x[i];
                detail::normalize_column(phi, m);
                fixed = detail::column_residual(a, phi, m, lambdas[m]) <= tol;
            } catch (const NumericalError&) {
                // exact singular shift; perturb and retry
            }
        }
        if (!fixed) throw NumericalError("eigenvectors: residual above tolerance after inverse-iteration retries");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return detail::pole_less(lambdas[i], lambdas[j]); });
    EigenPairs out;
    out.lambdas.resize(n);
    out.phi = CMatrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        out.lambdas[k] = lambdas[order[k]];
        for (std::size_t i = 0; i < n; ++i) out.phi(i, k) = phi(i, order[k]);
    }
    LuDecomposition<Complex> lu(out.phi);
    if (lu.singular()) throw NumericalError("eigenvectors: right-eigenvector matrix is singular (defective matrix)");
    out.psi = lu.inverse();
    return out;
}

/// Raw complex participation factors p_nm = phi_nm * psi_mn.
inline CMatrix participation_raw(const CMatrix& phi, const CMatrix& psi) {
    modalml::detail::require_dims(phi.rows() == psi.cols() && phi.cols() == psi.rows(),
                         "participation: phi/psi shapes are not transposed pairs");
    CMatrix p(phi.rows(), phi.cols());
    for (std::size_t n = 0; n < phi.rows(); ++n)
        for (std::size_t m = 0; m < phi.cols(); ++m) p(n, m) = phi(n, m) * psi(m, n);
    return p;
}

/// Participation magnitudes with each column divided by its maximum.
inline RMatrix participation_matrix(const CMatrix& phi, const CMatrix& psi) {
    const CMatrix raw = participation_raw(phi, psi);
    RMatrix p(raw.rows(), raw.cols());
    for (std::size_t m = 0; m < raw.cols(); ++m) {
        double mx = 0.0;
        for (std::size_t n = 0; n < raw.rows(); ++n) mx = std::max(mx, std::abs(raw(n, m)));
        if (!(mx > 0.0)) throw NumericalError("participation_matrix: zero participation column");
        for (std::size_t n = 0; n < raw.rows(); ++n) p(n, m) = std::abs(raw(n, m)) / mx;
    }
    return p;
}

/// For each mode, the groups with at least one state at or above the threshold.
inline std::vector<GroupSet> dominant_groups(const RMatrix& p, std::span<const std::size_t> group_of_state,
                                             double threshold = 0.3) {
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw DomainError("dominant_groups: threshold must lie in (0, 1]");
    modalml::detail::require_dims(group_of_state.size() == p.rows(), "dominant_groups: one group label per state required");
    std::vector<GroupSet> out(p.cols());
    for (std::size_t m = 0; m < p.cols(); ++m) {
        GroupSet& g = out[m];
        for (std::size_t n = 0; n < p.rows(); ++n)
            if (p(n, m) >= threshold) g.push_back(group_of_state[n]);
        std::sort(g.begin(), g.end());
        g.erase(std::unique(g.begin(), g.end()), g.end());
    }
    return out;
}

/// Group holding the largest participation of each mode (used for marker colors).
inline std::vector<std::size_t> leading_group(const RMatrix& p, std::span<const std::size_t> group_of_state) {
    std::vector<std::size_t> out(p.cols());
    for (std::size_t m = 0; m < p.cols(); ++m) {
        std::size_t best = 0;
        for (std::size_t n = 1; n < p.rows(); ++n)
            if (p(n, m) > p(best, m)) best = n;
        out[m] = group_of_state[best];
    }
    return out;
}

/// Matches current poles to reference slots. Returns perm with
/// tracked[m] = current[perm[m]]. Greedy: the globally closest unassigned
/// (reference, current) pair is fixed first; candidates within tie_tol of the
/// minimum are ordered by the current pole's (real, imag), then reference slot.
inline std::vector<std::size_t> track_poles(std::span<const Complex> reference, std::span<const Complex> current,
                                            double tie_tol = 1e-12) {
    modalml::detail::require_dims(reference.size() == current.size(), "track_poles: pole lists differ in length");
    const std::size_t n = reference.size();
    struct Candidate {
        double dist;
        std::size_t ref, cur;
    };
    std::vector<Candidate> cands;
    cands.reserve(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) cands.push_back({std::abs(reference[i] - current[j]), i, j});
    std::sort(cands.begin(), cands.end(), [&](const Candidate& a, const Candidate& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        if (current[a.cur] != current[b.cur]) return detail::pole_less(current[a.cur], current[b.cur]);
        return a.ref < b.ref;
    });
    constexpr std::size_t unset = static_cast<std::size_t>(-1);
    std::vector<std::size_t> perm(n, unset);
    std::vector<char> used(n, 0);
    std::size_t assigned = 0;
    std::size_t k = 0;
    while (assigned < n) {
        while (k < cands.size() && (perm[cands[k].ref] != unset || used[cands[k].cur])) ++k;
        // Among near-ties with the current minimum, prefer the lexicographically
        // smallest current pole.
        std::size_t pick = k;
        for (std::size_t q = k + 1; q < cands.size() && cands[q].dist - cands[k].dist <= tie_tol; ++q) {
            const auto& c = cands[q];
            if (perm[c.ref] != unset || used[c.cur]) continue;
            const auto& b = cands[pick];
            if (detail::pole_less(current[c.cur], current[b.cur]) ||
                (current[c.cur] == current[b.cur] && c.ref < b.ref))
                pick = q;
        }
        perm[cands[pick].ref] = cands[pick].cur;
        used[cands[pick].cur] = 1;
        ++assigned;
    }
    return perm;
}

/// Full modal analysis of one state matrix.
inline ModalSolution modal_analysis(const RMatrix& a, std::span<const std::size_t> group_of_state,
                                    double threshold = 0.3, const SolverOptions& opt = {}) {
    auto pairs = eigenvectors(a, opt);
    ModalSolution sol;
    sol.p = participation_matrix(pairs.phi, pairs.psi);
    sol.dominant = dominant_groups(sol.p, group_of_state, threshold);
    sol.lambdas = std::move(pairs.lambdas);
    sol.phi = std::move(pairs.phi);
    sol.psi = std::move(pairs.psi);
    return sol;
}

/// Reorders the modes of a solution: out mode m = in mode perm[m].
inline ModalSolution permute_modes(const ModalSolution& in, std::span<const std::size_t> perm) {
    const std::size_t m_count = in.lambdas.size();
    modalml::detail::require_dims(perm.size() == m_count, "permute_modes: permutation length mismatch");
    ModalSolution out;
    out.lambdas.resize(m_count);
    out.phi = CMatrix(in.phi.rows(), m_count);
    out.psi = CMatrix(m_count, in.psi.cols());
    out.p = RMatrix(in.p.rows(), m_count);
    out.dominant.resize(m_count);
    for (std::size_t m = 0; m < m_count; ++m) {
        const std::size_t src = perm[m];
        out.lambdas[m] = in.lambdas[src];
        for (std::size_t i = 0; i < in.phi.rows(); ++i) out.phi(i, m) = in.phi(i, src);
        for (std::size_t j = 0; j < in.psi.cols(); ++j) out.psi(m, j) = in.psi(src, j);
        for (std::size_t i = 0; i < in.p.rows(); ++i) out.p(i, m) = in.p(i, src);
        if (!in.dominant.empty()) out.dominant[m] = in.dominant[src];
    }
    if (in.dominant.empty()) out.dominant.clear();
    return out;
}

} // namespace modalml::eigen
