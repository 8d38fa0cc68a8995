#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "modalml/error.hpp"

namespace modalml {

using Complex = std::complex<double>;

/// Dense row-major matrix with value semantics.
template <class T>
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::initializer_list<std::initializer_list<T>> init) {
        rows_ = init.size();
        cols_ = rows_ ? init.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& row : init) {
            detail::require_dims(row.size() == cols_, "Matrix: ragged initializer");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::vector<T> col(std::size_t c) const {
        std::vector<T> out(rows_);
        for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
        return out;
    }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }

    void append_row(std::span<const T> values) {
        if (rows_ == 0 && cols_ == 0) cols_ = values.size();
        detail::require_dims(values.size() == cols_, "Matrix::append_row: width mismatch");
        data_.insert(data_.end(), values.begin(), values.end());
        ++rows_;
    }

    Matrix transposed() const {
        Matrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using RMatrix = Matrix<double>;
using CMatrix = Matrix<Complex>;

template <class T>
Matrix<T> operator*(const Matrix<T>& a, const Matrix<T>& b) {
    detail::require_dims(a.cols() == b.rows(), "matrix product: inner dimension mismatch");
    Matrix<T> c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const T aik = a(i, k);
            if (aik == T{}) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

template <class T>
double frobenius_norm(const Matrix<T>& a) {
    double s = 0.0;
    for (const T& v : a.data()) s += std::norm(v);
    return std::sqrt(s);
}

inline CMatrix to_complex(const RMatrix& a) {
    CMatrix c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = a(i, j);
    return c;
}

template <class T>
bool all_finite(const Matrix<T>& a) {
    return std::all_of(a.data().begin(), a.data().end(), [](const T& v) {
        if constexpr (std::is_same_v<T, Complex>)
            return std::isfinite(v.real()) && std::isfinite(v.imag());
        else
            return std::isfinite(v);
    });
}

/// LU factorization with partial pivoting, P·A = L·U packed in place.
template <class T>
class LuDecomposition {
public:
    explicit LuDecomposition(Matrix<T> a) : lu_(std::move(a)), perm_(lu_.rows()) {
        detail::require_dims(lu_.rows() == lu_.cols(), "LU: matrix must be square");
        const std::size_t n = lu_.rows();
        for (std::size_t i = 0; i < n; ++i) perm_[i] = i;
        double scale = 0.0;
        for (const T& v : lu_.data()) scale = std::max(scale, std::abs(v));
        const double tiny = scale * 1e-300;
        for (std::size_t k = 0; k < n; ++k) {
            std::size_t p = k;
            double best = std::abs(lu_(k, k));
            for (std::size_t i = k + 1; i < n; ++i)
                if (std::abs(lu_(i, k)) > best) {
                    best = std::abs(lu_(i, k));
                    p = i;
                }
            if (best <= tiny) {
                singular_ = true;
                continue;
            }
            if (p != k) {
                for (std::size_t j = 0; j < n; ++j) std::swap(lu_(k, j), lu_(p, j));
                std::swap(perm_[k], perm_[p]);
            }
            const T pivot = lu_(k, k);
            for (std::size_t i = k + 1; i < n; ++i) {
                const T f = lu_(i, k) / pivot;
                lu_(i, k) = f;
                if (f == T{}) continue;
                for (std::size_t j = k + 1; j < n; ++j) lu_(i, j) -= f * lu_(k, j);
            }
        }
    }

    bool singular() const noexcept { return singular_; }

    /// Ratio of smallest to largest |U_kk|; a cheap singularity indicator.
    double pivot_ratio() const {
        double lo = INFINITY, hi = 0.0;
        for (std::size_t k = 0; k < lu_.rows(); ++k) {
            lo = std::min(lo, std::abs(lu_(k, k)));
            hi = std::max(hi, std::abs(lu_(k, k)));
        }
        return hi > 0.0 ? lo / hi : 0.0;
    }

    std::vector<T> solve(std::span<const T> b) const {
        if (singular_) throw NumericalError("LU solve: matrix is singular");
        const std::size_t n = lu_.rows();
        detail::require_dims(b.size() == n, "LU solve: right-hand side length mismatch");
        std::vector<T> x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = b[perm_[i]];
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < i; ++j) x[i] -= lu_(i, j) * x[j];
        for (std::size_t i = n; i-- > 0;) {
            for (std::size_t j = i + 1; j < n; ++j) x[i] -= lu_(i, j) * x[j];
            x[i] /= lu_(i, i);
        }
        return x;
    }

    Matrix<T> inverse() const {
        const std::size_t n = lu_.rows();
        Matrix<T> inv(n, n);
        std::vector<T> e(n);
        for (std::size_t c = 0; c < n; ++c) {
            std::fill(e.begin(), e.end(), T{});
            e[c] = T{1};
            const auto x = solve(e);
            for (std::size_t r = 0; r < n; ++r) inv(r, c) = x[r];
        }
        return inv;
    }

private:
    Matrix<T> lu_;
    std::vector<std::size_t> perm_;
    bool singular_ = false;
};

/// Solves the symmetric positive definite system a·x = b by Cholesky.
inline std::vector<double> cholesky_solve(RMatrix a, std::vector<double> b) {
    const std::size_t n = a.rows();
    detail::require_dims(a.cols() == n && b.size() == n, "cholesky_solve: shape mismatch");
    double diag_max = 0.0;
    for (std::size_t i = 0; i < n; ++i) diag_max = std::max(diag_max, a(i, i));
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
        if (!(d > diag_max * 1e-14)) throw NumericalError("cholesky_solve: matrix is not positive definite");
        d = std::sqrt(d);
        a(j, j) = d;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
            a(i, j) = s / d;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < i; ++k) b[i] -= a(i, k) * b[k];
        b[i] /= a(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t k = i + 1; k < n; ++k) b[i] -= a(k, i) * b[k];
        b[i] /= a(i, i);
    }
    return b;
}

} // namespace modalml
