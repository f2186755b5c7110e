#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lrns/parallel.hpp"

namespace lrns {

using Vector = std::vector<double>;

/// Dense row-major matrix of 64-bit floats. Everything downstream (sketches,
/// bases, factors, Hessians) lives in this one representation.
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major, rows*cols entries

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline double frobenius_norm(const DenseMatrix& a) {
    double s = 0.0;
    for (double v : a.data) s += v * v;
    return std::sqrt(s);
}

inline double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(std::span<double> x, double alpha) {
    for (double& v : x) v *= alpha;
}

inline DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

namespace detail {
inline void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}
}  // namespace detail

/// C = A * B. Rows of C are computed independently (ikj order), so the
/// parallel split never changes per-element summation order.
inline DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b) {
    detail::require(a.cols == b.rows, "multiply: inner dimensions differ");
    DenseMatrix c(a.rows, b.cols);
    parallel_for(0, a.rows, [&](std::size_t i) {
        double* ci = c.row(i);
        const double* ai = a.row(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = ai[k];
            if (aik == 0.0) continue;
            const double* bk = b.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
        }
    });
    return c;
}

/// C = A^T * B.
inline DenseMatrix multiply_at_b(const DenseMatrix& a, const DenseMatrix& b) {
    detail::require(a.rows == b.rows, "multiply_at_b: row counts differ");
    DenseMatrix c(a.cols, b.cols);
    parallel_for(0, a.cols, [&](std::size_t i) {
        double* ci = c.row(i);
        for (std::size_t k = 0; k < a.rows; ++k) {
            const double aki = a(k, i);
            if (aki == 0.0) continue;
            const double* bk = b.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) ci[j] += aki * bk[j];
        }
    });
    return c;
}

/// C = A * B^T.
inline DenseMatrix multiply_abt(const DenseMatrix& a, const DenseMatrix& b) {
    detail::require(a.cols == b.cols, "multiply_abt: column counts differ");
    DenseMatrix c(a.rows, b.rows);
    parallel_for(0, a.rows, [&](std::size_t i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (std::size_t j = 0; j < b.rows; ++j) ci[j] = dot({ai, a.cols}, {b.row(j), b.cols});
    });
    return c;
}

inline Vector matvec(const DenseMatrix& a, std::span<const double> x) {
    detail::require(a.cols == x.size(), "matvec: dimension mismatch");
    Vector y(a.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) y[i] = dot({a.row(i), a.cols}, x);
    return y;
}

inline void matvec_into(const DenseMatrix& a, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < a.rows; ++i) y[i] = dot({a.row(i), a.cols}, x);
}

inline Vector matvec_t(const DenseMatrix& a, std::span<const double> x) {
    detail::require(a.rows == x.size(), "matvec_t: dimension mismatch");
    Vector y(a.cols, 0.0);
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double xk = x[k];
        if (xk == 0.0) continue;
        const double* ak = a.row(k);
        for (std::size_t j = 0; j < a.cols; ++j) y[j] += xk * ak[j];
    }
    return y;
}

inline void matvec_t_into(const DenseMatrix& a, std::span<const double> x, std::span<double> y) {
    for (std::size_t j = 0; j < a.cols; ++j) y[j] = 0.0;
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double xk = x[k];
        if (xk == 0.0) continue;
        const double* ak = a.row(k);
        for (std::size_t j = 0; j < a.cols; ++j) y[j] += xk * ak[j];
    }
}

/// S += B * B^T, touching only the lower triangle; call mirror_lower once all
/// samples are accumulated. Row-parallel, sample order preserved per element.
inline void syrk_accumulate(DenseMatrix& s, const DenseMatrix& b) {
    detail::require(s.rows == b.rows && s.cols == b.rows, "syrk_accumulate: shape mismatch");
    parallel_for(0, b.rows, [&](std::size_t i) {
        const double* bi = b.row(i);
        double* si = s.row(i);
        for (std::size_t j = 0; j <= i; ++j)
            si[j] += dot({bi, b.cols}, {b.row(j), b.cols});
    });
}

inline void mirror_lower(DenseMatrix& s) {
    for (std::size_t i = 0; i < s.rows; ++i)
        for (std::size_t j = i + 1; j < s.cols; ++j) s(i, j) = s(j, i);
}

inline double max_abs(const DenseMatrix& a) {
    double m = 0.0;
    for (double v : a.data) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace lrns
