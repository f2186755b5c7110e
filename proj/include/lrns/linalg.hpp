#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "lrns/matrix.hpp"
#include "lrns/rng.hpp"

namespace lrns {

// ---------------------------------------------------------------------------
// Householder QR orthonormalization
// ---------------------------------------------------------------------------

namespace detail {

struct HouseholderQr {
    DenseMatrix v;            // reflector vectors, column j stored in column j (rows j..n-1)
    std::vector<double> tau;  // reflector scales
    std::vector<double> diag; // R diagonal after each step
};

/// In-place Householder sweep over the k columns of a (n x k). Returns the
/// reflectors; |diag[j]| is the pivot magnitude for column j.
inline HouseholderQr householder_sweep(DenseMatrix a) {
    const std::size_t n = a.rows, k = a.cols;
    HouseholderQr qr;
    qr.v = DenseMatrix(n, k);
    qr.tau.assign(k, 0.0);
    qr.diag.assign(k, 0.0);
    std::vector<double> w(k);
    for (std::size_t j = 0; j < k; ++j) {
        double norm = 0.0;
        for (std::size_t i = j; i < n; ++i) norm += a(i, j) * a(i, j);
        norm = std::sqrt(norm);
        const double a0 = a(j, j);
        const double alpha = (a0 >= 0.0) ? -norm : norm;
        qr.diag[j] = alpha;
        if (norm == 0.0) continue;  // zero subcolumn; caller decides
        // v = x - alpha e1, normalized so v[j] = 1
        const double v0 = a0 - alpha;
        if (v0 == 0.0) continue;  // column already e1-aligned
        qr.v(j, j) = 1.0;
        for (std::size_t i = j + 1; i < n; ++i) qr.v(i, j) = a(i, j) / v0;
        double vtv = 1.0;
        for (std::size_t i = j + 1; i < n; ++i) vtv += qr.v(i, j) * qr.v(i, j);
        qr.tau[j] = 2.0 / vtv;
        // apply H_j = I - tau v v^T to the trailing columns
        for (std::size_t c = j; c < k; ++c) {
            double s = 0.0;
            for (std::size_t i = j; i < n; ++i) s += qr.v(i, j) * a(i, c);
            w[c] = qr.tau[j] * s;
        }
        for (std::size_t c = j; c < k; ++c) {
            for (std::size_t i = j; i < n; ++i) a(i, c) -= qr.v(i, j) * w[c];
        }
    }
    return qr;
}

/// Thin Q from the sweep: Q = H_0 ... H_{k-1} [e_0 ... e_{k-1}].
inline DenseMatrix householder_thin_q(const HouseholderQr& qr, std::size_t n, std::size_t k) {
    DenseMatrix q(n, k);
    for (std::size_t j = 0; j < k; ++j) q(j, j) = 1.0;
    for (std::size_t jj = k; jj-- > 0;) {
        if (qr.tau[jj] == 0.0) continue;
        for (std::size_t c = 0; c < k; ++c) {
            double s = 0.0;
            for (std::size_t i = jj; i < n; ++i) s += qr.v(i, jj) * q(i, c);
            s *= qr.tau[jj];
            for (std::size_t i = jj; i < n; ++i) q(i, c) -= qr.v(i, jj) * s;
        }
    }
    return q;
}

}  // namespace detail

/// QR-based orthonormalization of the columns of a full-column-rank matrix.
/// A pivot below 1e-14 times the source column norm is rejected as rank
/// deficiency, naming the offending column.
inline DenseMatrix orthonormalize(const DenseMatrix& a) {
    detail::require(a.rows >= a.cols && a.cols >= 1, "orthonormalize: need n >= k >= 1");
    std::vector<double> colnorm(a.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) colnorm[j] += a(i, j) * a(i, j);
    auto qr = detail::householder_sweep(a);
    for (std::size_t j = 0; j < a.cols; ++j) {
        if (std::abs(qr.diag[j]) <= 1e-14 * std::sqrt(colnorm[j]) || colnorm[j] == 0.0)
            throw std::runtime_error("orthonormalize: column " + std::to_string(j) +
                                     " is rank deficient (pivot " + std::to_string(qr.diag[j]) + ")");
    }
    DenseMatrix q = detail::householder_thin_q(qr, a.rows, a.cols);
    // fix signs so the implied R has a positive diagonal (identity stays put)
    for (std::size_t j = 0; j < a.cols; ++j) {
        if (qr.diag[j] < 0.0)
            for (std::size_t i = 0; i < a.rows; ++i) q(i, j) = -q(i, j);
    }
    return q;
}

namespace detail {

/// Deficiency-tolerant variant for sketch bases: columns whose pivot
/// collapses are replaced by identity vectors orthonormalized against the
/// columns already accepted. Deterministic, no randomness involved.
inline DenseMatrix orthonormalize_completing(const DenseMatrix& a) {
    const std::size_t n = a.rows, k = a.cols;
    DenseMatrix q(n, k);
    std::vector<double> col(n);
    std::size_t next_unit = 0;
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t i = 0; i < n; ++i) col[i] = a(i, j);
        const double src = norm2(col);
        // two rounds of classical Gram-Schmidt against accepted columns
        for (int round = 0; round < 2; ++round) {
            for (std::size_t c = 0; c < j; ++c) {
                double s = 0.0;
                for (std::size_t i = 0; i < n; ++i) s += q(i, c) * col[i];
                for (std::size_t i = 0; i < n; ++i) col[i] -= s * q(i, c);
            }
        }
        double rem = norm2(col);
        while (rem <= 1e-12 * (src > 0.0 ? src : 1.0)) {
            // column dependent on the accepted span: fall back to unit vectors
            if (next_unit >= n) throw std::runtime_error("orthonormalize_completing: basis exhausted");
            std::fill(col.begin(), col.end(), 0.0);
            col[next_unit++] = 1.0;
            for (int round = 0; round < 2; ++round) {
                for (std::size_t c = 0; c < j; ++c) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < n; ++i) s += q(i, c) * col[i];
                    for (std::size_t i = 0; i < n; ++i) col[i] -= s * q(i, c);
                }
            }
            rem = norm2(col);
            if (rem > 0.5) break;  // unit vector mostly outside the span: accept
            rem = 0.0;             // try the next unit vector
        }
        for (std::size_t i = 0; i < n; ++i) q(i, j) = col[i] / rem;
    }
    return q;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition (cyclic Jacobi)
// ---------------------------------------------------------------------------

struct SymmetricEigen {
    std::vector<double> values;  // descending
    DenseMatrix vectors;         // eigenvector t in column t
};

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Accurate and adequate at n <= ~2000; serves as the exact-spectrum route
/// wherever the RSVD path needs checking and as the KL covariance solver.
inline SymmetricEigen sym_eig(DenseMatrix s) {
    detail::require(s.rows == s.cols, "sym_eig: matrix must be square");
    const std::size_t n = s.rows;
    DenseMatrix v = DenseMatrix::identity(n);
    const double fro = frobenius_norm(s);
    if (fro > 0.0) {
        const double tol = 1e-15 * fro;
        for (int sweep = 0; sweep < 60; ++sweep) {
            double off = 0.0;
            for (std::size_t p = 0; p + 1 < n; ++p)
                for (std::size_t q = p + 1; q < n; ++q) off += s(p, q) * s(p, q);
            if (std::sqrt(2.0 * off) <= tol) break;
            for (std::size_t p = 0; p + 1 < n; ++p) {
                for (std::size_t q = p + 1; q < n; ++q) {
                    const double apq = s(p, q);
                    if (std::abs(apq) <= 1e-300) continue;
                    const double app = s(p, p), aqq = s(q, q);
                    const double theta = (aqq - app) / (2.0 * apq);
                    const double t = (theta >= 0.0)
                                         ? 1.0 / (theta + std::sqrt(1.0 + theta * theta))
                                         : 1.0 / (theta - std::sqrt(1.0 + theta * theta));
                    const double c = 1.0 / std::sqrt(1.0 + t * t);
                    const double sn = t * c;
                    for (std::size_t i = 0; i < n; ++i) {
                        const double sip = s(i, p), siq = s(i, q);
                        s(i, p) = c * sip - sn * siq;
                        s(i, q) = sn * sip + c * siq;
                    }
                    for (std::size_t j = 0; j < n; ++j) {
                        const double spj = s(p, j), sqj = s(q, j);
                        s(p, j) = c * spj - sn * sqj;
                        s(q, j) = sn * spj + c * sqj;
                    }
                    for (std::size_t i = 0; i < n; ++i) {
                        const double vip = v(i, p), viq = v(i, q);
                        v(i, p) = c * vip - sn * viq;
                        v(i, q) = sn * vip + c * viq;
                    }
                }
            }
        }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> diag(n);
    for (std::size_t i = 0; i < n; ++i) diag[i] = s(i, i);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return diag[a] > diag[b]; });
    SymmetricEigen out;
    out.values.resize(n);
    out.vectors = DenseMatrix(n, n);
    for (std::size_t t = 0; t < n; ++t) {
        out.values[t] = diag[order[t]];
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, t) = v(i, order[t]);
    }
    return out;
}

/// Householder tridiagonalization followed by implicit-shift QL with
/// eigenvector accumulation. Same contract as sym_eig with an order of
/// magnitude less work at n ~ 1000; the production route wherever a full
/// dense spectrum is needed, while the Jacobi sweep above stays the
/// independent cross-check.
inline SymmetricEigen sym_eig_ql(DenseMatrix a) {
    detail::require(a.rows == a.cols, "sym_eig_ql: matrix must be square");
    const std::size_t n = a.rows;
    std::vector<double> d(n, 0.0), e(n, 0.0);

    for (std::size_t i = n - 1; i >= 1; --i) {
        const std::size_t l = i - 1;
        double h = 0.0, scale = 0.0;
        if (l > 0) {
            for (std::size_t k = 0; k <= l; ++k) scale += std::abs(a(i, k));
            if (scale == 0.0) {
                e[i] = a(i, l);
            } else {
                for (std::size_t k = 0; k <= l; ++k) {
                    a(i, k) /= scale;
                    h += a(i, k) * a(i, k);
                }
                double f = a(i, l);
                double g = f >= 0.0 ? -std::sqrt(h) : std::sqrt(h);
                e[i] = scale * g;
                h -= f * g;
                a(i, l) = f - g;
                f = 0.0;
                for (std::size_t j = 0; j <= l; ++j) {
                    a(j, i) = a(i, j) / h;
                    g = 0.0;
                    for (std::size_t k = 0; k <= j; ++k) g += a(j, k) * a(i, k);
                    for (std::size_t k = j + 1; k <= l; ++k) g += a(k, j) * a(i, k);
                    e[j] = g / h;
                    f += e[j] * a(i, j);
                }
                const double hh = f / (h + h);
                for (std::size_t j = 0; j <= l; ++j) {
                    f = a(i, j);
                    e[j] = g = e[j] - hh * f;
                    for (std::size_t k = 0; k <= j; ++k) a(j, k) -= f * e[k] + g * a(i, k);
                }
            }
        } else {
            e[i] = a(i, l);
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (d[i] != 0.0) {
            for (std::size_t j = 0; j < i; ++j) {
                double g = 0.0;
                for (std::size_t k = 0; k < i; ++k) g += a(i, k) * a(k, j);
                for (std::size_t k = 0; k < i; ++k) a(k, j) -= g * a(k, i);
            }
        }
        d[i] = a(i, i);
        a(i, i) = 1.0;
        for (std::size_t j = 0; j < i; ++j) a(j, i) = a(i, j) = 0.0;
    }

    for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
    e[n - 1] = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
        int iter = 0;
        std::size_t m;
        do {
            for (m = l; m + 1 < n; ++m) {
                const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
                if (std::abs(e[m]) <= 1e-300 + 2.3e-16 * dd) break;
            }
            if (m != l) {
                if (iter++ == 60) throw std::runtime_error("sym_eig_ql: QL failed to converge");
                double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                double r = std::hypot(g, 1.0);
                g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
                double s = 1.0, c = 1.0, p = 0.0;
                bool underflow = false;
                for (std::size_t i = m; i-- > l;) {
                    double f = s * e[i];
                    const double b = c * e[i];
                    r = std::hypot(f, g);
                    e[i + 1] = r;
                    if (r == 0.0) {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        underflow = true;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                    for (std::size_t k = 0; k < n; ++k) {
                        f = a(k, i + 1);
                        a(k, i + 1) = s * a(k, i) + c * f;
                        a(k, i) = c * a(k, i) - s * f;
                    }
                    if (i == l) break;
                }
                if (underflow) continue;
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        } while (m != l);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t p, std::size_t q) { return d[p] > d[q]; });
    SymmetricEigen out;
    out.values.resize(n);
    out.vectors = DenseMatrix(n, n);
    for (std::size_t t = 0; t < n; ++t) {
        out.values[t] = d[order[t]];
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, t) = a(i, order[t]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// SPD factorization
// ---------------------------------------------------------------------------

/// Cholesky factorization of a symmetric positive definite matrix; immutable
/// after construction and shareable across threads.
struct SymmetricFactorization {
    std::size_t dimension = 0;
    std::vector<double> lower;  // row-major n x n, upper triangle zero

    void solve_into(std::span<const double> b, std::span<double> x) const {
        const std::size_t n = dimension;
        const double* l = lower.data();
        for (std::size_t i = 0; i < n; ++i) {
            double s = b[i];
            const double* li = l + i * n;
            for (std::size_t j = 0; j < i; ++j) s -= li[j] * x[j];
            x[i] = s / li[i];
        }
        for (std::size_t ii = n; ii-- > 0;) {
            double s = x[ii];
            for (std::size_t j = ii + 1; j < n; ++j) s -= l[j * n + ii] * x[j];
            x[ii] = s / l[ii * n + ii];
        }
    }

    Vector solve(std::span<const double> b) const {
        detail::require(b.size() == dimension, "SymmetricFactorization::solve: size mismatch");
        Vector x(dimension);
        solve_into(b, x);
        return x;
    }

    /// Solves column-by-column: X = A^{-1} B.
    DenseMatrix solve_matrix(const DenseMatrix& b) const {
        detail::require(b.rows == dimension, "solve_matrix: size mismatch");
        DenseMatrix x(b.rows, b.cols);
        parallel_for(0, b.cols, [&](std::size_t c) {
            Vector rhs(dimension), sol(dimension);
            for (std::size_t i = 0; i < dimension; ++i) rhs[i] = b(i, c);
            solve_into(rhs, sol);
            for (std::size_t i = 0; i < dimension; ++i) x(i, c) = sol[i];
        });
        return x;
    }

    DenseMatrix reconstruct() const {
        DenseMatrix llt(dimension, dimension);
        for (std::size_t i = 0; i < dimension; ++i)
            for (std::size_t j = 0; j <= i; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k <= j; ++k)
                    s += lower[i * dimension + k] * lower[j * dimension + k];
                llt(i, j) = s;
                llt(j, i) = s;
            }
        return llt;
    }
};

inline SymmetricFactorization factorize_spd(const DenseMatrix& a) {
    detail::require(a.rows == a.cols, "factorize_spd: matrix must be square");
    const std::size_t n = a.rows;
    SymmetricFactorization f;
    f.dimension = n;
    f.lower.assign(n * n, 0.0);
    double* l = f.lower.data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l[i * n + k] * l[j * n + k];
            if (i == j) {
                if (s <= 0.0)
                    throw std::runtime_error("factorize_spd: non-positive pivot at index " +
                                             std::to_string(i));
                l[i * n + i] = std::sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    return f;
}

// ---------------------------------------------------------------------------
// Randomized top-k eigenvectors of a symmetric PSD matrix
// ---------------------------------------------------------------------------

/// Sketch configuration. q counts full double applications of the matrix
/// (with re-orthonormalization), so q = 0 reproduces the plain two-stage
/// sketch recipe verbatim.
struct RsvdConfig {
    std::size_t target_rank = 1;      // k
    std::size_t oversampling = 10;    // p
    std::size_t power_iterations = 1; // q
    std::uint64_t seed = 0;

    static RsvdConfig defaults(std::size_t n, std::size_t k, std::uint64_t seed = 0) {
        RsvdConfig cfg;
        cfg.target_rank = k;
        cfg.oversampling = std::min<std::size_t>(10, n - std::min(n, k));
        cfg.power_iterations = 1;
        cfg.seed = seed;
        return cfg;
    }
};

/// Two-stage randomized recipe for the dominant eigenvectors of a symmetric
/// PSD matrix: Gaussian sketch, orthonormal range basis (optionally sharpened
/// by power iterations), projection Y = Q^T S, then the left singular factor
/// of Y recovered through the eigendecomposition of Y Y^T. Returns Q * U_Y
/// truncated to the first k columns.
inline DenseMatrix rsvd_top_eigvecs(const DenseMatrix& s, const RsvdConfig& cfg) {
    detail::require(s.rows == s.cols, "rsvd_top_eigvecs: matrix must be square");
    const std::size_t n = s.rows;
    const std::size_t k = cfg.target_rank;
    detail::require(k >= 1, "rsvd_top_eigvecs: target rank must be >= 1");
    if (k + cfg.oversampling > n)
        throw std::invalid_argument("rsvd_top_eigvecs: k + p exceeds the matrix dimension");
    const double fro = frobenius_norm(s);
    double asym = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) asym += (s(i, j) - s(j, i)) * (s(i, j) - s(j, i));
    if (fro > 0.0 && std::sqrt(2.0 * asym) > 1e-10 * fro)
        throw std::invalid_argument("rsvd_top_eigvecs: input is not symmetric");

    const std::size_t width = k + cfg.oversampling;
    DenseMatrix sketch(n, width);
    {
        CounterRng rng(cfg.seed);
        for (double& v : sketch.data) v = rng.gaussian();
    }
    DenseMatrix z = multiply(s, sketch);
    DenseMatrix q = detail::orthonormalize_completing(z);
    for (std::size_t it = 0; it < cfg.power_iterations; ++it) {
        z = multiply(s, multiply(s, q));
        q = detail::orthonormalize_completing(z);
    }
    DenseMatrix y = multiply_at_b(q, s);       // width x n
    DenseMatrix small = multiply_abt(y, y);    // width x width, PSD
    SymmetricEigen eig = sym_eig_ql(std::move(small));
    DenseMatrix u(n, k);
    parallel_for(0, n, [&](std::size_t i) {
        for (std::size_t c = 0; c < k; ++c) {
            double acc = 0.0;
            for (std::size_t t = 0; t < width; ++t) acc += q(i, t) * eig.vectors(t, c);
            u(i, c) = acc;
        }
    });
    return u;
}

// ---------------------------------------------------------------------------
// Power-iteration spectral norm estimate
// ---------------------------------------------------------------------------

/// A linear operator given by its forward and transpose actions.
struct LinearOp {
    std::size_t dimension = 0;
    std::function<void(std::span<const double>, std::span<double>)> apply;
    std::function<void(std::span<const double>, std::span<double>)> apply_transpose;
};

/// Largest-singular-value estimate by power iteration on M^T M. Never
/// overestimates; a zero operator yields 0.
inline double spectral_norm_estimate(const LinearOp& op, std::size_t iters, std::uint64_t seed) {
    detail::require(iters >= 1, "spectral_norm_estimate: need iters >= 1");
    const std::size_t n = op.dimension;
    Vector x = gaussian_vector(seed, n);
    Vector y(n), z(n);
    double sigma = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
        const double nx = norm2(x);
        if (nx == 0.0) return 0.0;
        scale(x, 1.0 / nx);
        op.apply(x, y);
        const double ny = norm2(y);
        if (ny == 0.0) return 0.0;
        sigma = ny;
        op.apply_transpose(y, z);
        x.swap(z);
    }
    return sigma;
}

/// The maximum principal angle between two orthonormal column spaces,
/// reported as its sine: || (I - U U^T) V ||_2. Exact-subspace comparisons
/// use this rather than per-vector matching, since eigenbases are only
/// determined up to rotation within eigenvalue clusters.
inline double subspace_sin_theta(const DenseMatrix& u, const DenseMatrix& v) {
    detail::require(u.rows == v.rows, "subspace_sin_theta: row mismatch");
    DenseMatrix proj = multiply_at_b(u, v);        // k_u x k_v
    DenseMatrix rec = multiply(u, proj);           // n x k_v
    DenseMatrix res = v;
    for (std::size_t i = 0; i < res.data.size(); ++i) res.data[i] -= rec.data[i];
    DenseMatrix gram = multiply_at_b(res, res);    // k_v x k_v
    SymmetricEigen eig = sym_eig(gram);
    const double top = eig.values.empty() ? 0.0 : std::max(0.0, eig.values.front());
    return std::sqrt(top);
}

}  // namespace lrns
