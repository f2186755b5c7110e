#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "lrns/linalg.hpp"
#include "lrns/matrix.hpp"
#include "lrns/parallel.hpp"

namespace lrns {

/// Reduced rank k = ceil(tau * N). The tiny downward nudge keeps products
/// like 0.88 * 225 (which lands at 198 + 3 ulp) from rounding up a rank.
inline std::size_t reduced_rank(double tau, std::size_t n) {
    detail::require(tau > 0.0 && tau <= 1.0, "compression ratio must lie in (0, 1]");
    const auto k = static_cast<std::size_t>(std::ceil(tau * static_cast<double>(n) - 1e-9));
    return std::min(std::max<std::size_t>(k, 1), n);
}

/// An ordered set of same-shaped square matrices; the object the shared-basis
/// approximation is built over.
struct MatrixCollection {
    std::size_t dimension = 0;
    std::vector<DenseMatrix> samples;

    MatrixCollection() = default;
    explicit MatrixCollection(std::vector<DenseMatrix> s) : samples(std::move(s)) {
        detail::require(!samples.empty(), "MatrixCollection: need at least one sample");
        dimension = samples.front().rows;
        for (const auto& b : samples)
            detail::require(b.rows == dimension && b.cols == dimension,
                            "MatrixCollection: sample dimension mismatch");
    }

    std::size_t count() const { return samples.size(); }
};

/// Shared orthonormal basis U plus per-sample factors V_m = B_m^T U; sample m
/// is reconstructed as U V_m^T.
struct LowRankFactors {
    DenseMatrix basis;                 // N x k, orthonormal columns
    std::vector<DenseMatrix> factors;  // M matrices, each N x k
    double tau = 0.0;
    std::size_t rank = 0;

    /// (M+1) * N * k: one basis plus M factors, each N*k floats.
    std::size_t stored_floats() const {
        std::size_t total = basis.data.size();
        for (const auto& v : factors) total += v.data.size();
        return total;
    }
};

struct CompressionReport {
    double rmsre = 0.0;
    double energy = 0.0;                    // e(tau) at the factors' ratio
    std::vector<double> gram_eigenvalues;   // descending
};

/// Sum over samples of B_m B_m^T; symmetric PSD by construction. Accumulated
/// sample-by-sample into a single N x N buffer, lower triangle first.
inline DenseMatrix gram_accumulate(const MatrixCollection& coll) {
    detail::require(!coll.samples.empty(), "gram_accumulate: empty collection");
    DenseMatrix gram(coll.dimension, coll.dimension);
    for (const auto& b : coll.samples) {
        detail::require(b.rows == coll.dimension && b.cols == coll.dimension,
                        "gram_accumulate: sample dimension mismatch");
        syrk_accumulate(gram, b);
    }
    mirror_lower(gram);
    return gram;
}

/// Streaming variant: fill(m, buffer) writes sample m into the provided
/// dense buffer. Keeps peak memory at the Gram plus one sample.
inline DenseMatrix gram_accumulate_stream(
    std::size_t dimension, std::size_t count,
    const std::function<void(std::size_t, DenseMatrix&)>& fill) {
    detail::require(count >= 1, "gram_accumulate_stream: empty collection");
    DenseMatrix gram(dimension, dimension);
    DenseMatrix buffer(dimension, dimension);
    for (std::size_t m = 0; m < count; ++m) {
        fill(m, buffer);
        syrk_accumulate(gram, buffer);
    }
    mirror_lower(gram);
    return gram;
}

/// Builds factors against a caller-supplied orthonormal basis (V_m = B_m^T U).
inline LowRankFactors factors_from_basis(const MatrixCollection& coll, DenseMatrix basis) {
    detail::require(basis.rows == coll.dimension, "factors_from_basis: dimension mismatch");
    LowRankFactors out;
    out.rank = basis.cols;
    out.tau = static_cast<double>(basis.cols) / static_cast<double>(coll.dimension);
    out.basis = std::move(basis);
    out.factors.resize(coll.count());
    parallel_for(0, coll.count(), [&](std::size_t m) {
        out.factors[m] = multiply_at_b(coll.samples[m], out.basis);
    });
    return out;
}

/// Non-iterative shared-basis compression: U is the top-k eigenbasis of the
/// Gram accumulation (randomized eigendecomposition), V_m = B_m^T U. The
/// oversampling in cfg is clamped so the sketch never exceeds the dimension;
/// cfg.target_rank is ignored in favour of ceil(tau * N).
inline LowRankFactors compress(const MatrixCollection& coll, double tau, RsvdConfig cfg) {
    const std::size_t n = coll.dimension;
    const std::size_t k = reduced_rank(tau, n);
    DenseMatrix gram = gram_accumulate(coll);
    cfg.target_rank = k;
    cfg.oversampling = std::min(cfg.oversampling, n - k);
    LowRankFactors out = factors_from_basis(coll, rsvd_top_eigvecs(gram, cfg));
    out.tau = tau;
    return out;
}

/// Streaming compression over transient dense samples; returns the factors
/// and, through gram_out if non-null, the accumulated Gram matrix.
inline LowRankFactors compress_stream(
    std::size_t dimension, std::size_t count,
    const std::function<void(std::size_t, DenseMatrix&)>& fill, double tau, RsvdConfig cfg,
    DenseMatrix* gram_out = nullptr) {
    const std::size_t k = reduced_rank(tau, dimension);
    DenseMatrix gram = gram_accumulate_stream(dimension, count, fill);
    cfg.target_rank = k;
    cfg.oversampling = std::min(cfg.oversampling, dimension - k);
    LowRankFactors out;
    out.basis = rsvd_top_eigvecs(gram, cfg);
    out.rank = k;
    out.tau = tau;
    out.factors.resize(count);
    if (gram_out) *gram_out = std::move(gram);
    std::vector<DenseMatrix> buffers(std::min<std::size_t>(threads(), count),
                                     DenseMatrix(dimension, dimension));
    // one transient dense sample per worker; factors land in per-sample slots
    const std::size_t nt = buffers.size();
    parallel_for(0, nt, [&](std::size_t t) {
        for (std::size_t m = t; m < count; m += nt) {
            fill(m, buffers[t]);
            out.factors[m] = multiply_at_b(buffers[t], out.basis);
        }
    });
    return out;
}

/// Root mean square reconstruction error, computed definitionally:
/// sqrt( (1/M) sum_m ||B_m - U V_m^T||_F^2 ).
inline double rmsre(const LowRankFactors& factors, const MatrixCollection& coll) {
    detail::require(factors.factors.size() == coll.count(), "rmsre: sample count mismatch");
    detail::require(factors.basis.rows == coll.dimension, "rmsre: dimension mismatch");
    const std::size_t m_count = coll.count();
    std::vector<double> per_sample(m_count, 0.0);
    parallel_for(0, m_count, [&](std::size_t m) {
        DenseMatrix rec = multiply_abt(factors.basis, factors.factors[m]);
        double s = 0.0;
        for (std::size_t i = 0; i < rec.data.size(); ++i) {
            const double d = coll.samples[m].data[i] - rec.data[i];
            s += d * d;
        }
        per_sample[m] = s;
    });
    double total = 0.0;
    for (double s : per_sample) total += s;
    return std::sqrt(total / static_cast<double>(m_count));
}

/// Cumulative energy ratio e(tau) of a descending nonnegative spectrum.
struct EnergyProfile {
    std::vector<double> eigenvalues;
    std::vector<double> prefix;
    double total = 0.0;

    double operator()(double tau) const {
        const std::size_t k = reduced_rank(tau, eigenvalues.size());
        return prefix[k] / total;
    }
};

inline EnergyProfile energy_profile(std::vector<double> eigs_desc) {
    EnergyProfile p;
    p.prefix.assign(eigs_desc.size() + 1, 0.0);
    for (std::size_t i = 0; i < eigs_desc.size(); ++i) {
        detail::require(eigs_desc[i] >= -1e-12 * std::abs(eigs_desc.front()),
                        "energy_profile: eigenvalues must be nonnegative");
        p.prefix[i + 1] = p.prefix[i] + std::max(eigs_desc[i], 0.0);
    }
    p.total = p.prefix.back();
    if (p.total <= 0.0) throw std::runtime_error("energy_profile: all-zero spectrum");
    p.eigenvalues = std::move(eigs_desc);
    return p;
}

/// Smallest tau on the grid {1/N, ..., 1} whose cumulative energy reaches the
/// target. Automates "choose tau with e(tau) sufficiently close to 1".
inline double choose_tau(const std::vector<double>& eigs_desc, double target_energy) {
    detail::require(target_energy > 0.0 && target_energy <= 1.0,
                    "choose_tau: target energy must lie in (0, 1]");
    EnergyProfile p = energy_profile(eigs_desc);
    const std::size_t n = p.eigenvalues.size();
    for (std::size_t k = 1; k <= n; ++k) {
        if (p.prefix[k] >= target_energy * p.total - 1e-15 * p.total)
            return static_cast<double>(k) / static_cast<double>(n);
    }
    return 1.0;
}

}  // namespace lrns
