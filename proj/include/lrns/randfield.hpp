#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lrns/fem.hpp"
#include "lrns/linalg.hpp"
#include "lrns/parallel.hpp"
#include "lrns/rng.hpp"

#include "json.hpp"

namespace lrns {

/// Exponential covariance kernel Cov(x, y) = exp(-|x - y| / ell) with the
/// Euclidean distance.
struct CovarianceSpec {
    double correlation_length = 0.2;

    double operator()(double x0, double y0, double x1, double y1) const {
        const double dx = x0 - x1, dy = y0 - y1;
        return std::exp(-std::sqrt(dx * dx + dy * dy) / correlation_length);
    }
};

/// Truncated spectral basis of the covariance operator: descending positive
/// eigenvalues and nodal eigenfunctions, L2-orthonormal under the uniform
/// node weights used by the Nystrom discretization.
struct KLBasis {
    std::size_t terms = 0;
    std::vector<double> eigenvalues;  // lambda_t, descending, positive
    DenseMatrix modes;                // node x T, column t = r_t
    double node_weight = 0.0;         // 1 / node count
};

/// Nystrom discretization with uniform node weights: assemble the sampled
/// covariance matrix, eigendecompose, keep the top T pairs, and rescale the
/// eigenvectors to unit discrete L2 norm.
inline KLBasis kl_decompose(std::span<const double> xs, std::span<const double> ys,
                            const CovarianceSpec& cov, std::size_t terms) {
    detail::require(cov.correlation_length > 0.0, "kl_decompose: correlation length must be > 0");
    const std::size_t n = xs.size();
    detail::require(n >= 1 && ys.size() == n, "kl_decompose: bad point set");
    detail::require(terms >= 1 && terms <= n, "kl_decompose: T must lie in [1, node count]");

    DenseMatrix c(n, n);
    parallel_for(0, n, [&](std::size_t i) {
        for (std::size_t j = 0; j < n; ++j) c(i, j) = cov(xs[i], ys[i], xs[j], ys[j]);
    });
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) {
            const double m = 0.5 * (c(i, j) + c(j, i));
            c(i, j) = m;
            c(j, i) = m;
        }
    SymmetricEigen eig = sym_eig_ql(std::move(c));
    const double floor = 1e-12 * std::max(eig.values.front(), 0.0);
    std::size_t positive = 0;
    while (positive < n && eig.values[positive] > floor) ++positive;
    if (terms > positive)
        throw std::runtime_error("kl_decompose: requested " + std::to_string(terms) +
                                 " terms but only " + std::to_string(positive) +
                                 " positive eigenvalues are available");

    KLBasis basis;
    basis.terms = terms;
    basis.node_weight = 1.0 / static_cast<double>(n);
    basis.eigenvalues.resize(terms);
    basis.modes = DenseMatrix(n, terms);
    const double mode_scale = std::sqrt(static_cast<double>(n));
    for (std::size_t t = 0; t < terms; ++t) {
        basis.eigenvalues[t] = eig.values[t] * basis.node_weight;
        // deterministic sign: largest-magnitude component positive
        std::size_t arg = 0;
        for (std::size_t i = 1; i < n; ++i)
            if (std::abs(eig.vectors(i, t)) > std::abs(eig.vectors(arg, t))) arg = i;
        const double sign = eig.vectors(arg, t) >= 0.0 ? 1.0 : -1.0;
        for (std::size_t i = 0; i < n; ++i) basis.modes(i, t) = sign * mode_scale * eig.vectors(i, t);
    }
    return basis;
}

inline KLBasis kl_decompose(const StructuredMesh& mesh, const CovarianceSpec& cov,
                            std::size_t terms) {
    return kl_decompose(mesh.node_x, mesh.node_y, cov, terms);
}

/// I.i.d. standard-normal draws with values outside [-bound, bound] rejected;
/// reproducible per seed.
inline std::vector<double> sample_truncated_normal(std::uint64_t seed, std::size_t count,
                                                   double bound = 3.0) {
    detail::require(bound > 0.0, "sample_truncated_normal: bound must be positive");
    CounterRng rng(seed);
    std::vector<double> out(count);
    for (double& v : out) {
        double z = rng.gaussian();
        while (std::abs(z) > bound) z = rng.gaussian();
        v = z;
    }
    return out;
}

/// One realization of the perturbation field: the KL coefficients and the
/// assembled nodal values sigma * sum_t sqrt(lambda_t) r_t Y_t.
struct FieldSample {
    std::vector<double> draws;
    Vector nodal;
    std::uint64_t seed = 0;
};

inline FieldSample sample_field(const KLBasis& basis, double sigma, std::span<const double> draws,
                                std::uint64_t seed = 0) {
    detail::require(sigma >= 0.0 && sigma <= 1.0, "sample_field: sigma must lie in [0, 1]");
    detail::require(draws.size() == basis.terms, "sample_field: draw count != KL terms");
    FieldSample s;
    s.draws.assign(draws.begin(), draws.end());
    s.seed = seed;
    const std::size_t n = basis.modes.rows;
    s.nodal.assign(n, 0.0);
    for (std::size_t t = 0; t < basis.terms; ++t) {
        const double c = sigma * std::sqrt(basis.eigenvalues[t]) * draws[t];
        for (std::size_t i = 0; i < n; ++i) s.nodal[i] += c * basis.modes(i, t);
    }
    return s;
}

/// Per-sample seeds are split from the master, so samples may be generated on
/// any thread in any order with identical results.
inline std::vector<FieldSample> sample_fields(const KLBasis& basis, double sigma,
                                              std::size_t count, std::uint64_t master_seed,
                                              double bound = 3.0) {
    std::vector<FieldSample> out(count);
    parallel_for(0, count, [&](std::size_t m) {
        const std::uint64_t seed = split_seed(master_seed, m);
        out[m] = sample_field(basis, sigma, sample_truncated_normal(seed, basis.terms, bound), seed);
    });
    return out;
}

/// Min/max of the total coefficient over all nodes and samples; samples whose
/// total dips nonpositive are flagged, never rejected here.
struct EllipticityReport {
    double min_value = 0.0;
    double max_value = 0.0;
    std::vector<std::size_t> flagged;

    bool uniformly_positive() const { return flagged.empty() && min_value > 0.0; }

    nlohmann::json to_json() const {
        return nlohmann::json{{"min", min_value}, {"max", max_value}, {"flagged_samples", flagged}};
    }
};

inline EllipticityReport check_ellipticity(std::span<const double> mean_field,
                                           const std::vector<FieldSample>& samples) {
    EllipticityReport report;
    bool first = true;
    for (std::size_t m = 0; m < samples.size(); ++m) {
        detail::require(samples[m].nodal.size() == mean_field.size(),
                        "check_ellipticity: field size mismatch");
        double lo = 0.0, hi = 0.0;
        for (std::size_t i = 0; i < mean_field.size(); ++i) {
            const double v = mean_field[i] + samples[m].nodal[i];
            if (i == 0) {
                lo = hi = v;
            } else {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
        if (first) {
            report.min_value = lo;
            report.max_value = hi;
            first = false;
        } else {
            report.min_value = std::min(report.min_value, lo);
            report.max_value = std::max(report.max_value, hi);
        }
        if (lo <= 0.0) report.flagged.push_back(m);
    }
    if (samples.empty() && !mean_field.empty()) {
        report.min_value = mean_field[0];
        report.max_value = mean_field[0];
        for (double v : mean_field) {
            report.min_value = std::min(report.min_value, v);
            report.max_value = std::max(report.max_value, v);
        }
    }
    return report;
}

}  // namespace lrns
