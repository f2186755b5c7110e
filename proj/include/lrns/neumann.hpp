#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "lrns/linalg.hpp"
#include "lrns/lowrank.hpp"
#include "lrns/matrix.hpp"
#include "lrns/parallel.hpp"

#include "json.hpp"

namespace lrns {

/// Truncated-series application of (Abar + U V_m^T)^{-1}. The mean matrix is
/// factorized once, the correction basis W = Abar^{-1} U is precomputed, and
/// each application costs one mean solve plus R rank-k corrections.
struct NeumannOperator {
    SymmetricFactorization mean;                     // factorization of Abar
    DenseMatrix correction;                          // W = Abar^{-1} U, N x k
    std::shared_ptr<const LowRankFactors> factors;   // shared U, {V_m}
    std::size_t truncation = 0;                      // R
    double guard_threshold = 0.95;
    std::size_t guard_iterations = 30;

    std::size_t dimension() const { return mean.dimension; }
    std::size_t sample_count() const { return factors->factors.size(); }
    std::size_t rank() const { return factors->rank; }

    struct Scratch {
        Vector term;   // N
        Vector inner;  // k
    };

    Scratch make_scratch() const { return Scratch{Vector(dimension()), Vector(rank())}; }

    /// out = sum_{r=0..R} (-W V_m^T)^r Abar^{-1} rhs via the term recursion
    /// t_0 = Abar^{-1} rhs, t_{r+1} = -W (V_m^T t_r).
    void apply_inverse_into(std::size_t m, std::span<const double> rhs, std::span<double> out,
                            Scratch& scratch) const {
        const DenseMatrix& v = factors->factors[m];
        mean.solve_into(rhs, scratch.term);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = scratch.term[i];
        for (std::size_t r = 0; r < truncation; ++r) {
            matvec_t_into(v, scratch.term, scratch.inner);
            matvec_into(correction, scratch.inner, scratch.term);
            for (double& t : scratch.term) t = -t;
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += scratch.term[i];
        }
    }

    Vector apply_inverse(std::size_t m, std::span<const double> rhs) const {
        detail::require(m < sample_count(), "apply_inverse: sample index out of range");
        detail::require(rhs.size() == dimension(), "apply_inverse: rhs dimension mismatch");
        Vector out(dimension());
        Scratch scratch = make_scratch();
        apply_inverse_into(m, rhs, out, scratch);
        return out;
    }
};

inline NeumannOperator build_operator(const DenseMatrix& mean_matrix,
                                      std::shared_ptr<const LowRankFactors> factors,
                                      std::size_t truncation, double guard_threshold = 0.95) {
    detail::require(factors != nullptr, "build_operator: factors required");
    detail::require(mean_matrix.rows == factors->basis.rows,
                    "build_operator: mean/basis dimension mismatch");
    detail::require(guard_threshold > 0.0 && guard_threshold <= 1.0,
                    "build_operator: guard threshold must lie in (0, 1]");
    NeumannOperator op;
    op.mean = factorize_spd(mean_matrix);
    op.correction = op.mean.solve_matrix(factors->basis);
    op.factors = std::move(factors);
    op.truncation = truncation;
    op.guard_threshold = guard_threshold;
    return op;
}

/// Power-iteration estimate of the spectral norm of Abar^{-1} U V_m^T using
/// the rank-k structure (forward x -> W (V_m^T x), transpose via V_m W^T).
inline double guard_sample(const NeumannOperator& op, std::size_t m) {
    detail::require(m < op.sample_count(), "guard_sample: sample index out of range");
    const DenseMatrix& v = op.factors->factors[m];
    const DenseMatrix& w = op.correction;
    const std::size_t n = op.dimension();
    Vector inner(op.rank());
    LinearOp lin{n,
                 [&](std::span<const double> x, std::span<double> y) {
                     matvec_t_into(v, x, inner);
                     matvec_into(w, inner, y);
                 },
                 [&](std::span<const double> x, std::span<double> y) {
                     matvec_t_into(w, x, inner);
                     matvec_into(v, inner, y);
                 }};
    return spectral_norm_estimate(lin, op.guard_iterations, 0x9E3779B9ULL + m);
}

/// Per-sample convergence diagnostics for a solve. Violations are reported,
/// never thrown; the caller decides whether to proceed.
struct SolveReport {
    std::vector<double> rho;                // spectral-norm estimates per sample
    std::vector<std::size_t> violations;    // samples with rho >= guard threshold
    std::vector<std::size_t> divergent;     // overridden samples with rho >= 1
    std::size_t terms_used = 0;             // R
    double guard_threshold = 0.95;

    bool clean() const { return violations.empty(); }

    nlohmann::json to_json() const {
        return nlohmann::json{{"rho", rho},
                              {"guard_violations", violations},
                              {"divergence_warnings", divergent},
                              {"terms_used", terms_used},
                              {"guard_threshold", guard_threshold}};
    }
};

inline SolveReport run_guards(const NeumannOperator& op) {
    SolveReport report;
    report.terms_used = op.truncation;
    report.guard_threshold = op.guard_threshold;
    report.rho.assign(op.sample_count(), 0.0);
    parallel_for(0, op.sample_count(), [&](std::size_t m) { report.rho[m] = guard_sample(op, m); });
    for (std::size_t m = 0; m < report.rho.size(); ++m) {
        if (report.rho[m] >= op.guard_threshold) report.violations.push_back(m);
        if (report.rho[m] >= 1.0) report.divergent.push_back(m);
    }
    return report;
}

struct CollectionSolution {
    std::vector<std::vector<Vector>> samples;  // [m][l] solution vectors
    std::vector<Vector> mean;                  // [l] sample means
    SolveReport report;
};

/// Applies the truncated-series inverse to every (sample, load) pair and
/// averages over samples. Loads are independent systems here; time-stepping
/// recursions live with the applications that own them.
inline CollectionSolution solve_collection(const NeumannOperator& op,
                                           const std::vector<Vector>& loads) {
    detail::require(!loads.empty(), "solve_collection: loads must be nonempty");
    const std::size_t m_count = op.sample_count();
    const std::size_t l_count = loads.size();
    const std::size_t n = op.dimension();

    CollectionSolution out;
    out.report = run_guards(op);

    // deterministic solutions of Abar u = b_l, shared across samples
    std::vector<Vector> unperturbed(l_count);
    for (std::size_t l = 0; l < l_count; ++l) {
        detail::require(loads[l].size() == n, "solve_collection: load dimension mismatch");
        unperturbed[l] = op.mean.solve(loads[l]);
    }

    out.samples.assign(m_count, std::vector<Vector>(l_count));
    parallel_for(0, m_count, [&](std::size_t m) {
        NeumannOperator::Scratch scratch = op.make_scratch();
        const DenseMatrix& v = op.factors->factors[m];
        for (std::size_t l = 0; l < l_count; ++l) {
            Vector& u = out.samples[m][l];
            u.assign(n, 0.0);
            scratch.term = unperturbed[l];
            for (std::size_t i = 0; i < n; ++i) u[i] = scratch.term[i];
            for (std::size_t r = 0; r < op.truncation; ++r) {
                matvec_t_into(v, scratch.term, scratch.inner);
                matvec_into(op.correction, scratch.inner, scratch.term);
                for (double& t : scratch.term) t = -t;
                for (std::size_t i = 0; i < n; ++i) u[i] += scratch.term[i];
            }
        }
    });

    out.mean = deterministic_sample_sum<std::vector<Vector>>(
        m_count,
        [&] { return std::vector<Vector>(l_count, Vector(n, 0.0)); },
        [&](std::vector<Vector>& acc, std::size_t m) {
            for (std::size_t l = 0; l < l_count; ++l)
                axpy(1.0, out.samples[m][l], acc[l]);
        },
        [&](std::vector<Vector>& total, std::vector<Vector>& block) {
            for (std::size_t l = 0; l < l_count; ++l) axpy(1.0, block[l], total[l]);
        });
    for (auto& u : out.mean) scale(u, 1.0 / static_cast<double>(m_count));
    return out;
}

}  // namespace lrns
