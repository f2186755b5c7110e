#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lrns/diffusion.hpp"

namespace lrns {

enum class Optimizer { newton, steepest, sgd };

inline Optimizer optimizer_from_name(const std::string& name) {
    if (name == "newton") return Optimizer::newton;
    if (name == "steepest") return Optimizer::steepest;
    if (name == "sgd") return Optimizer::sgd;
    throw std::invalid_argument("unknown optimizer '" + name +
                                "'; known names: newton, steepest, sgd");
}

struct ControlConfig : DiffusionConfig {
    std::string desired = "heat_decay_sin2pix_sinpiy";  // U(x, t)
    double beta = 1e-3;                                 // control penalty
    double tolerance = 1e-3;                            // gradient stop
    std::size_t line_search_cap = 50;                   // it_max
    Optimizer optimizer = Optimizer::newton;
    std::size_t max_iterations = 500;                   // outer safety cap
    std::size_t sgd_batch = 32;
    std::size_t sgd_max_iterations = 1000;
    bool literal_gradient = false;        // paper-faithful residual Z_m f_l - U_l
    std::size_t dense_limit = 1500;       // materialize Z_m and H up to this size

    ControlConfig() {
        initial = "sin2pix_sinpiy";
        source = "zero";  // unused by the control path; f is the control itself
    }
};

/// Controls and states are per-step interior vectors: controls[l-1] is f_l,
/// states[m][l-1] is u_{m,l} for l = 1..L.
using Controls = std::vector<Vector>;
using States = std::vector<std::vector<Vector>>;

/// Backward-Euler reduced operators: Kbar = G/dt + Abar (interior), the
/// shared compression of the perturbations, per-sample solution maps
/// Z_m = sum_r (-Kbar^{-1} U V_m^T)^r Kbar^{-1} G, and the constant Hessian
/// H = (1/M) sum_m dt Z_m^T G Z_m + beta dt G.
struct ReducedOperators {
    ControlConfig config;
    DiffusionSetup setup;
    SymmetricFactorization kbar_factor;
    SymmetricFactorization mass_factor;  // for the L2 Riesz norm of gradients
    std::shared_ptr<const LowRankFactors> factors;  // interior rows, full-grid rank
    std::size_t compression_grid = 0;    // N of the compression grid
    DenseMatrix correction;              // W = Kbar^{-1} U
    SolveReport guards;
    std::vector<DenseMatrix> z_dense;    // materialized Z_m (empty above dense_limit)
    DenseMatrix hessian;                 // materialized (empty above dense_limit)
    SymmetricFactorization hessian_factor;
    double hessian_asymmetry = 0.0;      // ||H - H^T||_F / ||H||_F before symmetrization
    std::vector<Vector> desired_int;     // U_l, l = 1..L
    std::vector<std::vector<Vector>> lift;  // [m][l-1] affine boundary terms (empty when g == 0)
    Vector u0_int;

    std::size_t interior() const { return setup.interior(); }
    std::size_t step_count() const { return config.steps; }
    double dt() const { return config.dt(); }
    bool materialized() const { return !z_dense.empty(); }

    /// y = Z_m x.
    void z_apply(std::size_t m, std::span<const double> x, std::span<double> y) const {
        if (materialized()) {
            matvec_into(z_dense[m], x, y);
            return;
        }
        const std::size_t n = interior();
        Vector gx(n), term(n), inner(factors->rank);
        setup.mass_int.matvec_into(x, gx);
        kbar_factor.solve_into(gx, term);
        for (std::size_t i = 0; i < n; ++i) y[i] = term[i];
        const DenseMatrix& v = factors->factors[m];
        for (std::size_t r = 0; r < config.neumann_terms; ++r) {
            matvec_t_into(v, term, inner);
            matvec_into(correction, inner, term);
            for (double& t : term) t = -t;
            for (std::size_t i = 0; i < n; ++i) y[i] += term[i];
        }
    }

    /// y = Z_m^T x = G Kbar^{-1} sum_r (-V_m W^T)^r x.
    void z_apply_transpose(std::size_t m, std::span<const double> x, std::span<double> y) const {
        if (materialized()) {
            matvec_t_into(z_dense[m], x, y);
            return;
        }
        const std::size_t n = interior();
        Vector acc(x.begin(), x.end());
        Vector term(x.begin(), x.end());
        Vector inner(factors->rank), solved(n);
        const DenseMatrix& v = factors->factors[m];
        for (std::size_t r = 0; r < config.neumann_terms; ++r) {
            matvec_t_into(correction, term, inner);
            matvec_into(v, inner, term);
            for (double& t : term) t = -t;
            for (std::size_t i = 0; i < n; ++i) acc[i] += term[i];
        }
        kbar_factor.solve_into(acc, solved);
        setup.mass_int.matvec_into(solved, y);
    }
};

inline ReducedOperators build_reduced(const ControlConfig& cfg) {
    detail::require(cfg.beta > 0.0, "control: beta must be positive");
    detail::require(cfg.tolerance > 0.0, "control: tolerance must be positive");
    ReducedOperators ops;
    ops.config = cfg;
    ops.setup = build_setup(cfg);
    const std::size_t n = ops.interior();
    const double dt = cfg.dt();

    // backward-Euler mean operator
    SparseSymMatrix kbar = ops.setup.stiff_mean_int;
    detail::require(kbar.values.size() == ops.setup.mass_int.values.size(),
                    "build_reduced: operator stencils differ");
    for (std::size_t p = 0; p < kbar.values.size(); ++p)
        kbar.values[p] += ops.setup.mass_int.values[p] / dt;
    ops.kbar_factor = factorize_spd(densify(kbar));
    ops.mass_factor = factorize_spd(densify(ops.setup.mass_int));

    PerturbationFactors compressed = compress_perturbations(ops.setup, cfg.tau);
    ops.factors = compressed.interior;
    ops.compression_grid = compressed.full_dimension;
    ops.correction = ops.kbar_factor.solve_matrix(ops.factors->basis);

    {
        NeumannOperator probe;
        probe.mean = ops.kbar_factor;
        probe.correction = ops.correction;
        probe.factors = ops.factors;
        probe.truncation = cfg.neumann_terms;
        probe.guard_threshold = cfg.guard_threshold;
        probe.guard_iterations = cfg.guard_iterations;
        ops.guards = run_guards(probe);
    }

    const SpaceTimeFn desired = lookup_function(cfg.desired);
    ops.desired_int.resize(cfg.steps);
    for (std::size_t l = 1; l <= cfg.steps; ++l) {
        const double t = dt * static_cast<double>(l);
        Vector u(n);
        for (std::size_t ii = 0; ii < n; ++ii) {
            const std::size_t node = ops.setup.dofs.interior[ii];
            u[ii] = desired.fn(ops.setup.mesh.node_x[node], ops.setup.mesh.node_y[node], t);
        }
        ops.desired_int[l - 1] = std::move(u);
    }
    ops.u0_int = restrict_vector(ops.setup.u0_full, ops.setup.dofs);

    if (!ops.setup.boundary.identically_zero) {
        // affine boundary terms of the backward-Euler recursion, pushed
        // through the truncated inverse once per (sample, step)
        NeumannOperator op;
        op.mean = ops.kbar_factor;
        op.correction = ops.correction;
        op.factors = ops.factors;
        op.truncation = cfg.neumann_terms;
        ops.lift.assign(cfg.samples, std::vector<Vector>(cfg.steps));
        std::vector<Vector> g_at(cfg.steps + 1);
        for (std::size_t l = 0; l <= cfg.steps; ++l) {
            Vector g(ops.setup.dofs.boundary.size());
            for (std::size_t b = 0; b < g.size(); ++b) {
                const std::size_t node = ops.setup.dofs.boundary[b];
                g[b] = ops.setup.boundary.fn(ops.setup.mesh.node_x[node],
                                             ops.setup.mesh.node_y[node],
                                             dt * static_cast<double>(l));
            }
            g_at[l] = std::move(g);
        }
        parallel_for(0, cfg.samples, [&](std::size_t m) {
            NeumannOperator::Scratch scratch = op.make_scratch();
            for (std::size_t l = 0; l < cfg.steps; ++l) {
                Vector gdiff(g_at[l].size());
                for (std::size_t b = 0; b < gdiff.size(); ++b)
                    gdiff[b] = (g_at[l + 1][b] - g_at[l][b]) / dt;
                Vector rhs = boundary_product(ops.setup.mass_full, ops.setup.dofs, gdiff);
                Vector lift_mean =
                    boundary_product(ops.setup.stiff_mean_full, ops.setup.dofs, g_at[l + 1]);
                Vector lift_pert =
                    boundary_product(ops.setup.perturb_full[m], ops.setup.dofs, g_at[l + 1]);
                for (std::size_t i = 0; i < rhs.size(); ++i)
                    rhs[i] = -(rhs[i] + lift_mean[i] + lift_pert[i]);
                ops.lift[m][l].assign(n, 0.0);
                op.apply_inverse_into(m, rhs, ops.lift[m][l], scratch);
            }
        });
    }

    if (n <= cfg.dense_limit) {
        // Z_m = sum_r (-W V_m^T)^r T with T = Kbar^{-1} G shared; Horner over r
        DenseMatrix t_shared = ops.kbar_factor.solve_matrix(densify(ops.setup.mass_int));
        ops.z_dense.assign(cfg.samples, DenseMatrix());
        parallel_for(0, cfg.samples, [&](std::size_t m) {
            DenseMatrix x = t_shared;
            const DenseMatrix& v = ops.factors->factors[m];
            for (std::size_t r = 0; r < cfg.neumann_terms; ++r) {
                DenseMatrix inner = multiply_at_b(v, x);       // k x n
                DenseMatrix wx = multiply(ops.correction, inner);
                for (std::size_t i = 0; i < wx.data.size(); ++i)
                    wx.data[i] = t_shared.data[i] - wx.data[i];
                x = std::move(wx);
            }
            ops.z_dense[m] = std::move(x);
        });

        DenseMatrix h = deterministic_sample_sum<DenseMatrix>(
            cfg.samples, [&] { return DenseMatrix(n, n); },
            [&](DenseMatrix& block, std::size_t m) {
                DenseMatrix gz = sparse_dense_multiply(ops.setup.mass_int, ops.z_dense[m]);
                DenseMatrix s = multiply_at_b(ops.z_dense[m], gz);
                for (std::size_t i = 0; i < block.data.size(); ++i) block.data[i] += s.data[i];
            },
            [&](DenseMatrix& total, DenseMatrix& block) {
                for (std::size_t i = 0; i < total.data.size(); ++i)
                    total.data[i] += block.data[i];
            });
        const double w = dt / static_cast<double>(cfg.samples);
        for (double& v : h.data) v *= w;
        DenseMatrix mass_term = densify(ops.setup.mass_int);
        for (std::size_t i = 0; i < h.data.size(); ++i)
            h.data[i] += cfg.beta * dt * mass_term.data[i];

        double asym = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double d = h(i, j) - h(j, i);
                asym += 2.0 * d * d;
            }
        const double hn = frobenius_norm(h);
        ops.hessian_asymmetry = hn > 0.0 ? std::sqrt(asym) / hn : 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double m = 0.5 * (h(i, j) + h(j, i));
                h(i, j) = m;
                h(j, i) = m;
            }
        ops.hessian_factor = factorize_spd(h);
        ops.hessian = std::move(h);
    }
    return ops;
}

/// States under the per-step recursion u_{m,l} = Z_m (f_l + u_{m,l-1}/dt)
/// (+ boundary terms), starting from the interpolated initial state.
inline States forward_map(const ReducedOperators& ops, const Controls& controls) {
    detail::require(controls.size() == ops.step_count(), "forward_map: control count != L");
    const std::size_t n = ops.interior();
    const double dt = ops.dt();
    States states(ops.config.samples, std::vector<Vector>(ops.step_count(), Vector(n)));
    parallel_for(0, ops.config.samples, [&](std::size_t m) {
        Vector prev = ops.u0_int;
        Vector arg(n);
        for (std::size_t l = 0; l < ops.step_count(); ++l) {
            for (std::size_t i = 0; i < n; ++i) arg[i] = controls[l][i] + prev[i] / dt;
            ops.z_apply(m, arg, states[m][l]);
            if (!ops.lift.empty()) axpy(1.0, ops.lift[m][l], states[m][l]);
            prev = states[m][l];
        }
    });
    return states;
}

/// Fully discrete tracking objective for given states.
inline double objective(const ReducedOperators& ops, const Controls& controls,
                        const States& states) {
    const double dt = ops.dt();
    const std::size_t n = ops.interior();
    const double track = deterministic_sample_sum<double>(
        ops.config.samples, [] { return 0.0; },
        [&](double& acc, std::size_t m) {
            Vector diff(n), weighted(n);
            for (std::size_t l = 0; l < ops.step_count(); ++l) {
                for (std::size_t i = 0; i < n; ++i)
                    diff[i] = states[m][l][i] - ops.desired_int[l][i];
                ops.setup.mass_int.matvec_into(diff, weighted);
                acc += 0.5 * dt * dot(diff, weighted);
            }
        },
        [](double& total, double& block) { total += block; });
    double penalty = 0.0;
    Vector weighted(n);
    for (std::size_t l = 0; l < ops.step_count(); ++l) {
        ops.setup.mass_int.matvec_into(controls[l], weighted);
        penalty += 0.5 * ops.config.beta * dt * dot(controls[l], weighted);
    }
    return track / static_cast<double>(ops.config.samples) + penalty;
}

/// The frozen-previous-state surrogate: previous states are pinned to
/// base_states, so trial states are Z_m(f_l + u_base_{m,l-1}/dt) + lift and
/// the functional is an exact quadratic in the trial controls. This is the
/// functional the per-step gradient differentiates and line searches descend.
inline double surrogate_objective(const ReducedOperators& ops, const Controls& trial,
                                  const States& base_states) {
    detail::require(trial.size() == ops.step_count(), "surrogate_objective: control count != L");
    const double dt = ops.dt();
    const std::size_t n = ops.interior();
    const double track = deterministic_sample_sum<double>(
        ops.config.samples, [] { return 0.0; },
        [&](double& acc, std::size_t m) {
            Vector arg(n), state(n), weighted(n);
            for (std::size_t l = 0; l < ops.step_count(); ++l) {
                const Vector& prev = l == 0 ? ops.u0_int : base_states[m][l - 1];
                for (std::size_t i = 0; i < n; ++i) arg[i] = trial[l][i] + prev[i] / dt;
                ops.z_apply(m, arg, state);
                if (!ops.lift.empty()) axpy(1.0, ops.lift[m][l], state);
                for (std::size_t i = 0; i < n; ++i) state[i] -= ops.desired_int[l][i];
                ops.setup.mass_int.matvec_into(state, weighted);
                acc += 0.5 * dt * dot(state, weighted);
            }
        },
        [](double& total, double& block) { total += block; });
    double penalty = 0.0;
    Vector weighted(n);
    for (std::size_t l = 0; l < ops.step_count(); ++l) {
        ops.setup.mass_int.matvec_into(trial[l], weighted);
        penalty += 0.5 * ops.config.beta * dt * dot(trial[l], weighted);
    }
    return track / static_cast<double>(ops.config.samples) + penalty;
}

/// Per-step gradient g_l = (1/M) sum_m dt Z_m^T G (u_{m,l} - U_l)
/// + beta dt G f_l. The literal mode replaces the state residual with
/// Z_m f_l - U_l, dropping the carried previous state.
inline Controls gradient(const ReducedOperators& ops, const Controls& controls,
                         const States& states) {
    const double dt = ops.dt();
    const std::size_t n = ops.interior();
    const std::size_t l_count = ops.step_count();
    const bool literal = ops.config.literal_gradient;
    auto track = deterministic_sample_sum<std::vector<Vector>>(
        ops.config.samples,
        [&] { return std::vector<Vector>(l_count, Vector(n, 0.0)); },
        [&](std::vector<Vector>& acc, std::size_t m) {
            Vector residual(n), weighted(n), pulled(n);
            for (std::size_t l = 0; l < l_count; ++l) {
                if (literal) {
                    ops.z_apply(m, controls[l], residual);
                    for (std::size_t i = 0; i < n; ++i) residual[i] -= ops.desired_int[l][i];
                } else {
                    for (std::size_t i = 0; i < n; ++i)
                        residual[i] = states[m][l][i] - ops.desired_int[l][i];
                }
                ops.setup.mass_int.matvec_into(residual, weighted);
                ops.z_apply_transpose(m, weighted, pulled);
                axpy(dt, pulled, acc[l]);
            }
        },
        [&](std::vector<Vector>& total, std::vector<Vector>& block) {
            for (std::size_t l = 0; l < l_count; ++l) axpy(1.0, block[l], total[l]);
        });
    Controls grad(l_count, Vector(n, 0.0));
    const double inv_m = 1.0 / static_cast<double>(ops.config.samples);
    Vector weighted(n);
    for (std::size_t l = 0; l < l_count; ++l) {
        for (std::size_t i = 0; i < n; ++i) grad[l][i] = inv_m * track[l][i];
        ops.setup.mass_int.matvec_into(controls[l], weighted);
        axpy(ops.config.beta * dt, weighted, grad[l]);
    }
    return grad;
}

/// H d for one per-step block, matrix-free over a sample subset (the full
/// set when batch is empty).
inline Vector hessian_apply(const ReducedOperators& ops, std::span<const double> d,
                            std::span<const std::size_t> batch = {}) {
    const std::size_t n = ops.interior();
    const double dt = ops.dt();
    std::vector<std::size_t> all;
    if (batch.empty()) {
        all.resize(ops.config.samples);
        for (std::size_t m = 0; m < all.size(); ++m) all[m] = m;
        batch = all;
    }
    auto sum = deterministic_sample_sum<Vector>(
        batch.size(), [&] { return Vector(n, 0.0); },
        [&](Vector& acc, std::size_t b) {
            Vector zd(n), weighted(n), pulled(n);
            ops.z_apply(batch[b], d, zd);
            ops.setup.mass_int.matvec_into(zd, weighted);
            ops.z_apply_transpose(batch[b], weighted, pulled);
            axpy(1.0, pulled, acc);
        },
        [](Vector& total, Vector& block) { axpy(1.0, block, total); });
    Vector out(n);
    Vector weighted(n);
    ops.setup.mass_int.matvec_into(d, weighted);
    const double invb = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < n; ++i)
        out[i] = dt * invb * sum[i] + ops.config.beta * dt * weighted[i];
    return out;
}

struct TraceRow {
    std::size_t iteration = 0;
    double objective = 0.0;
    double gradient_norm = 0.0;
    double step = 0.0;
};

struct OptimizationTrace {
    std::vector<TraceRow> rows;
    Controls final_controls;
    std::vector<Vector> state_mean;  // full nodal, steps 0..L
    double initial_objective = 0.0;
    double final_objective = 0.0;
    double final_gradient_norm = 0.0;
    std::size_t iterations = 0;
    std::string termination;  // converged | line_search_failure | iteration_cap
};

/// Stopping norm: the L2(Q) norm of the gradient's Riesz representative.
/// The coefficient gradient satisfies J'(f)[df] = sum_l g_l . df_l, so the
/// representative against the space-time mass inner product is G^{-1} g_l /
/// dt with squared norm sum_l g_l^T G^{-1} g_l / dt. This is the
/// mesh-consistent magnitude the tolerance applies to; the raw coefficient
/// norm shrinks with the mass matrix and would make any fixed epsilon
/// meaningless across meshes.
inline double gradient_norm(const ReducedOperators& ops, const Controls& grad) {
    const std::size_t n = ops.interior();
    Vector riesz(n);
    double total = 0.0;
    for (const auto& g_l : grad) {
        ops.mass_factor.solve_into(g_l, riesz);
        total += dot(g_l, riesz);
    }
    return std::sqrt(total / ops.dt());
}

namespace detail {

inline double controls_dot(const Controls& a, const Controls& b) {
    double s = 0.0;
    for (std::size_t l = 0; l < a.size(); ++l) s += dot(a[l], b[l]);
    return s;
}

/// Strong Wolfe search on the exact quadratic phi(alpha) =
/// phi0 - alpha*s + alpha^2 c / 2 (s = g.d > 0, c = d.H.d > 0).
/// Returns the accepted alpha or 0 on failure after the trial cap.
inline double wolfe_quadratic(double s, double c, double c1, double c2, std::size_t cap) {
    if (!(s > 0.0) || !(c > 0.0)) return 0.0;
    double alpha = 1.0;
    for (std::size_t trial = 0; trial < cap; ++trial) {
        const double decrease = -alpha * s + 0.5 * alpha * alpha * c;
        const double slope = -s + alpha * c;
        const bool armijo = decrease <= -c1 * alpha * s;
        const bool curvature = std::abs(slope) <= c2 * s;
        if (armijo && curvature) return alpha;
        if (!armijo) {
            alpha *= 0.5;  // overshot the quadratic bowl
        } else {
            alpha *= 2.1;  // too timid for the curvature condition
        }
    }
    return 0.0;
}

/// Armijo backtracking from alpha = 1 on the same quadratic model.
inline double armijo_quadratic(double s, double c, double c1, std::size_t cap) {
    if (!(s > 0.0) || !(c >= 0.0)) return 0.0;
    double alpha = 1.0;
    for (std::size_t trial = 0; trial < cap; ++trial) {
        if (-alpha * s + 0.5 * alpha * alpha * c <= -c1 * alpha * s) return alpha;
        alpha *= 0.5;
    }
    return 0.0;
}

/// Conjugate gradients on the (matrix-free) Hessian; used for the Newton
/// direction above the dense materialization limit.
inline Vector hessian_cg_solve(const ReducedOperators& ops, const Vector& rhs) {
    const std::size_t n = rhs.size();
    Vector x(n, 0.0), r = rhs, p = rhs, hp(n);
    double rr = dot(r, r);
    const double stop = 1e-20 * rr + 1e-300;
    for (std::size_t it = 0; it < 10 * n && rr > stop; ++it) {
        hp = hessian_apply(ops, p);
        const double alpha = rr / dot(p, hp);
        axpy(alpha, p, x);
        axpy(-alpha, hp, r);
        const double rr_new = dot(r, r);
        const double beta = rr_new / rr;
        rr = rr_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    }
    return x;
}

}  // namespace detail

/// Gradient-based minimization of the reduced functional per Algorithm-4
/// structure: states are recomputed each outer iterate, the per-step
/// gradient drives the direction, and the line search descends the frozen
/// surrogate exactly through its quadratic form.
inline OptimizationTrace optimize(const ReducedOperators& ops) {
    const ControlConfig& cfg = ops.config;
    const std::size_t n = ops.interior();
    const std::size_t l_count = ops.step_count();
    const double c1 = 1e-4, c2 = 0.9;

    Controls controls(l_count, Vector(n, 0.0));
    States states = forward_map(ops, controls);
    double j = objective(ops, controls, states);

    OptimizationTrace trace;
    trace.initial_objective = j;
    CounterRng batch_rng(split_seed(cfg.seed, 0xB47C4));

    const std::size_t outer_cap =
        cfg.optimizer == Optimizer::sgd ? cfg.sgd_max_iterations : cfg.max_iterations;
    std::string termination = "iteration_cap";
    std::size_t iter = 0;
    Controls sgd_grad;
    for (; iter < outer_cap; ++iter) {
        Controls grad = gradient(ops, controls, states);
        const double gnorm = gradient_norm(ops, grad);
        trace.rows.push_back({iter, j, gnorm, 0.0});
        trace.final_gradient_norm = gnorm;
        if (gnorm <= cfg.tolerance) {
            termination = "converged";
            break;
        }

        Controls direction;
        std::vector<std::size_t> batch;
        if (cfg.optimizer == Optimizer::newton) {
            direction.resize(l_count);
            for (std::size_t l = 0; l < l_count; ++l)
                direction[l] = ops.materialized() ? ops.hessian_factor.solve(grad[l])
                                                  : detail::hessian_cg_solve(ops, grad[l]);
        } else if (cfg.optimizer == Optimizer::steepest) {
            // descend along the L2 Riesz representative G^{-1} g: the
            // steepest direction in the geometry the tolerance is stated in,
            // and the one whose iteration count does not degrade with the
            // mesh (the coefficient vector g itself is mass-scaled)
            direction.resize(l_count);
            for (std::size_t l = 0; l < l_count; ++l)
                direction[l] = ops.mass_factor.solve(grad[l]);
        } else {
            // minibatch without replacement, seeded per iteration
            std::vector<std::size_t> idx(cfg.samples);
            for (std::size_t m = 0; m < cfg.samples; ++m) idx[m] = m;
            const std::size_t b_size = std::min(cfg.sgd_batch, cfg.samples);
            for (std::size_t b = 0; b < b_size; ++b) {
                const std::size_t pick = b + batch_rng.next_u64() % (cfg.samples - b);
                std::swap(idx[b], idx[pick]);
            }
            batch.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(b_size));
            // minibatch coefficient gradient over the sampled realizations,
            // then its Riesz representative as the direction
            sgd_grad.assign(l_count, Vector(n, 0.0));
            const double dt = ops.dt();
            Vector residual(n), weighted(n), pulled(n);
            for (std::size_t b : batch) {
                for (std::size_t l = 0; l < l_count; ++l) {
                    for (std::size_t i = 0; i < n; ++i)
                        residual[i] = states[b][l][i] - ops.desired_int[l][i];
                    ops.setup.mass_int.matvec_into(residual, weighted);
                    ops.z_apply_transpose(b, weighted, pulled);
                    axpy(dt / static_cast<double>(batch.size()), pulled, sgd_grad[l]);
                }
            }
            for (std::size_t l = 0; l < l_count; ++l) {
                ops.setup.mass_int.matvec_into(controls[l], weighted);
                axpy(cfg.beta * dt, weighted, sgd_grad[l]);
            }
            direction.resize(l_count);
            for (std::size_t l = 0; l < l_count; ++l)
                direction[l] = ops.mass_factor.solve(sgd_grad[l]);
        }

        // exact quadratic line model of the frozen surrogate along -direction;
        // the sgd model is the minibatch surrogate, whose slope pairs the
        // minibatch gradient with the preconditioned direction
        const double slope = cfg.optimizer == Optimizer::sgd
                                 ? detail::controls_dot(sgd_grad, direction)
                                 : detail::controls_dot(grad, direction);
        double curvature = 0.0;
        const bool dense_full = ops.materialized() && batch.empty();
        for (std::size_t l = 0; l < l_count; ++l) {
            Vector hd = dense_full ? matvec(ops.hessian, direction[l])
                                   : hessian_apply(ops, direction[l], batch);
            curvature += dot(direction[l], hd);
        }
        const double alpha =
            cfg.optimizer == Optimizer::sgd
                ? detail::armijo_quadratic(slope, curvature, c1, cfg.line_search_cap)
                : detail::wolfe_quadratic(slope, curvature, c1, c2, cfg.line_search_cap);
        if (alpha == 0.0) {
            termination = "line_search_failure";
            break;
        }
        trace.rows.back().step = alpha;
        for (std::size_t l = 0; l < l_count; ++l) axpy(-alpha, direction[l], controls[l]);
        states = forward_map(ops, controls);
        j = objective(ops, controls, states);
    }

    trace.iterations = iter;
    trace.termination = termination;
    trace.final_objective = j;
    trace.final_controls = controls;

    // sample-mean optimal state, full nodal, slice 0 = initial condition
    trace.state_mean.resize(l_count + 1);
    trace.state_mean[0] = ops.setup.u0_full;
    auto acc = deterministic_sample_sum<std::vector<Vector>>(
        cfg.samples,
        [&] { return std::vector<Vector>(l_count, Vector(ops.setup.mesh.node_count(), 0.0)); },
        [&](std::vector<Vector>& block, std::size_t m) {
            for (std::size_t l = 0; l < l_count; ++l) {
                for (std::size_t ii = 0; ii < n; ++ii)
                    block[l][ops.setup.dofs.interior[ii]] += states[m][l][ii];
            }
        },
        [&](std::vector<Vector>& total, std::vector<Vector>& block) {
            for (std::size_t l = 0; l < l_count; ++l) axpy(1.0, block[l], total[l]);
        });
    for (std::size_t l = 0; l < l_count; ++l) {
        trace.state_mean[l + 1] = std::move(acc[l]);
        scale(trace.state_mean[l + 1], 1.0 / static_cast<double>(cfg.samples));
        if (!ops.setup.boundary.identically_zero) {
            const double t = ops.dt() * static_cast<double>(l + 1);
            for (std::size_t b = 0; b < ops.setup.dofs.boundary.size(); ++b) {
                const std::size_t node = ops.setup.dofs.boundary[b];
                trace.state_mean[l + 1][node] =
                    ops.setup.boundary.fn(ops.setup.mesh.node_x[node],
                                          ops.setup.mesh.node_y[node], t);
            }
        }
    }
    return trace;
}

inline OptimizationTrace optimize(const ControlConfig& cfg) {
    return optimize(build_reduced(cfg));
}

}  // namespace lrns
