#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lrns/fem.hpp"
#include "lrns/lowrank.hpp"
#include "lrns/neumann.hpp"
#include "lrns/randfield.hpp"
#include "lrns/registry.hpp"

namespace lrns {

/// Everything the unsteady stochastic diffusion runs need in one place.
struct DiffusionConfig {
    std::size_t mesh_cells = 8;            // n, h = 1/n
    double t_end = 1.0;                    // final time
    std::size_t steps = 100;               // L, dt = t_end / L
    std::size_t samples = 100;             // M
    double sigma = 0.2;                    // perturbation scale
    std::size_t kl_terms = 19;             // T
    double correlation_length = 0.2;
    double truncation_bound = 3.0;
    std::size_t neumann_terms = 5;         // R
    double tau = 0.88;                     // compression ratio
    std::size_t rsvd_oversampling = 10;    // p
    std::size_t rsvd_power_iterations = 1; // q
    std::uint64_t seed = 1;                // master seed
    double guard_threshold = 0.95;
    std::size_t guard_iterations = 30;
    std::string source = "one";                 // f(x, t)
    std::string boundary = "zero";              // g(x, t)
    std::string initial = "sin2pix_sin2piy";    // u0(x)
    std::string mean_field = "one";             // abar(x)
    bool enforce_ellipticity = true;
    bool store_sample_trajectories = false;

    double dt() const { return t_end / static_cast<double>(steps); }
};

namespace seeds {
inline constexpr std::uint64_t kFieldStream = 0xF1E1D5;
inline constexpr std::uint64_t kSketchStream = 0xC0115EED;
}  // namespace seeds

/// Assembled spatial problem shared by the reference and LRNS paths. Built
/// deterministically from the config, so both solvers consume identical
/// sample fields and matrices and their difference isolates the
/// approximation error.
struct DiffusionSetup {
    DiffusionConfig config;
    StructuredMesh mesh;
    DofMap dofs;
    SparseSymMatrix mass_full;
    SparseSymMatrix mass_int;
    SparseSymMatrix stiff_mean_full;
    SparseSymMatrix stiff_mean_int;
    std::vector<SparseSymMatrix> perturb_full;
    std::vector<SparseSymMatrix> perturb_int;
    std::vector<FieldSample> fields;
    std::vector<double> kl_eigenvalues;
    EllipticityReport ellipticity;
    Vector u0_full;
    SpaceTimeFn source;
    SpaceTimeFn boundary;

    std::size_t interior() const { return dofs.interior_count(); }
};

inline DiffusionSetup build_setup(const DiffusionConfig& cfg) {
    detail::require(cfg.steps >= 1 && cfg.samples >= 1, "diffusion: need L >= 1 and M >= 1");
    detail::require(cfg.tau > 0.0 && cfg.tau <= 1.0, "diffusion: tau must lie in (0, 1]");
    DiffusionSetup s;
    s.config = cfg;
    s.mesh = build_mesh(cfg.mesh_cells);
    s.dofs = build_dofmap(s.mesh);
    s.mass_full = assemble_mass(s.mesh);
    s.mass_int = restrict_interior(s.mass_full, s.dofs);

    const SpaceTimeFn mean_fn = lookup_function(cfg.mean_field);
    s.stiff_mean_full =
        assemble_stiffness(s.mesh, [&](double x, double y) { return mean_fn.fn(x, y, 0.0); });
    s.stiff_mean_int = restrict_interior(s.stiff_mean_full, s.dofs);

    KLBasis basis = kl_decompose(s.mesh, CovarianceSpec{cfg.correlation_length}, cfg.kl_terms);
    s.kl_eigenvalues = basis.eigenvalues;
    s.fields = sample_fields(basis, cfg.sigma, cfg.samples,
                             split_seed(cfg.seed, seeds::kFieldStream), cfg.truncation_bound);

    Vector mean_nodal(s.mesh.node_count());
    for (std::size_t i = 0; i < mean_nodal.size(); ++i)
        mean_nodal[i] = mean_fn.fn(s.mesh.node_x[i], s.mesh.node_y[i], 0.0);
    s.ellipticity = check_ellipticity(mean_nodal, s.fields);
    if (cfg.enforce_ellipticity && !s.ellipticity.flagged.empty()) {
        std::string which;
        for (std::size_t i = 0; i < std::min<std::size_t>(s.ellipticity.flagged.size(), 8); ++i)
            which += (i ? ", " : "") + std::to_string(s.ellipticity.flagged[i]);
        throw std::runtime_error("diffusion: ellipticity violated by sample(s) " + which +
                                 " (min total coefficient " +
                                 std::to_string(s.ellipticity.min_value) + ")");
    }

    s.perturb_full.resize(cfg.samples);
    s.perturb_int.resize(cfg.samples);
    parallel_for(0, cfg.samples, [&](std::size_t m) {
        s.perturb_full[m] = assemble_stiffness_nodal(s.mesh, s.fields[m].nodal);
        s.perturb_int[m] = restrict_interior(s.perturb_full[m], s.dofs);
    });

    const SpaceTimeFn u0 = lookup_function(cfg.initial);
    s.u0_full.resize(s.mesh.node_count());
    for (std::size_t i = 0; i < s.u0_full.size(); ++i)
        s.u0_full[i] = u0.fn(s.mesh.node_x[i], s.mesh.node_y[i], 0.0);

    s.source = lookup_function(cfg.source);
    s.boundary = lookup_function(cfg.boundary);
    return s;
}

/// Crank-Nicolson operator block: Kbar = (2/dt) G + Abar on the interior.
struct CrankNicolsonSystem {
    double dt = 0.0;
    SparseSymMatrix kbar;             // interior
    SymmetricFactorization kbar_factor;
};

inline CrankNicolsonSystem assemble_cn(double dt, const SparseSymMatrix& mass_int,
                                       const SparseSymMatrix& stiff_mean_int) {
    detail::require(dt > 0.0, "assemble_cn: dt must be positive");
    CrankNicolsonSystem sys;
    sys.dt = dt;
    sys.kbar = stiff_mean_int;
    const double w = 2.0 / dt;
    // the mass and stiffness share the stencil pattern on this mesh
    detail::require(mass_int.values.size() == sys.kbar.values.size(),
                    "assemble_cn: operator stencils differ");
    for (std::size_t p = 0; p < sys.kbar.values.size(); ++p)
        sys.kbar.values[p] += w * mass_int.values[p];
    try {
        sys.kbar_factor = factorize_spd(densify(sys.kbar));
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string("assemble_cn: Kbar is not SPD (") + e.what() + ")");
    }
    return sys;
}

/// Mean solution field per time step plus run metadata.
struct QoITrajectory {
    std::size_t mesh_cells = 0;
    std::vector<double> times;        // l = 0..L
    std::vector<Vector> mean;         // full nodal field per step
    std::string solver_tag;
    std::uint64_t config_hash = 0;
};

struct DiffusionResult {
    QoITrajectory qoi;
    SolveReport report;                                   // empty for the reference path
    std::vector<std::vector<Vector>> sample_trajectories; // [m][l] full nodal, optional
    std::size_t rank = 0;                                 // LRNS metadata
    double tau = 0.0;
};

namespace detail {

/// Time-step data shared by both solvers: interior loads and boundary values
/// per step, assembled once when time-independent.
struct SteppingData {
    std::vector<Vector> load_int;    // b restricted, per step 0..L
    std::vector<Vector> g_boundary;  // boundary values per step 0..L (empty when g == 0)
    Vector u0_int;
};

inline SteppingData build_stepping(const DiffusionSetup& s) {
    const auto& cfg = s.config;
    SteppingData data;
    const std::size_t l_count = cfg.steps;
    const double dt = cfg.dt();
    data.load_int.resize(l_count + 1);
    if (s.source.identically_zero) {
        for (auto& b : data.load_int) b.assign(s.interior(), 0.0);
    } else if (!s.source.time_dependent) {
        Vector b_full = assemble_load(s.mesh, s.source.fn, 0.0);
        Vector b_int = restrict_vector(b_full, s.dofs);
        for (auto& b : data.load_int) b = b_int;
    } else {
        for (std::size_t l = 0; l <= l_count; ++l) {
            Vector b_full = assemble_load(s.mesh, s.source.fn, dt * static_cast<double>(l));
            data.load_int[l] = restrict_vector(b_full, s.dofs);
        }
    }
    if (!s.boundary.identically_zero) {
        data.g_boundary.resize(l_count + 1);
        for (std::size_t l = 0; l <= l_count; ++l) {
            const double t = dt * static_cast<double>(l);
            Vector g(s.dofs.boundary.size());
            for (std::size_t b = 0; b < g.size(); ++b) {
                const std::size_t node = s.dofs.boundary[b];
                g[b] = s.boundary.fn(s.mesh.node_x[node], s.mesh.node_y[node], t);
            }
            data.g_boundary[l] = std::move(g);
        }
    }
    data.u0_int = restrict_vector(s.u0_full, s.dofs);
    return data;
}

inline Vector full_slice(const DiffusionSetup& s, const SteppingData& data,
                         std::span<const double> interior, std::size_t step) {
    Vector full(s.mesh.node_count(), 0.0);
    for (std::size_t ii = 0; ii < s.dofs.interior.size(); ++ii)
        full[s.dofs.interior[ii]] = interior[ii];
    if (!data.g_boundary.empty())
        for (std::size_t b = 0; b < s.dofs.boundary.size(); ++b)
            full[s.dofs.boundary[b]] = data.g_boundary[step][b];
    return full;
}

/// Crank-Nicolson march for one sample. solve_half maps the half-step load
/// to u_{l+1/2}; on_step receives the full nodal field of step l+1.
template <class SolveHalf, class OnStep>
void march_sample(const DiffusionSetup& s, const SteppingData& data, std::size_t m, double dt,
                  SolveHalf&& solve_half, OnStep&& on_step) {
    const std::size_t n_int = s.interior();
    Vector u = data.u0_int;
    Vector rhs(n_int), gu(n_int), half(n_int);
    for (std::size_t l = 0; l < s.config.steps; ++l) {
        s.mass_int.matvec_into(u, gu);
        const double w = 2.0 / dt;
        for (std::size_t i = 0; i < n_int; ++i)
            rhs[i] = 0.5 * (data.load_int[l + 1][i] + data.load_int[l][i]) + w * gu[i];
        if (!data.g_boundary.empty()) {
            const auto& g0 = data.g_boundary[l];
            const auto& g1 = data.g_boundary[l + 1];
            Vector gmid(g0.size()), gdiff(g0.size());
            for (std::size_t b = 0; b < g0.size(); ++b) {
                gmid[b] = 0.5 * (g0[b] + g1[b]);
                gdiff[b] = (g1[b] - g0[b]) / dt;
            }
            Vector lift_mass = boundary_product(s.mass_full, s.dofs, gdiff);
            Vector lift_mean = boundary_product(s.stiff_mean_full, s.dofs, gmid);
            Vector lift_pert = boundary_product(s.perturb_full[m], s.dofs, gmid);
            for (std::size_t i = 0; i < n_int; ++i)
                rhs[i] -= lift_mass[i] + lift_mean[i] + lift_pert[i];
        }
        solve_half(rhs, half);
        for (std::size_t i = 0; i < n_int; ++i) u[i] = 2.0 * half[i] - u[i];
        on_step(l + 1, u);
    }
}

struct TrajectoryAccumulator {
    std::vector<Vector> sum;  // steps 1..L
    explicit TrajectoryAccumulator(std::size_t steps, std::size_t nodes)
        : sum(steps, Vector(nodes, 0.0)) {}
};

}  // namespace detail

inline std::uint64_t config_fingerprint(const DiffusionConfig& cfg) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    auto fold = [&h](std::uint64_t v) {
        h ^= v;
        h *= 0x100000001B3ULL;
    };
    fold(cfg.mesh_cells);
    fold(cfg.steps);
    fold(cfg.samples);
    fold(cfg.kl_terms);
    fold(cfg.neumann_terms);
    fold(cfg.seed);
    auto fold_double = [&fold](double d) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(d));
        __builtin_memcpy(&bits, &d, sizeof(bits));
        fold(bits);
    };
    fold_double(cfg.t_end);
    fold_double(cfg.sigma);
    fold_double(cfg.tau);
    fold_double(cfg.correlation_length);
    for (char c : cfg.source + "|" + cfg.boundary + "|" + cfg.initial + "|" + cfg.mean_field)
        fold(static_cast<unsigned char>(c));
    return h;
}

/// Direct MC-FEM reference: each sample factorizes its own (Kbar + Ktilde_m)
/// once and reuses it across all time steps.
inline DiffusionResult reference_solve(const DiffusionSetup& s) {
    const auto& cfg = s.config;
    const double dt = cfg.dt();
    const detail::SteppingData data = detail::build_stepping(s);
    const CrankNicolsonSystem cn = assemble_cn(dt, s.mass_int, s.stiff_mean_int);

    DiffusionResult result;
    result.qoi.mesh_cells = cfg.mesh_cells;
    result.qoi.solver_tag = "mc-fem-reference";
    result.qoi.config_hash = config_fingerprint(cfg);
    if (cfg.store_sample_trajectories)
        result.sample_trajectories.assign(cfg.samples, std::vector<Vector>());

    auto acc = deterministic_sample_sum<detail::TrajectoryAccumulator>(
        cfg.samples,
        [&] { return detail::TrajectoryAccumulator(cfg.steps, s.mesh.node_count()); },
        [&](detail::TrajectoryAccumulator& block, std::size_t m) {
            DenseMatrix km = densify(cn.kbar);
            densify_add_into(s.perturb_int[m], km);
            SymmetricFactorization factor;
            try {
                factor = factorize_spd(km);
            } catch (const std::runtime_error& e) {
                throw std::runtime_error("reference_solve: factorization failed for sample " +
                                         std::to_string(m) + ": " + e.what());
            }
            std::vector<Vector>* keep = nullptr;
            if (cfg.store_sample_trajectories) {
                keep = &result.sample_trajectories[m];
                keep->push_back(s.u0_full);
            }
            detail::march_sample(
                s, data, m, dt,
                [&](std::span<const double> rhs, std::span<double> half) {
                    factor.solve_into(rhs, half);
                },
                [&](std::size_t step, const Vector& u) {
                    Vector full = detail::full_slice(s, data, u, step);
                    axpy(1.0, full, block.sum[step - 1]);
                    if (keep) keep->push_back(std::move(full));
                });
        },
        [&](detail::TrajectoryAccumulator& total, detail::TrajectoryAccumulator& block) {
            for (std::size_t l = 0; l < total.sum.size(); ++l) axpy(1.0, block.sum[l], total.sum[l]);
        });

    result.qoi.times.resize(cfg.steps + 1);
    for (std::size_t l = 0; l <= cfg.steps; ++l)
        result.qoi.times[l] = dt * static_cast<double>(l);
    result.qoi.mean.resize(cfg.steps + 1);
    result.qoi.mean[0] = s.u0_full;
    for (std::size_t l = 1; l <= cfg.steps; ++l) {
        result.qoi.mean[l] = std::move(acc.sum[l - 1]);
        scale(result.qoi.mean[l], 1.0 / static_cast<double>(cfg.samples));
    }
    return result;
}

inline DiffusionResult reference_solve(const DiffusionConfig& cfg) {
    return reference_solve(build_setup(cfg));
}

/// The compression grid is the full node set with Dirichlet rows and columns
/// zeroed: the boundary handling leaves those dimensions of the perturbation
/// matrices dead, which is exactly why the cumulative energy saturates near
/// the interior fraction of the grid. Only the interior rows of the factors
/// are retained for the solves; the discarded rows are identically zero for
/// every column in the range of the accumulated Gram.
struct PerturbationFactors {
    std::shared_ptr<const LowRankFactors> interior;  // U and {V_m} restricted to interior rows
    std::size_t full_dimension = 0;                  // N = (n+1)^2
    std::size_t rank = 0;                            // k = ceil(tau N)
    double tau = 0.0;
};

namespace detail {

inline bool node_interior(const DofMap& dofs, std::size_t node) {
    return dofs.interior_of_node[node] >= 0;
}

/// Dense Gram of the boundary-zeroed symmetric samples, sum_m B_m^2,
/// accumulated through the sparse rows. Row-parallel with the sample loop
/// innermost, so the summation order per entry never depends on the pool.
inline DenseMatrix zeroed_gram(const DiffusionSetup& s) {
    const std::size_t n = s.mesh.node_count();
    DenseMatrix gram(n, n);
    parallel_for(0, n, [&](std::size_t i) {
        if (!node_interior(s.dofs, i)) return;
        double* gi = gram.row(i);
        for (std::size_t m = 0; m < s.perturb_full.size(); ++m) {
            const SparseSymMatrix& b = s.perturb_full[m];
            for (std::size_t p = b.row_offsets[i]; p < b.row_offsets[i + 1]; ++p) {
                const std::size_t c = b.col_index[p];
                if (!node_interior(s.dofs, c)) continue;
                const double v = b.values[p];
                for (std::size_t q = b.row_offsets[c]; q < b.row_offsets[c + 1]; ++q) {
                    const std::size_t j = b.col_index[q];
                    if (node_interior(s.dofs, j)) gi[j] += v * b.values[q];
                }
            }
        }
    });
    return gram;
}

inline DenseMatrix interior_rows(const DenseMatrix& full, const DofMap& dofs) {
    DenseMatrix out(dofs.interior_count(), full.cols);
    for (std::size_t ii = 0; ii < dofs.interior.size(); ++ii) {
        const double* src = full.row(dofs.interior[ii]);
        double* dst = out.row(ii);
        for (std::size_t c = 0; c < full.cols; ++c) dst[c] = src[c];
    }
    return out;
}

}  // namespace detail

/// One dense boundary-zeroed perturbation matrix at full grid size; the
/// collection handed to the standalone compression surfaces.
inline DenseMatrix dense_zeroed_perturbation(const DiffusionSetup& s, std::size_t m) {
    const std::size_t n = s.mesh.node_count();
    DenseMatrix out(n, n);
    const SparseSymMatrix& b = s.perturb_full[m];
    for (std::size_t i = 0; i < n; ++i) {
        if (!detail::node_interior(s.dofs, i)) continue;
        for (std::size_t p = b.row_offsets[i]; p < b.row_offsets[i + 1]; ++p) {
            const std::size_t c = b.col_index[p];
            if (detail::node_interior(s.dofs, c)) out(i, c) = b.values[p];
        }
    }
    return out;
}

inline PerturbationFactors compress_perturbations(const DiffusionSetup& s, double tau) {
    const auto& cfg = s.config;
    const std::size_t n_full = s.mesh.node_count();
    const std::size_t k = reduced_rank(tau, n_full);

    DenseMatrix gram = detail::zeroed_gram(s);
    RsvdConfig rsvd;
    rsvd.target_rank = k;
    rsvd.oversampling = std::min(cfg.rsvd_oversampling, n_full - k);
    rsvd.power_iterations = cfg.rsvd_power_iterations;
    rsvd.seed = split_seed(cfg.seed, seeds::kSketchStream);
    DenseMatrix basis_full = rsvd_top_eigvecs(gram, rsvd);

    auto interior = std::make_shared<LowRankFactors>();
    interior->rank = k;
    interior->tau = tau;
    interior->basis = detail::interior_rows(basis_full, s.dofs);
    interior->factors.assign(cfg.samples, DenseMatrix());
    // V_m = B_m U through the sparse symmetric rows, interior slice directly
    parallel_for(0, cfg.samples, [&](std::size_t m) {
        const SparseSymMatrix& b = s.perturb_full[m];
        DenseMatrix v(s.interior(), k);
        for (std::size_t ii = 0; ii < s.dofs.interior.size(); ++ii) {
            const std::size_t node = s.dofs.interior[ii];
            double* vi = v.row(ii);
            for (std::size_t p = b.row_offsets[node]; p < b.row_offsets[node + 1]; ++p) {
                const std::size_t c = b.col_index[p];
                if (!detail::node_interior(s.dofs, c)) continue;
                const double w = b.values[p];
                const double* uc = basis_full.row(c);
                for (std::size_t col = 0; col < k; ++col) vi[col] += w * uc[col];
            }
        }
        interior->factors[m] = std::move(v);
    });
    return PerturbationFactors{std::move(interior), n_full, k, tau};
}

/// LRNS fast path: identical Crank-Nicolson structure with the per-sample
/// direct solves replaced by the truncated-series inverse.
inline DiffusionResult lrns_solve(const DiffusionSetup& s,
                                  const PerturbationFactors* shared_factors = nullptr) {
    const auto& cfg = s.config;
    const double dt = cfg.dt();
    const detail::SteppingData data = detail::build_stepping(s);
    const CrankNicolsonSystem cn = assemble_cn(dt, s.mass_int, s.stiff_mean_int);

    PerturbationFactors local;
    if (!shared_factors) {
        local = compress_perturbations(s, cfg.tau);
        shared_factors = &local;
    }

    NeumannOperator op;
    op.mean = cn.kbar_factor;
    op.correction = op.mean.solve_matrix(shared_factors->interior->basis);
    op.factors = shared_factors->interior;
    op.truncation = cfg.neumann_terms;
    op.guard_threshold = cfg.guard_threshold;
    op.guard_iterations = cfg.guard_iterations;

    DiffusionResult result;
    result.report = run_guards(op);
    result.rank = shared_factors->rank;
    result.tau = shared_factors->tau;
    result.qoi.mesh_cells = cfg.mesh_cells;
    result.qoi.solver_tag = "lrns";
    result.qoi.config_hash = config_fingerprint(cfg);
    if (cfg.store_sample_trajectories)
        result.sample_trajectories.assign(cfg.samples, std::vector<Vector>());

    auto acc = deterministic_sample_sum<detail::TrajectoryAccumulator>(
        cfg.samples,
        [&] { return detail::TrajectoryAccumulator(cfg.steps, s.mesh.node_count()); },
        [&](detail::TrajectoryAccumulator& block, std::size_t m) {
            NeumannOperator::Scratch scratch = op.make_scratch();
            std::vector<Vector>* keep = nullptr;
            if (cfg.store_sample_trajectories) {
                keep = &result.sample_trajectories[m];
                keep->push_back(s.u0_full);
            }
            detail::march_sample(
                s, data, m, dt,
                [&](std::span<const double> rhs, std::span<double> half) {
                    op.apply_inverse_into(m, rhs, half, scratch);
                },
                [&](std::size_t step, const Vector& u) {
                    Vector full = detail::full_slice(s, data, u, step);
                    axpy(1.0, full, block.sum[step - 1]);
                    if (keep) keep->push_back(std::move(full));
                });
        },
        [&](detail::TrajectoryAccumulator& total, detail::TrajectoryAccumulator& block) {
            for (std::size_t l = 0; l < total.sum.size(); ++l) axpy(1.0, block.sum[l], total.sum[l]);
        });

    result.qoi.times.resize(cfg.steps + 1);
    for (std::size_t l = 0; l <= cfg.steps; ++l)
        result.qoi.times[l] = dt * static_cast<double>(l);
    result.qoi.mean.resize(cfg.steps + 1);
    result.qoi.mean[0] = s.u0_full;
    for (std::size_t l = 1; l <= cfg.steps; ++l) {
        result.qoi.mean[l] = std::move(acc.sum[l - 1]);
        scale(result.qoi.mean[l], 1.0 / static_cast<double>(cfg.samples));
    }
    return result;
}

inline DiffusionResult lrns_solve(const DiffusionConfig& cfg) {
    return lrns_solve(build_setup(cfg));
}

/// Relative discrete space-time L2 distance between two mean trajectories,
/// mass-weighted, with the second argument as the reference:
/// sqrt(sum_l dt ||mu_a - mu_b||_G^2) / sqrt(sum_l dt ||mu_b||_G^2).
inline double qoi_error(const QoITrajectory& a, const QoITrajectory& b) {
    detail::require(a.mesh_cells == b.mesh_cells, "qoi_error: mesh mismatch");
    detail::require(a.mean.size() == b.mean.size(), "qoi_error: step count mismatch");
    const StructuredMesh mesh = build_mesh(a.mesh_cells);
    const SparseSymMatrix mass = assemble_mass(mesh);
    Vector diff(mesh.node_count()), weighted(mesh.node_count());
    double num = 0.0, den = 0.0;
    for (std::size_t l = 0; l < a.mean.size(); ++l) {
        for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = a.mean[l][i] - b.mean[l][i];
        mass.matvec_into(diff, weighted);
        num += dot(diff, weighted);
        mass.matvec_into(b.mean[l], weighted);
        den += dot(b.mean[l], weighted);
    }
    if (den <= 0.0) throw std::runtime_error("qoi_error: reference trajectory has zero norm");
    return std::sqrt(num / den);
}

struct ScanTauRow {
    double tau = 0.0;
    std::size_t rank = 0;
    double error = 0.0;
    double seconds = 0.0;  // reported through the manifest, never in the CSV
};

struct ScanTauResult {
    std::vector<ScanTauRow> rows;
    double reference_seconds = 0.0;
};

/// One LRNS run per ratio against a single shared reference; samples, seeds
/// and matrices are built once.
inline ScanTauResult scan_tau(const DiffusionConfig& cfg, const std::vector<double>& taus) {
    using clock = std::chrono::steady_clock;
    DiffusionSetup setup = build_setup(cfg);
    ScanTauResult out;
    auto t0 = clock::now();
    DiffusionResult reference = reference_solve(setup);
    out.reference_seconds = std::chrono::duration<double>(clock::now() - t0).count();
    for (double tau : taus) {
        ScanTauRow row;
        row.tau = tau;
        auto t1 = clock::now();
        DiffusionSetup* s = &setup;
        s->config.tau = tau;
        DiffusionResult fast = lrns_solve(*s);
        row.seconds = std::chrono::duration<double>(clock::now() - t1).count();
        row.rank = fast.rank;
        row.error = qoi_error(fast.qoi, reference.qoi);
        out.rows.push_back(row);
    }
    return out;
}

struct ScanSigmaRow {
    double sigma = 0.0;
    std::size_t neumann_terms = 0;
    double error = 0.0;
    double seconds = 0.0;
};

/// Error grid over (sigma, R). Field sampling reruns per sigma; the
/// compression is built once per sigma and shared across the R column.
inline std::vector<ScanSigmaRow> scan_sigma(const DiffusionConfig& base,
                                            const std::vector<double>& sigmas,
                                            const std::vector<std::size_t>& r_values) {
    using clock = std::chrono::steady_clock;
    std::vector<ScanSigmaRow> rows;
    for (double sigma : sigmas) {
        DiffusionConfig cfg = base;
        cfg.sigma = sigma;
        DiffusionSetup setup = build_setup(cfg);
        DiffusionResult reference = reference_solve(setup);
        PerturbationFactors factors = compress_perturbations(setup, cfg.tau);
        for (std::size_t r : r_values) {
            ScanSigmaRow row;
            row.sigma = sigma;
            row.neumann_terms = r;
            auto t0 = clock::now();
            setup.config.neumann_terms = r;
            DiffusionResult fast = lrns_solve(setup, &factors);
            row.seconds = std::chrono::duration<double>(clock::now() - t0).count();
            row.error = qoi_error(fast.qoi, reference.qoi);
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace lrns
