#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "lrns/checks.hpp"
#include "lrns/config.hpp"
#include "lrns/io.hpp"
#include "lrns/version.hpp"

namespace lrns {

/// Per-run provenance: config hash, seeds, versions, and all wall-clock
/// timings. Timings live here and only here; the CSV outputs stay
/// byte-identical across reruns of one config.
struct RunManifest {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    bool reproducible = true;
    int threads = 0;
    std::map<std::string, double> timings_seconds;
    std::map<std::string, std::string> versions;

    nlohmann::json to_json() const {
        char hash_hex[24];
        std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                      static_cast<unsigned long long>(config_hash));
        return nlohmann::json{{"config_hash", hash_hex},
                              {"artifact_version", kVersion},
                              {"seed", seed},
                              {"reproducible", reproducible},
                              {"threads", threads},
                              {"timings_seconds", timings_seconds},
                              {"versions", versions}};
    }
};

namespace detail {

class PhaseTimer {
  public:
    explicit PhaseTimer(RunManifest& manifest) : manifest_(manifest) {}

    template <class F>
    auto time(const std::string& phase, F&& f) {
        const auto t0 = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            manifest_.timings_seconds[phase] =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        } else {
            auto result = f();
            manifest_.timings_seconds[phase] =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            return result;
        }
    }

  private:
    RunManifest& manifest_;
};

inline RunManifest start_manifest(const ExperimentConfig& cfg) {
    RunManifest manifest;
    manifest.config_hash = experiment_hash(cfg);
    manifest.seed = cfg.problem.seed;
    manifest.reproducible = cfg.reproducible;
    manifest.threads = threads();
    manifest.versions = {{"lrns", kVersion},
                         {"linalg", kVersion},
                         {"lowrank", kVersion},
                         {"neumann", kVersion},
                         {"fem", kVersion},
                         {"randfield", kVersion},
                         {"diffusion", kVersion},
                         {"control", kVersion}};
    return manifest;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << j.dump(2) << "\n";
}

inline void write_trajectory_csv(const std::filesystem::path& path, const QoITrajectory& qoi) {
    const StructuredMesh mesh = build_mesh(qoi.mesh_cells);
    CsvWriter csv(path, {"t", "x", "y", "value"});
    for (std::size_t l = 0; l < qoi.mean.size(); ++l)
        for (std::size_t i = 0; i < qoi.mean[l].size(); ++i)
            csv.row({qoi.times[l], mesh.node_x[i], mesh.node_y[i], qoi.mean[l][i]});
}

inline void write_kl_spectrum_csv(const std::filesystem::path& path,
                                  const std::vector<double>& eigenvalues) {
    double total = 0.0;
    for (double v : eigenvalues) total += v;
    CsvWriter csv(path, {"index", "eigenvalue", "cumulative_share"});
    double run = 0.0;
    for (std::size_t t = 0; t < eigenvalues.size(); ++t) {
        run += eigenvalues[t];
        csv.row({static_cast<double>(t + 1), eigenvalues[t], run / total});
    }
}

inline void write_field_sample_csv(const std::filesystem::path& path, const DiffusionSetup& setup) {
    if (setup.fields.empty()) return;
    write_nodal_csv(path, setup.mesh, setup.fields.front().nodal);
}

inline void write_interior_step_csv(const std::filesystem::path& path, const StructuredMesh& mesh,
                                    const DofMap& dofs, const std::vector<Vector>& per_step,
                                    double dt, std::size_t first_step) {
    CsvWriter csv(path, {"t", "x", "y", "value"});
    for (std::size_t s = 0; s < per_step.size(); ++s) {
        const double t = dt * static_cast<double>(first_step + s);
        Vector full(mesh.node_count(), 0.0);
        if (per_step[s].size() == mesh.node_count()) {
            full = per_step[s];
        } else {
            for (std::size_t ii = 0; ii < dofs.interior.size(); ++ii)
                full[dofs.interior[ii]] = per_step[s][ii];
        }
        for (std::size_t i = 0; i < full.size(); ++i)
            csv.row({t, mesh.node_x[i], mesh.node_y[i], full[i]});
    }
}

}  // namespace detail

inline int run_solve_diffusion(const ExperimentConfig& cfg, RunManifest& manifest) {
    detail::PhaseTimer timer(manifest);
    DiffusionSetup setup =
        timer.time("assemble-and-sample", [&] { return build_setup(cfg.problem); });
    DiffusionResult result = timer.time("lrns-solve", [&] { return lrns_solve(setup); });
    detail::write_trajectory_csv(cfg.output_dir / "qoi.csv", result.qoi);
    detail::write_kl_spectrum_csv(cfg.output_dir / "kl_spectrum.csv", setup.kl_eigenvalues);
    detail::write_field_sample_csv(cfg.output_dir / "field_sample_0.csv", setup);
    nlohmann::json report = result.report.to_json();
    report["rank"] = result.rank;
    report["tau"] = result.tau;
    report["ellipticity"] = setup.ellipticity.to_json();
    detail::write_json(cfg.output_dir / "solve_report.json", report);
    return 0;
}

inline int run_solve_control(const ExperimentConfig& cfg, RunManifest& manifest) {
    detail::PhaseTimer timer(manifest);
    ReducedOperators ops = timer.time("build-reduced", [&] { return build_reduced(cfg.problem); });
    OptimizationTrace trace = timer.time("optimize", [&] { return optimize(ops); });

    {
        CsvWriter csv(cfg.output_dir / "trace.csv",
                      {"iteration", "objective", "gradient_norm", "step"});
        for (const auto& row : trace.rows)
            csv.row({static_cast<double>(row.iteration), row.objective, row.gradient_norm,
                     row.step});
    }
    detail::write_interior_step_csv(cfg.output_dir / "control.csv", ops.setup.mesh,
                                    ops.setup.dofs, trace.final_controls, cfg.problem.dt(), 1);
    detail::write_interior_step_csv(cfg.output_dir / "state_mean.csv", ops.setup.mesh,
                                    ops.setup.dofs, trace.state_mean, cfg.problem.dt(), 0);
    detail::write_kl_spectrum_csv(cfg.output_dir / "kl_spectrum.csv", ops.setup.kl_eigenvalues);
    detail::write_field_sample_csv(cfg.output_dir / "field_sample_0.csv", ops.setup);
    const double ratio =
        trace.initial_objective > 0.0 ? trace.final_objective / trace.initial_objective : 0.0;
    detail::write_json(cfg.output_dir / "summary.json",
                       nlohmann::json{{"initial_objective", trace.initial_objective},
                                      {"final_objective", trace.final_objective},
                                      {"ratio", ratio},
                                      {"iterations", trace.iterations},
                                      {"final_gradient_norm", trace.final_gradient_norm},
                                      {"termination", trace.termination},
                                      {"optimized_functional", "frozen-previous-state surrogate"},
                                      {"guard", ops.guards.to_json()}});
    return trace.termination == "line_search_failure" ? 3 : 0;
}

inline int run_compress(const ExperimentConfig& cfg, RunManifest& manifest) {
    detail::PhaseTimer timer(manifest);
    MatrixCollection coll =
        timer.time("read-collection", [&] { return read_collection(cfg.compress_input); });
    DenseMatrix gram = timer.time("gram", [&] { return gram_accumulate(coll); });
    SymmetricEigen spectrum = timer.time("spectrum", [&] { return sym_eig_ql(gram); });

    double tau = cfg.compress_tau;
    if (cfg.compress_target_energy > 0.0)
        tau = choose_tau(spectrum.values, cfg.compress_target_energy);
    RsvdConfig rsvd = RsvdConfig::defaults(coll.dimension, reduced_rank(tau, coll.dimension),
                                           split_seed(cfg.problem.seed, seeds::kSketchStream));
    rsvd.oversampling = std::min(cfg.problem.rsvd_oversampling,
                                 coll.dimension - reduced_rank(tau, coll.dimension));
    rsvd.power_iterations = cfg.problem.rsvd_power_iterations;
    LowRankFactors factors = timer.time("compress", [&] { return compress(coll, tau, rsvd); });
    const double err = rmsre(factors, coll);

    const std::filesystem::path out = cfg.output_dir / "factors";
    std::filesystem::create_directories(out);
    write_matrix_file(out / "basis.mat", factors.basis);
    {
        std::ofstream list(out / "manifest.txt");
        list << "basis.mat\n";
        for (std::size_t m = 0; m < factors.factors.size(); ++m) {
            char name[32];
            std::snprintf(name, sizeof(name), "factor_%05zu.mat", m);
            write_matrix_file(out / name, factors.factors[m]);
            list << name << "\n";
        }
    }
    EnergyProfile profile = energy_profile(spectrum.values);
    {
        CsvWriter csv(cfg.output_dir / "spectrum.csv",
                      {"index", "eigenvalue", "cumulative_share"});
        double run = 0.0;
        for (std::size_t i = 0; i < spectrum.values.size(); ++i) {
            run += std::max(spectrum.values[i], 0.0);
            csv.row({static_cast<double>(i + 1), spectrum.values[i], run / profile.total});
        }
    }
    detail::write_json(cfg.output_dir / "report.json",
                       nlohmann::json{{"samples", coll.count()},
                                      {"dimension", coll.dimension},
                                      {"tau", tau},
                                      {"rank", factors.rank},
                                      {"rmsre", err},
                                      {"energy", profile(tau)},
                                      {"stored_floats", factors.stored_floats()}});
    return 0;
}

inline int run_scan_tau(const ExperimentConfig& cfg, RunManifest& manifest) {
    detail::PhaseTimer timer(manifest);
    ScanTauResult scan =
        timer.time("scan-tau", [&] { return scan_tau(cfg.problem, cfg.tau_list); });
    manifest.timings_seconds["reference-solve"] = scan.reference_seconds;
    CsvWriter csv(cfg.output_dir / "scan_tau.csv", {"tau", "k", "error"});
    for (const auto& row : scan.rows) {
        csv.row({row.tau, static_cast<double>(row.rank), row.error});
        char phase[48];
        std::snprintf(phase, sizeof(phase), "lrns-solve tau=%g", row.tau);
        manifest.timings_seconds[phase] = row.seconds;
    }
    return 0;
}

inline int run_scan_sigma(const ExperimentConfig& cfg, RunManifest& manifest) {
    detail::PhaseTimer timer(manifest);
    ExperimentConfig local = cfg;
    // trend studies deliberately stress large sigma; flags still land in
    // the per-run reports
    local.problem.enforce_ellipticity = false;
    std::vector<ScanSigmaRow> rows = timer.time(
        "scan-sigma", [&] { return scan_sigma(local.problem, cfg.sigma_list, cfg.r_list); });
    CsvWriter csv(cfg.output_dir / "scan_sigma.csv", {"sigma", "neumann_terms", "error"});
    for (const auto& row : rows) {
        csv.row({row.sigma, static_cast<double>(row.neumann_terms), row.error});
        char phase[64];
        std::snprintf(phase, sizeof(phase), "lrns-solve sigma=%g R=%zu", row.sigma,
                      row.neumann_terms);
        manifest.timings_seconds[phase] = row.seconds;
    }
    return 0;
}

inline int run_verify(const ExperimentConfig& cfg, RunManifest& manifest) {
    detail::PhaseTimer timer(manifest);
    std::vector<checks::CheckResult> results =
        timer.time("verify", [] { return checks::run_all(); });
    bool all_pass = true;
    nlohmann::json report = nlohmann::json::array();
    for (const auto& r : results) {
        all_pass &= r.pass;
        std::printf("[%s] %-28s measured %.6e  limit %.6e  (%s)\n", r.pass ? "PASS" : "FAIL",
                    r.name.c_str(), r.measured, r.threshold, r.detail.c_str());
        report.push_back(nlohmann::json{{"name", r.name},
                                        {"measured", r.measured},
                                        {"threshold", r.threshold},
                                        {"pass", r.pass},
                                        {"detail", r.detail}});
    }
    detail::write_json(cfg.output_dir / "verify_report.json", report);
    std::printf("%s: %zu checks\n", all_pass ? "ALL PASS" : "FAILURES PRESENT", results.size());
    return all_pass ? 0 : 2;
}

/// Executes one pipeline; outputs plus the run manifest land in output_dir.
/// Returns the process exit status.
inline int run(const ExperimentConfig& cfg) {
    set_threads(cfg.threads);
    std::filesystem::create_directories(cfg.output_dir);
    RunManifest manifest = detail::start_manifest(cfg);
    int status = 1;
    if (cfg.pipeline == "solve-diffusion") status = run_solve_diffusion(cfg, manifest);
    else if (cfg.pipeline == "solve-control") status = run_solve_control(cfg, manifest);
    else if (cfg.pipeline == "compress") status = run_compress(cfg, manifest);
    else if (cfg.pipeline == "scan-tau") status = run_scan_tau(cfg, manifest);
    else if (cfg.pipeline == "scan-sigma") status = run_scan_sigma(cfg, manifest);
    else if (cfg.pipeline == "verify") status = run_verify(cfg, manifest);
    else throw std::invalid_argument("unknown pipeline '" + cfg.pipeline + "'");
    detail::write_json(cfg.output_dir / "manifest.json", manifest.to_json());
    return status;
}

}  // namespace lrns
