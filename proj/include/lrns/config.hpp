#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lrns/control.hpp"
#include "lrns/registry.hpp"

#include "json.hpp"

namespace lrns {

/// Parsed experiment description: one pipeline plus its sections. Config is
/// JSON; flags may override the scalar fields afterwards.
struct ExperimentConfig {
    std::string pipeline;  // solve-diffusion | solve-control | compress | scan-tau | scan-sigma | verify
    std::filesystem::path output_dir = "out";
    int threads = 0;  // 0 = hardware
    bool reproducible = true;
    ControlConfig problem;  // superset of the diffusion fields
    std::vector<double> tau_list{1.0, 0.95, 0.88, 0.5, 0.3, 0.1};
    std::vector<double> sigma_list{0.1, 0.2, 0.5};
    std::vector<std::size_t> r_list{0, 5, 10, 15};
    std::filesystem::path compress_input;
    double compress_tau = 0.88;
    double compress_target_energy = 0.0;  // > 0 selects tau from the spectrum
    nlohmann::json raw;
};

namespace detail {

class ConfigReader {
  public:
    explicit ConfigReader(const nlohmann::json& root) : root_(root) {}

    template <class T>
    T get(const std::string& path, T fallback) const {
        const nlohmann::json* node = find(path);
        if (!node) return fallback;
        try {
            return node->get<T>();
        } catch (const nlohmann::json::exception&) {
            throw std::invalid_argument("config field '" + path + "': wrong type (" +
                                        node->dump() + ")");
        }
    }

    bool has(const std::string& path) const { return find(path) != nullptr; }

  private:
    const nlohmann::json* find(const std::string& path) const {
        const nlohmann::json* node = &root_;
        std::size_t start = 0;
        while (start <= path.size()) {
            const std::size_t dotpos = path.find('.', start);
            const std::string key = path.substr(start, dotpos - start);
            if (!node->is_object() || !node->contains(key)) return nullptr;
            node = &(*node)[key];
            if (dotpos == std::string::npos) break;
            start = dotpos + 1;
        }
        return node;
    }

    const nlohmann::json& root_;
};

inline void validate_function_name(const std::string& field, const std::string& name) {
    try {
        lookup_function(name);
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("config field '" + field + "': " + e.what());
    }
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& root) {
    detail::ConfigReader reader(root);
    ExperimentConfig cfg;
    cfg.raw = root;
    cfg.pipeline = reader.get<std::string>("pipeline", "");
    static const std::vector<std::string> known{"solve-diffusion", "solve-control", "compress",
                                                "scan-tau", "scan-sigma", "verify"};
    if (std::find(known.begin(), known.end(), cfg.pipeline) == known.end())
        throw std::invalid_argument(
            "config field 'pipeline': unknown value '" + cfg.pipeline +
            "' (expected solve-diffusion, solve-control, compress, scan-tau, scan-sigma, verify)");

    cfg.output_dir = reader.get<std::string>("output_dir", "out");
    cfg.threads = reader.get<int>("threads", 0);
    cfg.reproducible = reader.get<bool>("reproducible", true);

    ControlConfig& p = cfg.problem;
    p.mesh_cells = reader.get<std::size_t>("mesh.cells", p.mesh_cells);
    if (p.mesh_cells == 0) throw std::invalid_argument("config field 'mesh.cells': must be >= 1");
    p.t_end = reader.get<double>("time.t_end", p.t_end);
    p.steps = reader.get<std::size_t>("time.steps", p.steps);
    if (p.steps == 0) throw std::invalid_argument("config field 'time.steps': must be >= 1");
    if (!(p.t_end > 0.0)) throw std::invalid_argument("config field 'time.t_end': must be > 0");

    p.samples = reader.get<std::size_t>("sampling.samples", p.samples);
    if (p.samples == 0) throw std::invalid_argument("config field 'sampling.samples': must be >= 1");
    p.sigma = reader.get<double>("sampling.sigma", p.sigma);
    if (p.sigma < 0.0 || p.sigma > 1.0)
        throw std::invalid_argument("config field 'sampling.sigma': must lie in [0, 1]");
    p.kl_terms = reader.get<std::size_t>("sampling.kl_terms", p.kl_terms);
    p.correlation_length = reader.get<double>("sampling.correlation_length", p.correlation_length);
    if (!(p.correlation_length > 0.0))
        throw std::invalid_argument("config field 'sampling.correlation_length': must be > 0");
    p.truncation_bound = reader.get<double>("sampling.truncation_bound", p.truncation_bound);

    p.tau = reader.get<double>("solver.tau", p.tau);
    if (!(p.tau > 0.0 && p.tau <= 1.0))
        throw std::invalid_argument("config field 'solver.tau': must lie in (0, 1]");
    p.neumann_terms = reader.get<std::size_t>("solver.neumann_terms", p.neumann_terms);
    p.rsvd_oversampling = reader.get<std::size_t>("solver.rsvd_oversampling", p.rsvd_oversampling);
    p.rsvd_power_iterations =
        reader.get<std::size_t>("solver.rsvd_power_iterations", p.rsvd_power_iterations);
    p.guard_threshold = reader.get<double>("solver.guard_threshold", p.guard_threshold);
    if (!(p.guard_threshold > 0.0 && p.guard_threshold <= 1.0))
        throw std::invalid_argument("config field 'solver.guard_threshold': must lie in (0, 1]");
    p.guard_iterations = reader.get<std::size_t>("solver.guard_iterations", p.guard_iterations);

    p.seed = reader.get<std::uint64_t>("seed", p.seed);
    p.enforce_ellipticity = reader.get<bool>("enforce_ellipticity", p.enforce_ellipticity);
    p.store_sample_trajectories =
        reader.get<bool>("store_sample_trajectories", p.store_sample_trajectories);

    // the diffusion default initial condition applies unless this is a
    // control run, whose constructor default is the tracking problem's
    if (cfg.pipeline != "solve-control") {
        p.initial = "sin2pix_sin2piy";
        p.source = "one";
    }
    p.source = reader.get<std::string>("functions.source", p.source);
    p.boundary = reader.get<std::string>("functions.boundary", p.boundary);
    p.initial = reader.get<std::string>("functions.initial", p.initial);
    p.mean_field = reader.get<std::string>("functions.mean_field", p.mean_field);
    detail::validate_function_name("functions.source", p.source);
    detail::validate_function_name("functions.boundary", p.boundary);
    detail::validate_function_name("functions.initial", p.initial);
    detail::validate_function_name("functions.mean_field", p.mean_field);

    p.desired = reader.get<std::string>("control.desired", p.desired);
    detail::validate_function_name("control.desired", p.desired);
    p.beta = reader.get<double>("control.beta", p.beta);
    if (!(p.beta > 0.0)) throw std::invalid_argument("config field 'control.beta': must be > 0");
    p.tolerance = reader.get<double>("control.tolerance", p.tolerance);
    if (!(p.tolerance > 0.0))
        throw std::invalid_argument("config field 'control.tolerance': must be > 0");
    p.line_search_cap = reader.get<std::size_t>("control.line_search_cap", p.line_search_cap);
    p.max_iterations = reader.get<std::size_t>("control.max_iterations", p.max_iterations);
    p.sgd_batch = reader.get<std::size_t>("control.sgd_batch", p.sgd_batch);
    p.sgd_max_iterations =
        reader.get<std::size_t>("control.sgd_max_iterations", p.sgd_max_iterations);
    p.literal_gradient = reader.get<bool>("control.literal_gradient", p.literal_gradient);
    if (reader.has("control.optimizer"))
        p.optimizer = optimizer_from_name(reader.get<std::string>("control.optimizer", "newton"));

    if (reader.has("scan.tau_list")) cfg.tau_list = reader.get<std::vector<double>>("scan.tau_list", {});
    for (double tau : cfg.tau_list)
        if (!(tau > 0.0 && tau <= 1.0))
            throw std::invalid_argument("config field 'scan.tau_list': entries must lie in (0, 1]");
    if (reader.has("scan.sigma_list"))
        cfg.sigma_list = reader.get<std::vector<double>>("scan.sigma_list", {});
    if (reader.has("scan.r_list"))
        cfg.r_list = reader.get<std::vector<std::size_t>>("scan.r_list", {});

    cfg.compress_input = reader.get<std::string>("compress.input_dir", "");
    cfg.compress_tau = reader.get<double>("compress.tau", cfg.compress_tau);
    cfg.compress_target_energy =
        reader.get<double>("compress.target_energy", cfg.compress_target_energy);
    if (cfg.pipeline == "compress") {
        if (cfg.compress_input.empty())
            throw std::invalid_argument("config field 'compress.input_dir': required");
        if (!(cfg.compress_tau > 0.0 && cfg.compress_tau <= 1.0))
            throw std::invalid_argument("config field 'compress.tau': must lie in (0, 1]");
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path.string());
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
    }
    return parse_config(root);
}

inline std::uint64_t experiment_hash(const ExperimentConfig& cfg) {
    const std::string dump = cfg.raw.dump();  // canonical: object keys sorted
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace lrns
