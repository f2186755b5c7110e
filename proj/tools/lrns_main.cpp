#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "lrns/pipelines.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::string output_dir;
    double tau = -1.0;
    std::int64_t seed = -1;
    int threads = -1;
};

void add_common(CLI::App* sub, CommonFlags& flags, bool config_required) {
    auto* opt = sub->add_option("-c,--config", flags.config_path, "JSON config file");
    if (config_required) opt->required();
    sub->add_option("-o,--out", flags.output_dir, "output directory (overrides config)");
    sub->add_option("--tau", flags.tau, "data compression ratio (overrides config)");
    sub->add_option("--seed", flags.seed, "master seed (overrides config)");
    sub->add_option("--threads", flags.threads, "worker pool size, 0 = all cores");
}

lrns::ExperimentConfig assemble(const std::string& pipeline, const CommonFlags& flags) {
    lrns::ExperimentConfig cfg;
    if (!flags.config_path.empty()) {
        cfg = lrns::load_config(flags.config_path);
        if (cfg.pipeline != pipeline)
            throw std::invalid_argument("config selects pipeline '" + cfg.pipeline +
                                        "' but the subcommand is '" + pipeline + "'");
    } else {
        cfg.pipeline = pipeline;
        cfg.raw = nlohmann::json{{"pipeline", pipeline}};
    }
    if (!flags.output_dir.empty()) cfg.output_dir = flags.output_dir;
    if (flags.tau > 0.0) {
        cfg.problem.tau = flags.tau;
        cfg.compress_tau = flags.tau;
    }
    if (flags.seed >= 0) cfg.problem.seed = static_cast<std::uint64_t>(flags.seed);
    if (flags.threads >= 0) cfg.threads = flags.threads;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LRNS solver: low-rank + Neumann-series pipelines for unsteady stochastic "
                 "diffusion problems"};
    app.require_subcommand(1);

    const std::vector<std::string> pipelines{"solve-diffusion", "solve-control", "compress",
                                             "scan-tau", "scan-sigma", "verify"};
    const std::vector<std::string> descriptions{
        "run the fast solver on one diffusion configuration",
        "solve the distributed optimal-control problem",
        "compress a matrix collection from disk",
        "error/compression table across tau values",
        "error grid across (sigma, R)",
        "run the built-in oracle and invariant suite"};

    std::map<std::string, CommonFlags> flags;
    for (std::size_t i = 0; i < pipelines.size(); ++i) {
        CLI::App* sub = app.add_subcommand(pipelines[i], descriptions[i]);
        add_common(sub, flags[pipelines[i]], pipelines[i] != "verify");
    }

    CLI11_PARSE(app, argc, argv);

    const std::string chosen = app.get_subcommands().front()->get_name();
    try {
        return lrns::run(assemble(chosen, flags[chosen]));
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
