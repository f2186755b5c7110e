// Paper-shaped integration run at reduced sampling: the n = 32 grid
// (N = 1089 nodes) end to end through the pipeline layer.

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "lrns/pipelines.hpp"

using namespace lrns;
namespace fs = std::filesystem;

TEST(PaperScale, DiffusionPipelineCompletesOnTheLargeGrid) {
    fs::path dir = fs::temp_directory_path() / "lrns_paper_scale";
    fs::remove_all(dir);

    nlohmann::json j{{"pipeline", "solve-diffusion"},
                     {"seed", 1},
                     {"mesh", {{"cells", 32}}},
                     {"time", {{"t_end", 0.1}, {"steps", 10}}},
                     {"sampling", {{"samples", 20}, {"sigma", 0.2}, {"kl_terms", 19}}},
                     {"solver", {{"tau", 0.5}, {"neumann_terms", 5}}}};
    ExperimentConfig cfg = parse_config(j);
    cfg.output_dir = dir;
    ASSERT_EQ(run(cfg), 0);

    EXPECT_TRUE(fs::exists(dir / "qoi.csv"));
    nlohmann::json manifest;
    std::ifstream(dir / "manifest.json") >> manifest;
    EXPECT_GT(manifest["timings_seconds"]["lrns-solve"].get<double>(), 0.0);
    EXPECT_GT(manifest["timings_seconds"]["assemble-and-sample"].get<double>(), 0.0);

    nlohmann::json report;
    std::ifstream(dir / "solve_report.json") >> report;
    EXPECT_EQ(report["rank"], 545);  // ceil(0.5 * 1089)
    for (double rho : report["rho"]) EXPECT_LT(rho, 1.0);
}
