#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "spn/admm.hpp"
#include "spn/largescale.hpp"

namespace spnclust {

// Every tunable of the pipeline with its stock default. A JSON config file
// (via --config or SPNCLUST_CONFIG) is applied first; command-line flags
// override it.
struct PipelineConfig {
    std::string mode = "ssc-nc";
    double gamma = 0.0;  // 0 = resolve from the per-SPN-size table
    double eta = 1.0;
    double epsilon = 1e-4;
    int max_iters = 1000;
    int batch_size = 4000;
    int knn = 5;
    int recycle_steps = -1;  // -1 = floor(B/2)
    double pfa = 0.001;
    double inlier_fraction = 0.8;
    int walk_steps = 1000;
    int card_cap = 50;
    int workers = 1;
    int spn_size = 512;
    int kappa_max = 50;
    int single_solve_cap = 6000;
    std::uint64_t seed = 0;
    bool trace = false;

    // gamma for the fingerprint dimension; throws when no default exists
    // and none was given
    double resolved_gamma(Eigen::Index d) const;

    spn::AdmmConfig admm(Eigen::Index d) const;
    spn::LsConfig ls(Eigen::Index d) const;

    nlohmann::json to_json(Eigen::Index d) const;
    void apply_json(const nlohmann::json& j);
};

// 0.0 when the dimension has no published default.
double default_gamma_for_dim(Eigen::Index d);

// Pre-scan for --config / SPNCLUST_CONFIG and apply the file if present.
// Returns the path that was applied, if any.
std::optional<std::filesystem::path> apply_config_file(int argc, char** argv,
                                                       PipelineConfig& cfg);

}  // namespace spnclust
