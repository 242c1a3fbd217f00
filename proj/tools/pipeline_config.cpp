#include "pipeline_config.hpp"

#include <cstdlib>
#include <fstream>

#include "spn/errors.hpp"

namespace spnclust {

double default_gamma_for_dim(Eigen::Index d) {
    switch (d) {
        case 256L * 256L:
            return 0.0045;
        case 512L * 512L:
            return 0.0018;
        case 768L * 768L:
            return 0.0012;
        case 1024L * 1024L:
            return 0.0008;
        default:
            return 0.0;
    }
}

double PipelineConfig::resolved_gamma(Eigen::Index d) const {
    if (gamma > 0.0) return gamma;
    const double table = default_gamma_for_dim(d);
    if (table > 0.0) return table;
    throw spn::DimensionMismatch(
        "no default gamma for dimension " + std::to_string(d) +
        "; pass --gamma explicitly (defaults exist for 256/512/768/1024 square SPNs)");
}

spn::AdmmConfig PipelineConfig::admm(Eigen::Index d) const {
    spn::AdmmConfig cfg;
    cfg.gamma = resolved_gamma(d);
    cfg.eta = eta;
    cfg.epsilon = epsilon;
    cfg.max_iters = max_iters;
    return cfg;
}

spn::LsConfig PipelineConfig::ls(Eigen::Index d) const {
    spn::LsConfig cfg;
    cfg.batch_size = batch_size;
    cfg.knn = knn;
    if (recycle_steps >= 0) cfg.recycle_steps = recycle_steps;
    cfg.p_fa = pfa;
    cfg.inlier_fraction = inlier_fraction;
    cfg.walk_steps = walk_steps;
    cfg.card_cap = card_cap;
    cfg.workers = workers;
    cfg.admm = admm(d);
    return cfg;
}

nlohmann::json PipelineConfig::to_json(Eigen::Index d) const {
    return nlohmann::json{{"mode", mode},
                          {"gamma", resolved_gamma(d)},
                          {"eta", eta},
                          {"epsilon", epsilon},
                          {"max_iters", max_iters},
                          {"batch_size", batch_size},
                          {"knn", knn},
                          {"recycle_steps", recycle_steps},
                          {"pfa", pfa},
                          {"inlier_fraction", inlier_fraction},
                          {"walk_steps", walk_steps},
                          {"card_cap", card_cap},
                          {"workers", workers},
                          {"spn_size", spn_size},
                          {"kappa_max", kappa_max},
                          {"single_solve_cap", single_solve_cap},
                          {"seed", seed},
                          {"trace", trace}};
}

void PipelineConfig::apply_json(const nlohmann::json& j) {
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("mode", mode);
    get("gamma", gamma);
    get("eta", eta);
    get("epsilon", epsilon);
    get("max_iters", max_iters);
    get("batch_size", batch_size);
    get("knn", knn);
    get("recycle_steps", recycle_steps);
    get("pfa", pfa);
    get("inlier_fraction", inlier_fraction);
    get("walk_steps", walk_steps);
    get("card_cap", card_cap);
    get("workers", workers);
    get("spn_size", spn_size);
    get("kappa_max", kappa_max);
    get("single_solve_cap", single_solve_cap);
    get("seed", seed);
    get("trace", trace);
}

std::optional<std::filesystem::path> apply_config_file(int argc, char** argv,
                                                       PipelineConfig& cfg) {
    std::optional<std::filesystem::path> path;
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") path = argv[i + 1];
    }
    if (!path) {
        if (const char* env = std::getenv("SPNCLUST_CONFIG")) path = env;
    }
    if (!path) return std::nullopt;

    std::ifstream in(*path);
    if (!in) throw spn::IoError("config: cannot open " + path->string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw spn::IoError("config: " + path->string() + ": " + e.what());
    }
    cfg.apply_json(j);
    return path;
}

}  // namespace spnclust
