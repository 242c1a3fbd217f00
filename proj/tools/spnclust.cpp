// spnclust: camera-fingerprint clustering front end.
//
// Subcommands: synth, extract, cluster, eval, bench. All runs are
// deterministic given the printed config and seed; logs are key=value
// lines on stdout.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "pipeline_config.hpp"
#include "spn/io.hpp"
#include "spn/metrics.hpp"
#include "spn/version.hpp"

namespace fs = std::filesystem;
using namespace spn;
using spnclust::PipelineConfig;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void log_kv(std::initializer_list<std::pair<std::string, std::string>> fields) {
    bool first = true;
    for (const auto& [k, v] : fields) {
        if (!first) std::cout << ' ';
        std::cout << k << '=' << v;
        first = false;
    }
    std::cout << '\n';
}

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

void add_solver_flags(CLI::App* cmd, PipelineConfig& cfg) {
    cmd->add_option("--config", "JSON config file (flags win)")->type_name("PATH");
    cmd->add_option("--gamma", cfg.gamma, "l1 weight (default by --spn-size table)");
    cmd->add_option("--eta", cfg.eta, "augmented Lagrangian parameter");
    cmd->add_option("--epsilon", cfg.epsilon, "solver stop tolerance");
    cmd->add_option("--max-iters", cfg.max_iters, "solver iteration cap");
    cmd->add_option("--seed", cfg.seed, "run seed");
}

void add_ls_flags(CLI::App* cmd, PipelineConfig& cfg) {
    cmd->add_option("--batch-size", cfg.batch_size, "fingerprints per batch (p)");
    cmd->add_option("--knn", cfg.knn, "nearest neighbors kept per column (K)");
    cmd->add_option("--recycle", cfg.recycle_steps, "recycling rounds (-1 = batches/2)");
    cmd->add_option("--pfa", cfg.pfa, "false-alarm rate for merge/attract thresholds");
    cmd->add_option("--inlier-fraction", cfg.inlier_fraction, "random-walk inlier share");
    cmd->add_option("--walk-steps", cfg.walk_steps, "random-walk steps");
    cmd->add_option("--card-cap", cfg.card_cap, "bounded member-cache size");
    cmd->add_option("--workers", cfg.workers, "concurrent batch partitions");
}

int run_synth(const PipelineConfig& cfg, const SynthCameraSet& synth_cfg, const fs::path& out,
              const fs::path& labels_path) {
    (void)cfg;
    const SynthResult r = synthesize(synth_cfg);
    write_spnf(out, r.fingerprints);
    std::vector<std::pair<std::string, std::string>> rows;
    for (std::size_t i = 0; i < r.fingerprints.ids.size(); ++i) {
        rows.emplace_back(r.fingerprints.ids[i], "cam" + std::to_string(r.labels[i]));
    }
    write_label_table(labels_path, rows);
    log_kv({{"event", "synth"},
            {"n", std::to_string(r.fingerprints.count())},
            {"d", std::to_string(r.fingerprints.dim())},
            {"cameras", std::to_string(synth_cfg.num_cameras)},
            {"file", out.string()},
            {"labels", labels_path.string()}});
    return 0;
}

int run_extract(const PipelineConfig& cfg, const fs::path& input_dir, const fs::path& out) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(input_dir)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    FingerprintMatrix m;
    std::vector<Eigen::VectorXd> columns;
    for (const auto& file : files) {
        try {
            RawImage img = read_pnm(file);
            if (img.height() < cfg.spn_size || img.width() < cfg.spn_size) {
                log_kv({{"event", "skip"}, {"file", file.string()}, {"reason", "too_small"}});
                continue;
            }
            img = img.crop_top_left(cfg.spn_size);
            if (is_dark_image(img)) {
                log_kv({{"event", "skip"}, {"file", file.string()}, {"reason", "dark"}});
                continue;
            }
            const Eigen::MatrixXd residual = extract_residual(img, gaussian_blur_denoiser);
            columns.push_back(normalize_residual(residual).values());
            m.ids.push_back(file.filename().string());
        } catch (const IoError& e) {
            log_kv({{"event", "skip"}, {"file", file.string()}, {"reason", "unreadable"}});
        } catch (const DegenerateResidual& e) {
            log_kv({{"event", "skip"}, {"file", file.string()}, {"reason", "degenerate"}});
        }
    }
    if (columns.empty()) {
        throw EmptyOutput("extract: no usable images in " + input_dir.string());
    }
    m.data.resize(columns[0].rows(), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t j = 0; j < columns.size(); ++j) {
        m.data.col(static_cast<Eigen::Index>(j)) = columns[j];
    }
    write_spnf(out, m);
    log_kv({{"event", "extract"},
            {"n", std::to_string(m.count())},
            {"d", std::to_string(m.dim())},
            {"file", out.string()}});
    return 0;
}

FingerprintMatrix read_spnf_concat(const std::vector<fs::path>& inputs) {
    FingerprintMatrix all = read_spnf(inputs.front());
    for (std::size_t f = 1; f < inputs.size(); ++f) {
        const FingerprintMatrix next = read_spnf(inputs[f]);
        if (next.dim() != all.dim()) {
            throw DimensionMismatch("inputs disagree on fingerprint dimension");
        }
        const Eigen::Index offset = all.count();
        all.data.conservativeResize(Eigen::NoChange, offset + next.count());
        all.data.rightCols(next.count()) = next.data;
        all.ids.insert(all.ids.end(), next.ids.begin(), next.ids.end());
    }
    all.validate();
    return all;
}

int run_cluster(PipelineConfig& cfg, const std::vector<fs::path>& inputs,
                const fs::path& out_dir, bool resume) {
    fs::create_directories(out_dir);
    const std::string started = utc_now();
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<std::string> ids;
    ClusteringResult result;
    std::map<std::string, double> phase_seconds;
    nlohmann::json counts;

    if (cfg.mode == "ssc-nc") {
        const FingerprintMatrix m = read_spnf_concat(inputs);
        if (m.count() > cfg.single_solve_cap) {
            throw DimensionMismatch("ssc-nc: n=" + std::to_string(m.count()) +
                                    " exceeds the single-solve cap " +
                                    std::to_string(cfg.single_solve_cap) +
                                    "; use --mode ls-ssc");
        }
        ids = m.ids;
        if (m.count() == 1) {
            result.labels = {0};
            result.num_clusters = 1;
            counts = {{"n", 1}, {"d", m.dim()}, {"kappa", 1}};
            write_result(out_dir / "result.csv", ids, result);
            log_kv({{"event", "cluster"}, {"mode", cfg.mode}, {"clusters", "1"}});
            return 0;
        }
        const AdmmConfig admm_cfg = cfg.admm(m.dim());

        TraceSink sink;
        std::ofstream trace_file;
        if (cfg.trace) {
            trace_file.open(out_dir / "trace.csv");
            trace_file << "iter,gap,objective\n";
            sink = [&](int it, double gap, double obj) {
                trace_file << it << ',' << gap << ',' << obj << '\n';
            };
        }

        const auto solve_start = std::chrono::steady_clock::now();
        const SparseRepr repr = constrained_lasso(m, admm_cfg, sink);
        phase_seconds["solve"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - solve_start).count();
        log_kv({{"event", "solve"},
                {"iterations", std::to_string(repr.iterations)},
                {"gap", fmt(repr.final_gap)},
                {"converged", repr.converged ? "true" : "false"}});

        const auto cluster_start = std::chrono::steady_clock::now();
        const AffinityGraph g = symmetrize(repr);
        const int kappa_max = std::clamp(cfg.kappa_max, 1, static_cast<int>(m.count()) - 1);
        const int kappa = estimate_num_clusters(g, kappa_max);
        result = spectral_cluster(g, kappa, cfg.seed);
        phase_seconds["spectral"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - cluster_start)
                .count();
        counts = {{"n", m.count()}, {"d", m.dim()}, {"kappa", kappa}};
    } else if (cfg.mode == "ls-ssc") {
        MultiFileFingerprintStore store(
            std::vector<std::filesystem::path>(inputs.begin(), inputs.end()));
        ids = store.ids();
        LsConfig ls_cfg = cfg.ls(store.dim());
        LsCheckpoint ckpt{out_dir / "checkpoints", resume};
        LsRunStats stats;
        result = ls_ssc(store, ls_cfg, cfg.seed, ckpt, &stats);
        phase_seconds = stats.phase_seconds;
        counts = {{"n", store.count()},
                  {"d", store.dim()},
                  {"batches", stats.num_batches},
                  {"recycle_rounds", stats.recycle_rounds},
                  {"subclusters_before_merge", stats.subclusters_before_merge},
                  {"peak_resident", store.peak_resident()}};

        std::ofstream summary(out_dir / "clusters.csv");
        summary << "cluster,cardinality,intra_corr\n";
        for (std::size_t c = 0; c < stats.clusters.size(); ++c) {
            summary << c << ',' << stats.clusters[c].cardinality << ','
                    << stats.clusters[c].intra_corr << '\n';
        }
    } else {
        throw CLI::ValidationError("--mode must be ssc-nc or ls-ssc");
    }

    counts["clusters"] = result.num_clusters;
    counts["unclustered"] = result.unclustered_count();
    write_result(out_dir / "result.csv", ids, result);

    nlohmann::json input_list = nlohmann::json::array();
    for (const auto& p : inputs) input_list.push_back(p.string());
    nlohmann::json manifest{{"tool_version", kVersion},
                            {"command", "cluster"},
                            {"input", input_list},
                            {"config", cfg.to_json(counts["d"].get<Eigen::Index>())},
                            {"counts", counts},
                            {"phase_seconds", phase_seconds},
                            {"started_utc", started},
                            {"finished_utc", utc_now()},
                            {"total_seconds", std::chrono::duration<double>(
                                                  std::chrono::steady_clock::now() - t0)
                                                  .count()}};
    std::ofstream mf(out_dir / "manifest.json");
    mf << manifest.dump(2) << '\n';

    log_kv({{"event", "cluster"},
            {"mode", cfg.mode},
            {"clusters", std::to_string(result.num_clusters)},
            {"unclustered", std::to_string(result.unclustered_count())},
            {"result", (out_dir / "result.csv").string()}});
    return 0;
}

int run_eval(const fs::path& result_path, const fs::path& labels_path, const fs::path& csv_out) {
    const auto [ids, result] = read_result(result_path);
    const auto label_rows = read_label_table(labels_path);

    std::map<std::string, std::string> truth_by_id(label_rows.begin(), label_rows.end());
    if (truth_by_id.size() != label_rows.size()) {
        throw DimensionMismatch("eval: duplicate ids in label table");
    }
    if (ids.size() != truth_by_id.size()) {
        throw DimensionMismatch("eval: result and label id sets differ in size");
    }
    std::map<std::string, int> class_of;
    std::vector<int> truth;
    truth.reserve(ids.size());
    for (const auto& id : ids) {
        const auto it = truth_by_id.find(id);
        if (it == truth_by_id.end()) {
            throw DimensionMismatch("eval: id missing from label table: " + id);
        }
        const auto [cls, inserted] =
            class_of.emplace(it->second, static_cast<int>(class_of.size()));
        truth.push_back(cls->second);
    }

    const MetricsReport report = evaluate(result, truth);
    log_kv({{"event", "eval"},
            {"precision", fmt(report.precision)},
            {"recall", fmt(report.recall)},
            {"f_measure", fmt(report.f_measure)},
            {"ri", fmt(report.ri)},
            {"ari", fmt(report.ari)},
            {"lp_over_lg", fmt(report.lp_over_lg)},
            {"clusters", std::to_string(report.num_pred_clusters)},
            {"unclustered", std::to_string(report.unclustered)}});

    if (!csv_out.empty()) {
        std::ofstream csv(csv_out);
        csv << "precision,recall,f_measure,ri,ari,lp_over_lg,unclustered\n"
            << report.precision << ',' << report.recall << ',' << report.f_measure << ','
            << report.ri << ',' << report.ari << ',' << report.lp_over_lg << ','
            << report.unclustered << '\n';
    }
    return 0;
}

int run_bench(const PipelineConfig& cfg, const std::vector<int>& sizes, const fs::path& out) {
    std::ofstream csv(out);
    csv << "n,synth_seconds,solve_seconds,cluster_seconds\n";
    for (int n : sizes) {
        SynthCameraSet synth_cfg;
        synth_cfg.num_cameras = 5;
        synth_cfg.images_per_camera = std::max(1, n / 5);
        synth_cfg.side = 64;
        synth_cfg.theta_variance = 0.01;
        synth_cfg.rng_seed = cfg.seed;

        auto tick = std::chrono::steady_clock::now();
        const SynthResult s = synthesize(synth_cfg);
        const double synth_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - tick).count();

        AdmmConfig admm_cfg;
        admm_cfg.gamma = cfg.gamma > 0.0 ? cfg.gamma : 0.06;
        admm_cfg.eta = cfg.eta;
        admm_cfg.epsilon = cfg.epsilon;
        admm_cfg.max_iters = cfg.max_iters;

        tick = std::chrono::steady_clock::now();
        const SparseRepr repr = constrained_lasso(s.fingerprints, admm_cfg);
        const double solve_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - tick).count();

        tick = std::chrono::steady_clock::now();
        const AffinityGraph g = symmetrize(repr);
        const int n_actual = static_cast<int>(s.fingerprints.count());
        const int kappa =
            estimate_num_clusters(g, std::clamp(cfg.kappa_max, 1, n_actual - 1));
        spectral_cluster(g, kappa, cfg.seed);
        const double cluster_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - tick).count();

        csv << n_actual << ',' << synth_s << ',' << solve_s << ',' << cluster_s << '\n';
        log_kv({{"event", "bench"},
                {"n", std::to_string(n_actual)},
                {"solve_seconds", fmt(solve_s)}});
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"camera sensor-pattern-noise fingerprint clustering"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    PipelineConfig cfg;
    try {
        spnclust::apply_config_file(argc, argv, cfg);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic fingerprint set");
    SynthCameraSet synth_cfg;
    fs::path synth_out = "fingerprints.spnf";
    fs::path synth_labels = "labels.csv";
    synth->add_option("--cameras", synth_cfg.num_cameras, "number of cameras");
    synth->add_option("--images", synth_cfg.images_per_camera, "images per camera");
    synth->add_option("--side", synth_cfg.side, "synthetic image side length");
    synth->add_option("--k-var", synth_cfg.k_variance, "pattern (PRNU) variance");
    synth->add_option("--theta-var", synth_cfg.theta_variance, "shot-noise variance");
    synth->add_option("--base", synth_cfg.base_intensity, "clean image intensity");
    synth->add_option("--seed", synth_cfg.rng_seed, "generator seed");
    synth->add_option("--out", synth_out, "output SPNF path");
    synth->add_option("--labels", synth_labels, "output ground-truth label table");
    synth->add_option("--config", "JSON config file")->type_name("PATH");

    // extract
    auto* extract = app.add_subcommand("extract", "extract fingerprints from raster images");
    fs::path extract_dir;
    fs::path extract_out = "fingerprints.spnf";
    extract->add_option("--input", extract_dir, "directory of PNM (P5/P6) images")
        ->required()
        ->check(CLI::ExistingDirectory);
    extract->add_option("--out", extract_out, "output SPNF path");
    extract->add_option("--spn-size", cfg.spn_size, "top-left crop side length");
    extract->add_option("--config", "JSON config file")->type_name("PATH");

    // cluster
    auto* cluster = app.add_subcommand("cluster", "cluster a fingerprint file");
    std::vector<fs::path> cluster_in;
    fs::path cluster_out = "run";
    bool resume = false;
    cluster->add_option("--input", cluster_in, "SPNF fingerprint file(s)")
        ->required()
        ->check(CLI::ExistingFile);
    cluster->add_option("--out", cluster_out, "output directory");
    cluster->add_option("--mode", cfg.mode, "ssc-nc | ls-ssc");
    cluster->add_option("--kappa-max", cfg.kappa_max, "eigengap search bound");
    cluster->add_option("--single-solve-cap", cfg.single_solve_cap,
                        "largest n allowed in ssc-nc mode");
    cluster->add_flag("--trace", cfg.trace, "write per-iteration solver trace (ssc-nc)");
    cluster->add_flag("--resume", resume, "resume from checkpoints in the output directory");
    cluster->add_option("--spn-size", cfg.spn_size, "SPN side length (for gamma defaults)");
    add_solver_flags(cluster, cfg);
    add_ls_flags(cluster, cfg);

    // eval
    auto* eval = app.add_subcommand("eval", "score a result against ground truth");
    fs::path eval_result;
    fs::path eval_labels;
    fs::path eval_csv;
    eval->add_option("--result", eval_result, "result.csv from cluster")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--labels", eval_labels, "ground-truth label table")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--csv", eval_csv, "also write a plot-ready metrics CSV");

    // bench
    auto* bench = app.add_subcommand("bench", "time pipeline phases over problem sizes");
    std::vector<int> bench_sizes;
    fs::path bench_out = "bench.csv";
    bench->add_option("--sizes", bench_sizes, "problem sizes (total fingerprints)")
        ->delimiter(',');
    bench->add_option("--out", bench_out, "output CSV");
    add_solver_flags(bench, cfg);

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return run_synth(cfg, synth_cfg, synth_out, synth_labels);
        if (extract->parsed()) return run_extract(cfg, extract_dir, extract_out);
        if (cluster->parsed()) return run_cluster(cfg, cluster_in, cluster_out, resume);
        if (eval->parsed()) return run_eval(eval_result, eval_labels, eval_csv);
        if (bench->parsed()) return run_bench(cfg, bench_sizes, bench_out);
    } catch (const NumericalFailure& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}
