#include "spn/largescale.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>
#include <utility>

#include <json.hpp>

#include "spn/stats.hpp"

namespace spn {

namespace {

using json = nlohmann::json;

double mean_pairwise_correlation(const Eigen::MatrixXd& members) {
    const auto m = members.cols();
    if (m < 2) return 0.0;  // undefined for singletons, pinned to 0
    double acc = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = i + 1; j < m; ++j) {
            acc += normalized_correlation(members.col(i), members.col(j));
        }
    }
    return acc / (static_cast<double>(m) * static_cast<double>(m - 1) / 2.0);
}

struct PhaseTimer {
    explicit PhaseTimer(LsRunStats* stats, std::string name)
        : stats_(stats), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}
    ~PhaseTimer() {
        if (stats_) {
            stats_->phase_seconds[name_] =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        }
    }
    LsRunStats* stats_;
    std::string name_;
    std::chrono::steady_clock::time_point start_;
};

std::uint64_t config_digest(const LsConfig& cfg, std::uint64_t seed) {
    std::ostringstream os;
    os << cfg.batch_size << '|' << cfg.knn << '|' << cfg.recycle_steps.value_or(-1) << '|'
       << cfg.p_fa << '|' << cfg.inlier_fraction << '|' << cfg.walk_steps << '|' << cfg.card_cap
       << '|' << cfg.admm.gamma << '|' << cfg.admm.eta << '|' << cfg.admm.epsilon << '|'
       << cfg.admm.max_iters << '|' << seed;
    return mix_seed(0x53504e46ULL, os.str());
}

struct PipelineState {
    std::vector<SubCluster> subclusters;
    std::vector<std::vector<int>> pools;
};

json state_to_json(const PipelineState& st) {
    json j;
    j["subclusters"] = json::array();
    for (const auto& sc : st.subclusters) j["subclusters"].push_back(sc.member_ids);
    j["pools"] = st.pools;
    return j;
}

// Rebuild cached subcluster state from member ids; bounded members are the
// first min(n, cap) ids by the bounded-first ordering convention.
PipelineState state_from_json(const json& j, const FingerprintStore& store, int card_cap) {
    PipelineState st;
    for (const auto& members : j.at("subclusters")) {
        std::vector<int> ids = members.get<std::vector<int>>();
        const auto take = std::min<std::size_t>(ids.size(), static_cast<std::size_t>(card_cap));
        const std::vector<int> bounded_ids(ids.begin(), ids.begin() + static_cast<long>(take));
        const LoadedBatch batch = store.load(bounded_ids);
        st.subclusters.push_back(make_subcluster(std::move(ids), batch.matrix()));
    }
    st.pools = j.at("pools").get<std::vector<std::vector<int>>>();
    return st;
}

void save_checkpoint(const LsCheckpoint& ckpt, const std::string& phase, std::uint64_t digest,
                     const PipelineState& st) {
    if (!ckpt.enabled()) return;
    std::filesystem::create_directories(ckpt.dir);
    json j = state_to_json(st);
    j["phase"] = phase;
    j["digest"] = digest;
    const auto path = ckpt.dir / ("phase_" + phase + ".json");
    std::ofstream out(path);
    out << j.dump();
    if (!out) throw IoError("checkpoint write failed: " + path.string());
}

std::optional<PipelineState> load_checkpoint(const LsCheckpoint& ckpt, const std::string& phase,
                                             std::uint64_t digest, const FingerprintStore& store,
                                             int card_cap) {
    if (!ckpt.enabled() || !ckpt.resume) return std::nullopt;
    const auto path = ckpt.dir / ("phase_" + phase + ".json");
    std::ifstream in(path);
    if (!in) return std::nullopt;
    json j;
    in >> j;
    if (j.at("digest").get<std::uint64_t>() != digest) return std::nullopt;
    return state_from_json(j, store, card_cap);
}

}  // namespace

int LsConfig::resolved_recycle_steps(int num_batches) const {
    if (recycle_steps) return *recycle_steps;
    return num_batches / 2;
}

void LsConfig::validate() const {
    if (batch_size < 2) throw DimensionMismatch("LsConfig: batch_size must be >= 2");
    if (knn < 1) throw DimensionMismatch("LsConfig: knn must be >= 1");
    if (recycle_steps && *recycle_steps < 0) {
        throw DimensionMismatch("LsConfig: recycle_steps must be >= 0");
    }
    if (!(p_fa > 0.0 && p_fa < 1.0)) throw DimensionMismatch("LsConfig: p_fa outside (0,1)");
    if (!(inlier_fraction > 0.0 && inlier_fraction <= 1.0)) {
        throw DimensionMismatch("LsConfig: inlier_fraction outside (0,1]");
    }
    if (walk_steps < 1) throw DimensionMismatch("LsConfig: walk_steps must be >= 1");
    if (card_cap < 1) throw DimensionMismatch("LsConfig: card_cap must be >= 1");
    if (workers < 1) throw DimensionMismatch("LsConfig: workers must be >= 1");
    admm.validate();
}

SubCluster make_subcluster(std::vector<int> member_ids, const Eigen::MatrixXd& bounded_columns) {
    if (member_ids.empty() || bounded_columns.cols() == 0) {
        throw DimensionMismatch("make_subcluster: empty member set");
    }
    SubCluster sc;
    sc.member_ids = std::move(member_ids);
    sc.bounded_members = bounded_columns;
    sc.centroid = centroid(sc.bounded_members);
    sc.intra_corr = mean_pairwise_correlation(sc.bounded_members);
    return sc;
}

MergeRegressor MergeRegressor::paper_default() {
    MergeRegressor reg;
    reg.weights << 0.0016, 0.0016, 2.2474, 2.2474;
    reg.bias = -0.0474;
    return reg;
}

double MergeRegressor::evaluate(double n_a, double n_b, double rho_a, double rho_b) const {
    return 0.5 * (weights[0] + weights[1]) * (n_a + n_b) +
           0.5 * (weights[2] + weights[3]) * (rho_a + rho_b) + bias;
}

void MergeRegressor::validate() const {
    if (std::abs(weights[0] - weights[1]) > 1e-8 || std::abs(weights[2] - weights[3]) > 1e-8) {
        throw DimensionMismatch("MergeRegressor: weights not role-symmetric");
    }
}

MergeRegressor fit_merge_regressor(std::span<const MergeSample> samples) {
    if (samples.size() < 5) throw DimensionMismatch("fit_merge_regressor: need >= 5 samples");

    // augment with role-swapped duplicates, then canonicalize the row order
    // so permuted input yields a bit-identical fit
    std::vector<std::array<double, 5>> rows;
    rows.reserve(samples.size() * 2);
    for (const auto& s : samples) {
        rows.push_back({s.n_a, s.n_b, s.rho_a, s.rho_b, s.target});
        rows.push_back({s.n_b, s.n_a, s.rho_b, s.rho_a, s.target});
    }
    std::sort(rows.begin(), rows.end());

    const auto m = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd design(m, 5);
    Eigen::VectorXd target(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        design.row(i) << r[0], r[1], r[2], r[3], 1.0;
        target[i] = r[4];
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < 5) throw SingularFit("fit_merge_regressor: rank-deficient design");
    const Eigen::VectorXd sol = qr.solve(target);

    MergeRegressor reg;
    const double w_n = 0.5 * (sol[0] + sol[1]);
    const double w_rho = 0.5 * (sol[2] + sol[3]);
    reg.weights << w_n, w_n, w_rho, w_rho;
    reg.bias = sol[4];
    reg.validate();
    return reg;
}

LoadedBatch::LoadedBatch(Eigen::MatrixXd m, const FingerprintStore* origin)
    : matrix_(std::move(m)), origin_(origin) {}

LoadedBatch::LoadedBatch(LoadedBatch&& other) noexcept
    : matrix_(std::move(other.matrix_)), origin_(other.origin_) {
    other.origin_ = nullptr;
}

LoadedBatch& LoadedBatch::operator=(LoadedBatch&& other) noexcept {
    if (this != &other) {
        if (origin_) origin_->release(static_cast<int>(matrix_.cols()));
        matrix_ = std::move(other.matrix_);
        origin_ = other.origin_;
        other.origin_ = nullptr;
    }
    return *this;
}

LoadedBatch::~LoadedBatch() {
    if (origin_) origin_->release(static_cast<int>(matrix_.cols()));
}

LoadedBatch FingerprintStore::load(std::span<const int> indices) const {
    Eigen::MatrixXd m = load_columns(indices);
    const int n = static_cast<int>(m.cols());
    const int now = resident_.fetch_add(n) + n;
    int peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
    return LoadedBatch(std::move(m), this);
}

void FingerprintStore::release(int n) const {
    resident_.fetch_sub(n);
}

InMemoryFingerprintStore::InMemoryFingerprintStore(FingerprintMatrix m) : matrix_(std::move(m)) {
    matrix_.validate();
}

Eigen::MatrixXd InMemoryFingerprintStore::load_columns(std::span<const int> indices) const {
    Eigen::MatrixXd out(matrix_.dim(), static_cast<Eigen::Index>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i) {
        out.col(static_cast<Eigen::Index>(i)) = matrix_.data.col(indices[i]);
    }
    return out;
}

std::vector<std::vector<int>> split_batches(int n, int p, std::uint64_t seed) {
    if (p < 2) throw DimensionMismatch("split_batches: batch size must be >= 2");
    const std::vector<int> perm = shuffled_indices(n, seed);
    std::vector<std::vector<int>> batches;
    for (int start = 0; start < n; start += p) {
        const int end = std::min(n, start + p);
        batches.emplace_back(perm.begin() + start, perm.begin() + end);
    }
    return batches;
}

WalkSplit random_walk_outliers(const SparseRepr& repr, const LsConfig& cfg) {
    const Eigen::MatrixXd& z = repr.coefficients;
    const auto n = static_cast<int>(z.rows());
    WalkSplit out;

    if (z.cwiseAbs().maxCoeff() <= 0.0) {
        for (int i = 0; i < n; ++i) out.outliers.push_back(i);  // no graph at all
        return out;
    }

    const Eigen::MatrixXd sym = (z.cwiseAbs() + z.cwiseAbs().transpose()) / 2.0;
    Eigen::MatrixXd trans_t(n, n);  // column i holds P(i, .)
    for (int i = 0; i < n; ++i) {
        const double row_sum = sym.row(i).sum();
        if (row_sum > 0.0) {
            trans_t.col(i) = sym.row(i).transpose() / row_sum;
        } else {
            trans_t.col(i).setConstant(1.0 / n);
        }
    }

    Eigen::VectorXd mass = Eigen::VectorXd::Constant(n, 1.0 / n);
    Eigen::VectorXd next(n);
    for (int step = 0; step < cfg.walk_steps; ++step) {
        next.noalias() = trans_t * mass;
        mass.swap(next);
    }

    const double mu = mass.mean();
    const double sigma = std::sqrt((mass.array() - mu).square().mean());
    if (sigma < 1e-12 || cfg.inlier_fraction >= 1.0) {
        for (int i = 0; i < n; ++i) out.inliers.push_back(i);
        return out;
    }
    const double threshold = mu + sigma * normal_quantile(1.0 - cfg.inlier_fraction);
    for (int i = 0; i < n; ++i) {
        (mass[i] >= threshold ? out.inliers : out.outliers).push_back(i);
    }
    return out;
}

Eigen::MatrixXd knn_sparsify(const Eigen::MatrixXd& z, int k) {
    if (k < 1) throw DimensionMismatch("knn_sparsify: k must be >= 1");
    const auto n = static_cast<int>(z.rows());
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, z.cols());
    std::vector<int> order(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        std::iota(order.begin(), order.end(), 0);
        const int keep = std::min(k, n);
        std::partial_sort(order.begin(), order.begin() + keep, order.end(), [&](int a, int b) {
            if (z(a, j) != z(b, j)) return z(a, j) > z(b, j);
            return a < b;  // ties toward lower row index
        });
        for (int r = 0; r < keep; ++r) out(order[static_cast<std::size_t>(r)], j) =
            z(order[static_cast<std::size_t>(r)], j);
    }
    return out;
}

DbscanResult dbscan_subclusters(const Eigen::MatrixXd& s, int k) {
    if (s.minCoeff() < 0.0) throw DimensionMismatch("dbscan_subclusters: negative similarities");
    const auto n = static_cast<int>(s.rows());
    DbscanResult out;

    double eps_sum = 0.0;
    std::int64_t eps_count = 0;
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
        for (Eigen::Index i = 0; i < s.rows(); ++i) {
            if (s(i, j) > 0.0) {
                eps_sum += s(i, j);
                ++eps_count;
            }
        }
    }
    if (eps_count == 0) {
        for (int i = 0; i < n; ++i) out.noise.push_back(i);
        return out;
    }
    const double eps = eps_sum / static_cast<double>(eps_count);

    std::vector<std::vector<int>> neighborhood(static_cast<std::size_t>(n));
    std::vector<bool> core(static_cast<std::size_t>(n), false);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (j != i && std::max(s(i, j), s(j, i)) >= eps) {
                neighborhood[static_cast<std::size_t>(i)].push_back(j);
            }
        }
        core[static_cast<std::size_t>(i)] =
            static_cast<int>(neighborhood[static_cast<std::size_t>(i)].size()) >= k;
    }

    constexpr int kUnvisited = -2;
    std::vector<int> label(static_cast<std::size_t>(n), kUnvisited);
    int next_cluster = 0;
    for (int seed_pt = 0; seed_pt < n; ++seed_pt) {
        if (label[static_cast<std::size_t>(seed_pt)] != kUnvisited ||
            !core[static_cast<std::size_t>(seed_pt)]) {
            continue;
        }
        // expand in index order; border points go to the first cluster
        // that reaches them
        const int cid = next_cluster++;
        label[static_cast<std::size_t>(seed_pt)] = cid;
        std::vector<int> frontier = neighborhood[static_cast<std::size_t>(seed_pt)];
        for (std::size_t f = 0; f < frontier.size(); ++f) {
            const int j = frontier[f];
            if (label[static_cast<std::size_t>(j)] != kUnvisited) continue;
            label[static_cast<std::size_t>(j)] = cid;
            if (core[static_cast<std::size_t>(j)]) {
                for (int nb : neighborhood[static_cast<std::size_t>(j)]) {
                    if (label[static_cast<std::size_t>(nb)] == kUnvisited) frontier.push_back(nb);
                }
            }
        }
    }

    out.clusters.resize(static_cast<std::size_t>(next_cluster));
    for (int i = 0; i < n; ++i) {
        const int l = label[static_cast<std::size_t>(i)];
        if (l >= 0) {
            out.clusters[static_cast<std::size_t>(l)].push_back(i);
        } else {
            out.noise.push_back(i);
        }
    }
    return out;
}

BatchPartition partition_batch(const Eigen::MatrixXd& x_batch, std::span<const int> global_ids,
                               const LsConfig& cfg) {
    if (static_cast<std::size_t>(x_batch.cols()) != global_ids.size()) {
        throw DimensionMismatch("partition_batch: id count != column count");
    }
    BatchPartition out;
    if (x_batch.cols() < 2) {
        out.outliers.assign(global_ids.begin(), global_ids.end());
        return out;
    }

    const SparseRepr repr = constrained_lasso(x_batch, cfg.admm);
    const WalkSplit walk = random_walk_outliers(repr, cfg);
    for (int local : walk.outliers) out.outliers.push_back(global_ids[static_cast<std::size_t>(local)]);
    if (walk.inliers.empty()) return out;

    const auto m = static_cast<int>(walk.inliers.size());
    Eigen::MatrixXd z_in(m, m);
    for (int a = 0; a < m; ++a) {
        for (int b = 0; b < m; ++b) {
            z_in(a, b) = repr.coefficients(walk.inliers[static_cast<std::size_t>(a)],
                                           walk.inliers[static_cast<std::size_t>(b)]);
        }
    }

    const DbscanResult db = dbscan_subclusters(knn_sparsify(z_in, cfg.knn), cfg.knn);
    for (int local : db.noise) {
        out.outliers.push_back(
            global_ids[static_cast<std::size_t>(walk.inliers[static_cast<std::size_t>(local)])]);
    }
    for (const auto& cluster : db.clusters) {
        std::vector<int> members;
        members.reserve(cluster.size());
        for (int local : cluster) {
            members.push_back(
                global_ids[static_cast<std::size_t>(walk.inliers[static_cast<std::size_t>(local)])]);
        }
        const auto take = std::min<std::size_t>(members.size(),
                                                static_cast<std::size_t>(cfg.card_cap));
        Eigen::MatrixXd bounded(x_batch.rows(), static_cast<Eigen::Index>(take));
        for (std::size_t i = 0; i < take; ++i) {
            const int local = walk.inliers[static_cast<std::size_t>(cluster[i])];
            bounded.col(static_cast<Eigen::Index>(i)) = x_batch.col(local);
        }
        out.subclusters.push_back(make_subcluster(std::move(members), bounded));
    }
    return out;
}

std::vector<int> recycle_draw_sizes(std::span<const int> pool_sizes, int p) {
    const long long total = std::accumulate(pool_sizes.begin(), pool_sizes.end(), 0LL);
    std::vector<int> sizes(pool_sizes.size(), 0);
    if (total == 0) return sizes;
    const long long target = std::min<long long>(p, total);

    std::vector<double> share(pool_sizes.size());
    long long assigned = 0;
    for (std::size_t i = 0; i < pool_sizes.size(); ++i) {
        share[i] = static_cast<double>(pool_sizes[i]) * static_cast<double>(target) /
                   static_cast<double>(total);
        sizes[i] = static_cast<int>(std::floor(share[i]));
        assigned += sizes[i];
    }
    // distribute the remainder by largest fractional part, lower index on ties
    std::vector<std::size_t> order(pool_sizes.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double fa = share[a] - std::floor(share[a]);
        const double fb = share[b] - std::floor(share[b]);
        if (fa != fb) return fa > fb;
        return a < b;
    });
    for (long long r = 0; r < target - assigned; ++r) {
        ++sizes[order[static_cast<std::size_t>(r) % order.size()]];
    }
    return sizes;
}

std::vector<SubCluster> recycle(const FingerprintStore& store,
                                std::vector<std::vector<int>>& pools, int rounds,
                                const LsConfig& cfg, std::uint64_t seed) {
    std::vector<SubCluster> found;
    for (int round = 0; round < rounds; ++round) {
        std::vector<int> pool_sizes;
        pool_sizes.reserve(pools.size());
        for (const auto& pool : pools) pool_sizes.push_back(static_cast<int>(pool.size()));
        const std::vector<int> draw = recycle_draw_sizes(pool_sizes, cfg.batch_size);
        if (std::accumulate(draw.begin(), draw.end(), 0) == 0) break;  // nothing left to recycle

        std::vector<int> batch_ids;
        for (std::size_t l = 0; l < pools.size(); ++l) {
            auto& pool = pools[l];
            const int take = draw[l];
            if (take == 0) continue;
            const std::vector<int> perm = shuffled_indices(
                static_cast<int>(pool.size()),
                mix_seed(seed, "recycle", (static_cast<std::uint64_t>(round) << 32) | l));
            std::vector<bool> taken(pool.size(), false);
            for (int t = 0; t < take; ++t) {
                batch_ids.push_back(pool[static_cast<std::size_t>(perm[static_cast<std::size_t>(t)])]);
                taken[static_cast<std::size_t>(perm[static_cast<std::size_t>(t)])] = true;
            }
            std::vector<int> rest;
            rest.reserve(pool.size() - static_cast<std::size_t>(take));
            for (std::size_t t = 0; t < pool.size(); ++t) {
                if (!taken[t]) rest.push_back(pool[t]);
            }
            pool = std::move(rest);
        }

        const LoadedBatch batch = store.load(batch_ids);
        BatchPartition part = partition_batch(batch.matrix(), batch_ids, cfg);
        for (auto& sc : part.subclusters) found.push_back(std::move(sc));
        pools.push_back(std::move(part.outliers));
    }
    return found;
}

double merge_threshold(const SubCluster& a, const SubCluster& b, const MergeRegressor& reg,
                       Eigen::Index d, double p_fa) {
    if (d < 1) throw DimensionMismatch("merge_threshold: d must be >= 1");
    const double floor_term = upper_tail_quantile(p_fa) / std::sqrt(static_cast<double>(d));
    const double regression = reg.evaluate(a.bounded_count(), b.bounded_count(), a.intra_corr,
                                           b.intra_corr);
    return std::max(floor_term, regression);
}

std::vector<SubCluster> merge_phase(std::vector<SubCluster> subclusters,
                                    const MergeRegressor& reg, Eigen::Index d, double p_fa,
                                    int card_cap) {
    reg.validate();
    while (subclusters.size() > 1) {
        double best_corr = -std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        std::size_t best_j = 0;
        for (std::size_t i = 0; i < subclusters.size(); ++i) {
            for (std::size_t j = i + 1; j < subclusters.size(); ++j) {
                const double corr =
                    normalized_correlation(subclusters[i].centroid, subclusters[j].centroid);
                if (corr <= merge_threshold(subclusters[i], subclusters[j], reg, d, p_fa)) {
                    continue;
                }
                if (corr > best_corr) {
                    best_corr = corr;
                    best_i = i;
                    best_j = j;
                }
            }
        }
        if (!std::isfinite(best_corr)) break;  // no pair qualifies

        // larger cluster's cached members take priority in the merged cache
        SubCluster& larger = subclusters[best_i].cardinality() >= subclusters[best_j].cardinality()
                                 ? subclusters[best_i]
                                 : subclusters[best_j];
        SubCluster& smaller = &larger == &subclusters[best_i] ? subclusters[best_j]
                                                              : subclusters[best_i];

        std::vector<int> members;
        members.reserve(larger.member_ids.size() + smaller.member_ids.size());
        const int lb = larger.bounded_count();
        const int sb = smaller.bounded_count();
        const int fill = std::min(sb, card_cap - std::min(lb, card_cap));
        members.insert(members.end(), larger.member_ids.begin(), larger.member_ids.begin() + lb);
        members.insert(members.end(), smaller.member_ids.begin(),
                       smaller.member_ids.begin() + fill);
        members.insert(members.end(), larger.member_ids.begin() + lb, larger.member_ids.end());
        members.insert(members.end(), smaller.member_ids.begin() + fill,
                       smaller.member_ids.end());

        Eigen::MatrixXd bounded(larger.bounded_members.rows(),
                                static_cast<Eigen::Index>(std::min(lb + fill, card_cap)));
        bounded.leftCols(lb) = larger.bounded_members;
        bounded.rightCols(fill) = smaller.bounded_members.leftCols(fill);

        SubCluster merged = make_subcluster(std::move(members), bounded);
        const std::size_t erase_hi = std::max(best_i, best_j);
        const std::size_t erase_lo = std::min(best_i, best_j);
        subclusters.erase(subclusters.begin() + static_cast<long>(erase_hi));
        subclusters.erase(subclusters.begin() + static_cast<long>(erase_lo));
        subclusters.push_back(std::move(merged));
    }
    return subclusters;
}

ClusteringResult attraction_phase(std::vector<SubCluster> clusters, const FingerprintStore& store,
                                  std::vector<int> outlier_ids, const LsConfig& cfg,
                                  std::vector<SubCluster>* final_clusters) {
    const int n = store.count();
    ClusteringResult out;
    out.labels.assign(static_cast<std::size_t>(n), kUnclustered);

    // final labels ordered by smallest member id for determinism
    std::sort(clusters.begin(), clusters.end(), [](const SubCluster& a, const SubCluster& b) {
        return *std::min_element(a.member_ids.begin(), a.member_ids.end()) <
               *std::min_element(b.member_ids.begin(), b.member_ids.end());
    });
    out.num_clusters = static_cast<int>(clusters.size());
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        for (int id : clusters[c].member_ids) {
            out.labels[static_cast<std::size_t>(id)] = static_cast<int>(c);
        }
    }
    if (clusters.empty() || outlier_ids.empty()) {
        if (final_clusters) *final_clusters = std::move(clusters);
        return out;
    }

    const double threshold =
        upper_tail_quantile(cfg.p_fa) / std::sqrt(static_cast<double>(store.dim()));
    const auto num_clusters = clusters.size();
    const auto num_out = outlier_ids.size();

    // stream correlations in chunks of at most batch_size columns
    Eigen::MatrixXd corr(num_out, num_clusters);
    auto refresh_column = [&](std::size_t cluster_idx, const std::vector<bool>& done) {
        for (std::size_t start = 0; start < num_out; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(num_out, start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<int> chunk;
            std::vector<std::size_t> rows;
            for (std::size_t i = start; i < stop; ++i) {
                if (!done[i]) {
                    chunk.push_back(outlier_ids[i]);
                    rows.push_back(i);
                }
            }
            if (chunk.empty()) continue;
            const LoadedBatch batch = store.load(chunk);
            for (std::size_t r = 0; r < rows.size(); ++r) {
                corr(static_cast<Eigen::Index>(rows[r]), static_cast<Eigen::Index>(cluster_idx)) =
                    normalized_correlation(batch.matrix().col(static_cast<Eigen::Index>(r)),
                                           clusters[cluster_idx].centroid);
            }
        }
    };

    std::vector<bool> done(num_out, false);
    for (std::size_t c = 0; c < num_clusters; ++c) refresh_column(c, done);

    std::size_t remaining = num_out;
    while (remaining > 0) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        std::size_t best_c = 0;
        for (std::size_t i = 0; i < num_out; ++i) {
            if (done[i]) continue;
            for (std::size_t c = 0; c < num_clusters; ++c) {
                if (corr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) > best) {
                    best = corr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
                    best_i = i;
                    best_c = c;
                }
            }
        }
        if (best <= threshold) break;  // everything left stays unclustered

        const int item = outlier_ids[best_i];
        out.labels[static_cast<std::size_t>(item)] = static_cast<int>(best_c);
        done[best_i] = true;
        --remaining;

        SubCluster& target = clusters[best_c];
        target.member_ids.push_back(item);
        if (target.cardinality() <= cfg.card_cap) {
            {
                const std::vector<int> single{item};
                const LoadedBatch one = store.load(single);
                Eigen::MatrixXd bounded(target.bounded_members.rows(),
                                        target.bounded_members.cols() + 1);
                bounded.leftCols(target.bounded_members.cols()) = target.bounded_members;
                bounded.rightCols(1) = one.matrix();
                target.bounded_members = std::move(bounded);
            }
            target.centroid = centroid(target.bounded_members);
            target.intra_corr = mean_pairwise_correlation(target.bounded_members);
            if (remaining > 0) refresh_column(best_c, done);
        }
    }
    if (final_clusters) *final_clusters = std::move(clusters);
    return out;
}

ClusteringResult ls_ssc(const FingerprintStore& store, const LsConfig& cfg, std::uint64_t seed,
                        const LsCheckpoint& ckpt, LsRunStats* stats) {
    cfg.validate();
    const int n = store.count();
    const std::uint64_t digest = config_digest(cfg, seed);

    if (n == 0) return ClusteringResult{};
    if (n == 1) {
        ClusteringResult out;
        out.labels = {0};
        out.num_clusters = 1;
        return out;
    }

    const std::vector<std::vector<int>> batches =
        split_batches(n, cfg.batch_size, mix_seed(seed, "split"));
    const int num_batches = static_cast<int>(batches.size());
    const int rounds = cfg.resolved_recycle_steps(num_batches);
    if (stats) {
        stats->num_batches = num_batches;
        stats->recycle_rounds = rounds;
    }

    PipelineState state;
    bool have_partition = false;
    bool have_recycle = false;
    bool have_merge = false;
    if (auto loaded = load_checkpoint(ckpt, "merge", digest, store, cfg.card_cap)) {
        state = std::move(*loaded);
        have_partition = have_recycle = have_merge = true;
    } else if (auto loaded2 = load_checkpoint(ckpt, "recycle", digest, store, cfg.card_cap)) {
        state = std::move(*loaded2);
        have_partition = have_recycle = true;
    } else if (auto loaded3 = load_checkpoint(ckpt, "partition", digest, store, cfg.card_cap)) {
        state = std::move(*loaded3);
        have_partition = true;
    }

    if (!have_partition) {
        PhaseTimer timer(stats, "partition");
        state.pools.resize(batches.size());
        std::vector<std::vector<SubCluster>> found(batches.size());

        // bounded parallelism: at most `workers` batches resident at once
        const int workers = std::min(cfg.workers, num_batches);
        std::atomic<int> cursor{0};
        auto work = [&]() {
            for (int b = cursor.fetch_add(1); b < num_batches; b = cursor.fetch_add(1)) {
                const auto& ids = batches[static_cast<std::size_t>(b)];
                const LoadedBatch batch = store.load(ids);
                BatchPartition part = partition_batch(batch.matrix(), ids, cfg);
                found[static_cast<std::size_t>(b)] = std::move(part.subclusters);
                state.pools[static_cast<std::size_t>(b)] = std::move(part.outliers);
            }
        };
        if (workers <= 1) {
            work();
        } else {
            std::vector<std::thread> threads;
            threads.reserve(static_cast<std::size_t>(workers));
            for (int w = 0; w < workers; ++w) threads.emplace_back(work);
            for (auto& t : threads) t.join();
        }
        for (auto& group : found) {
            for (auto& sc : group) state.subclusters.push_back(std::move(sc));
        }
        save_checkpoint(ckpt, "partition", digest, state);
    }

    if (!have_recycle) {
        PhaseTimer timer(stats, "recycle");
        std::vector<SubCluster> extra = recycle(store, state.pools, rounds, cfg, seed);
        for (auto& sc : extra) state.subclusters.push_back(std::move(sc));
        save_checkpoint(ckpt, "recycle", digest, state);
    }

    if (stats) stats->subclusters_before_merge = static_cast<int>(state.subclusters.size());

    if (!have_merge) {
        PhaseTimer timer(stats, "merge");
        state.subclusters = merge_phase(std::move(state.subclusters), MergeRegressor::paper_default(),
                                        store.dim(), cfg.p_fa, cfg.card_cap);
        save_checkpoint(ckpt, "merge", digest, state);
    }

    PhaseTimer timer(stats, "attraction");
    std::vector<int> leftovers;
    for (const auto& pool : state.pools) leftovers.insert(leftovers.end(), pool.begin(), pool.end());
    std::sort(leftovers.begin(), leftovers.end());
    std::vector<SubCluster> final_clusters;
    ClusteringResult result = attraction_phase(std::move(state.subclusters), store,
                                               std::move(leftovers), cfg, &final_clusters);
    if (stats) {
        stats->clusters.clear();
        for (const auto& sc : final_clusters) {
            stats->clusters.push_back({sc.cardinality(), sc.intra_corr});
        }
    }
    return result;
}

}  // namespace spn
