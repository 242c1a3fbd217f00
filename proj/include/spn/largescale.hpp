#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spn/fingerprint.hpp"
#include "spn/spectral.hpp"

namespace spn {

struct LsConfig {
    int batch_size = 4000;                  // p
    int knn = 5;                            // K
    std::optional<int> recycle_steps;       // R; unset -> floor(B/2)
    double p_fa = 0.001;
    double inlier_fraction = 0.8;
    int walk_steps = 1000;
    int card_cap = 50;
    int workers = 1;
    AdmmConfig admm;

    int resolved_recycle_steps(int num_batches) const;
    void validate() const;
};

// A discovered group. member_ids is kept in bounded-first order: the first
// min(cardinality, card_cap) entries are exactly the cached columns of
// bounded_members, which the centroid and intra_corr are computed from.
struct SubCluster {
    std::vector<int> member_ids;
    Eigen::MatrixXd bounded_members;  // d x min(cardinality, card_cap)
    Eigen::VectorXd centroid;
    double intra_corr = 0.0;          // mean pairwise correlation, 0 for singletons

    int cardinality() const { return static_cast<int>(member_ids.size()); }
    int bounded_count() const { return static_cast<int>(bounded_members.cols()); }
};

// Builds the cached state from the bounded member columns (first
// min(n, cap) of member_ids, in order).
SubCluster make_subcluster(std::vector<int> member_ids, const Eigen::MatrixXd& bounded_columns);

// Adaptive merge-threshold regressor R(n_A, n_B, rho_A, rho_B) = w.x + b
// with role-symmetric weights (w0 == w1 and w2 == w3 within 1e-8).
struct MergeRegressor {
    Eigen::Vector4d weights;
    double bias = 0.0;

    static MergeRegressor paper_default();

    // Evaluated in the symmetric form 0.5(w0+w1)(nA+nB) + 0.5(w2+w3)(rA+rB) + b
    // so the value is exactly invariant under role swap.
    double evaluate(double n_a, double n_b, double rho_a, double rho_b) const;
    void validate() const;
};

struct MergeSample {
    double n_a, n_b, rho_a, rho_b;
    double target;
};

// Least squares on the samples augmented with role-swapped duplicates.
// Throws SingularFit on a rank-deficient design; requires >= 5 samples.
MergeRegressor fit_merge_regressor(std::span<const MergeSample> samples);

// Random item source with residency instrumentation: every load is counted
// until its LoadedBatch token is destroyed, so tests can observe the peak
// number of concurrently resident raw fingerprints.
class FingerprintStore;

class LoadedBatch {
public:
    LoadedBatch(LoadedBatch&& other) noexcept;
    LoadedBatch& operator=(LoadedBatch&& other) noexcept;
    LoadedBatch(const LoadedBatch&) = delete;
    LoadedBatch& operator=(const LoadedBatch&) = delete;
    ~LoadedBatch();

    const Eigen::MatrixXd& matrix() const { return matrix_; }

private:
    friend class FingerprintStore;
    LoadedBatch(Eigen::MatrixXd m, const FingerprintStore* origin);
    Eigen::MatrixXd matrix_;
    const FingerprintStore* origin_ = nullptr;
};

class FingerprintStore {
public:
    virtual ~FingerprintStore() = default;

    virtual Eigen::Index dim() const = 0;
    virtual int count() const = 0;
    virtual const std::vector<std::string>& ids() const = 0;

    LoadedBatch load(std::span<const int> indices) const;

    int resident() const { return resident_.load(); }
    int peak_resident() const { return peak_.load(); }

protected:
    virtual Eigen::MatrixXd load_columns(std::span<const int> indices) const = 0;

private:
    friend class LoadedBatch;
    void release(int n) const;
    mutable std::atomic<int> resident_{0};
    mutable std::atomic<int> peak_{0};
};

class InMemoryFingerprintStore final : public FingerprintStore {
public:
    explicit InMemoryFingerprintStore(FingerprintMatrix m);

    Eigen::Index dim() const override { return matrix_.dim(); }
    int count() const override { return static_cast<int>(matrix_.count()); }
    const std::vector<std::string>& ids() const override { return matrix_.ids; }

protected:
    Eigen::MatrixXd load_columns(std::span<const int> indices) const override;

private:
    FingerprintMatrix matrix_;
};

// --- pipeline stages ------------------------------------------------------

// Seeded random split into ceil(n/p) disjoint batches of size <= p.
std::vector<std::vector<int>> split_batches(int n, int p, std::uint64_t seed);

struct WalkSplit {
    std::vector<int> inliers;   // local indices, ascending
    std::vector<int> outliers;  // local indices, ascending
};

// Random-walk stationary-mass outlier screen: rows of the symmetrized |Z|
// normalized to a transition matrix (zero rows -> uniform), walk_steps
// exact power iterations from uniform, normal fit over the state masses,
// inliers are the upper inlier_fraction of the fitted distribution.
// All-zero Z -> everything outlier; sigma < 1e-12 -> everything inlier.
WalkSplit random_walk_outliers(const SparseRepr& repr, const LsConfig& cfg);

// Keep the K largest entries per column (ties broken toward lower row
// index), zero the rest.
Eigen::MatrixXd knn_sparsify(const Eigen::MatrixXd& z, int k);

struct DbscanResult {
    std::vector<std::vector<int>> clusters;  // local indices per subcluster
    std::vector<int> noise;                  // local indices
};

// Similarity DBSCAN with MinPts = K and eps = mean of the non-zero entries
// of S; the neighborhood of i is {j != i : max(S_ij, S_ji) >= eps}.
// No non-zero entries -> all noise.
DbscanResult dbscan_subclusters(const Eigen::MatrixXd& s, int k);

struct BatchPartition {
    std::vector<SubCluster> subclusters;  // member_ids are global
    std::vector<int> outliers;            // global ids
};

// constrained_lasso -> random_walk_outliers -> knn_sparsify ->
// dbscan_subclusters. DBSCAN noise joins the walk outliers. Batches of
// fewer than two items are returned whole as outliers.
BatchPartition partition_batch(const Eigen::MatrixXd& x_batch, std::span<const int> global_ids,
                               const LsConfig& cfg);

// Largest-remainder proportional allocation of a batch of size
// min(p, sum(pool_sizes)) across pools; exposed for testing.
std::vector<int> recycle_draw_sizes(std::span<const int> pool_sizes, int p);

// One extra clustering pass per round over fingerprints drawn
// proportionally from the outlier pools; each round's leftovers form a new
// pool. Returns subclusters found across rounds; pools are updated in
// place (drawn-and-clustered items removed, residual outliers appended as
// new pools).
std::vector<SubCluster> recycle(const FingerprintStore& store,
                                std::vector<std::vector<int>>& pools, int rounds,
                                const LsConfig& cfg, std::uint64_t seed);

// max( Q^{-1}(p_fa)/sqrt(d), R(n_A, n_B, rho_A, rho_B) ) with the bounded
// cardinalities n = min(cardinality, card_cap).
double merge_threshold(const SubCluster& a, const SubCluster& b, const MergeRegressor& reg,
                       Eigen::Index d, double p_fa);

// Agglomeration: repeatedly merge the pair with the largest centroid
// correlation among pairs exceeding their threshold; stop when no pair
// qualifies. On merge the bounded cache keeps the larger cluster's cached
// members first, then fills from the smaller, up to card_cap.
std::vector<SubCluster> merge_phase(std::vector<SubCluster> subclusters,
                                    const MergeRegressor& reg, Eigen::Index d, double p_fa,
                                    int card_cap);

// Assign leftovers to the cluster of maximum centroid correlation while it
// exceeds Q^{-1}(p_fa)/sqrt(d); centroids update only while cluster
// cardinality stays within card_cap. Remaining items are Unclustered.
// Outlier columns are streamed from the store in chunks of <= batch_size
// items. When final_clusters is given it receives the post-attraction
// cluster state in label order.
ClusteringResult attraction_phase(std::vector<SubCluster> clusters, const FingerprintStore& store,
                                  std::vector<int> outlier_ids, const LsConfig& cfg,
                                  std::vector<SubCluster>* final_clusters = nullptr);

struct LsCheckpoint {
    std::filesystem::path dir;  // empty -> checkpointing off
    bool resume = false;

    bool enabled() const { return !dir.empty(); }
};

struct ClusterSummary {
    int cardinality = 0;
    double intra_corr = 0.0;
};

struct LsRunStats {
    int num_batches = 0;
    int recycle_rounds = 0;
    int subclusters_before_merge = 0;
    std::map<std::string, double> phase_seconds;
    std::vector<ClusterSummary> clusters;  // final clusters, in label order
};

// Full divide-and-conquer run: split -> per-batch partition -> recycle ->
// merge -> attract. Only one batch per worker is resident during the
// partition stage. Deterministic given (config, seed). With checkpointing
// enabled, per-phase state is persisted and a crashed run can resume.
ClusteringResult ls_ssc(const FingerprintStore& store, const LsConfig& cfg, std::uint64_t seed,
                        const LsCheckpoint& ckpt = {}, LsRunStats* stats = nullptr);

}  // namespace spn
