#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "spn/admm.hpp"

namespace spn {

inline constexpr int kUnclustered = -1;

// Symmetric, non-negative, zero-diagonal weight matrix.
struct AffinityGraph {
    Eigen::MatrixXd weights;

    Eigen::Index size() const { return weights.rows(); }
    void validate() const;
};

struct ClusteringResult {
    std::vector<int> labels;  // cluster id in [0, num_clusters) or kUnclustered
    int num_clusters = 0;

    std::size_t unclustered_count() const;
    void validate() const;
};

// G = (Z + Z^T) / 2
AffinityGraph symmetrize(const SparseRepr& repr);

// Eigengap heuristic on the symmetric normalized Laplacian
// L = I - D^{-1/2} G D^{-1/2} (degrees floored at 1e-12): the k in
// [1, kappa_max] maximizing lambda_{k+1} - lambda_k, smallest k on ties.
// An all-zero graph returns n and sets *degenerate when provided.
int estimate_num_clusters(const AffinityGraph& g, int kappa_max, bool* degenerate = nullptr);

// Ng-Jordan-Weiss style: rows of the first kappa Laplacian eigenvectors,
// row-normalized (zero rows kept zero), clustered by k-means
// (k-means++ seeding, 20 restarts, 300 iterations, deterministic in seed).
ClusteringResult spectral_cluster(const AffinityGraph& g, int kappa, std::uint64_t seed);

// Single-solve pipeline: constrained_lasso -> symmetrize ->
// estimate_num_clusters -> spectral_cluster. kappa_max is clamped to
// [1, n-1]. Never leaves items unclustered.
ClusteringResult ssc_nc(const FingerprintMatrix& x, const AdmmConfig& cfg, int kappa_max,
                        std::uint64_t seed);

namespace detail {

// Row-normalized spectral embedding (n x kappa); exposed for testing.
Eigen::MatrixXd spectral_embedding(const AffinityGraph& g, int kappa);

// Deterministic k-means on row vectors; returns labels in [0, k).
std::vector<int> kmeans_rows(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                             int restarts = 20, int max_iters = 300);

}  // namespace detail

}  // namespace spn
