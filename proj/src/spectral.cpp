#include "spn/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>

#include "spn/stats.hpp"

namespace spn {

namespace {

constexpr double kDegreeFloor = 1e-12;

Eigen::MatrixXd normalized_laplacian(const Eigen::MatrixXd& g) {
    const Eigen::VectorXd inv_sqrt_deg =
        g.rowwise().sum().cwiseMax(kDegreeFloor).array().rsqrt();
    Eigen::MatrixXd lap = -(inv_sqrt_deg.asDiagonal() * g * inv_sqrt_deg.asDiagonal());
    lap.diagonal().array() += 1.0;
    return ((lap + lap.transpose()) / 2.0).eval();
}

// relabel to contiguous ids ordered by first appearance
int compact_labels(std::vector<int>& labels) {
    std::vector<int> remap;
    for (int& l : labels) {
        auto it = std::find(remap.begin(), remap.end(), l);
        if (it == remap.end()) {
            remap.push_back(l);
            l = static_cast<int>(remap.size()) - 1;
        } else {
            l = static_cast<int>(it - remap.begin());
        }
    }
    return static_cast<int>(remap.size());
}

}  // namespace

void AffinityGraph::validate() const {
    if (weights.rows() != weights.cols()) throw DimensionMismatch("AffinityGraph: not square");
    if ((weights - weights.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        throw DimensionMismatch("AffinityGraph: not symmetric");
    }
    if (weights.minCoeff() < 0.0) throw DimensionMismatch("AffinityGraph: negative weights");
    if (weights.diagonal().cwiseAbs().maxCoeff() > 0.0) {
        throw DimensionMismatch("AffinityGraph: nonzero diagonal");
    }
}

std::size_t ClusteringResult::unclustered_count() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), kUnclustered));
}

void ClusteringResult::validate() const {
    std::vector<bool> seen(static_cast<std::size_t>(std::max(num_clusters, 0)), false);
    for (int l : labels) {
        if (l == kUnclustered) continue;
        if (l < 0 || l >= num_clusters) throw DimensionMismatch("ClusteringResult: label range");
        seen[static_cast<std::size_t>(l)] = true;
    }
    if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
        throw DimensionMismatch("ClusteringResult: cluster ids not contiguous");
    }
}

AffinityGraph symmetrize(const SparseRepr& repr) {
    AffinityGraph g;
    g.weights = (repr.coefficients + repr.coefficients.transpose()) / 2.0;
    return g;
}

int estimate_num_clusters(const AffinityGraph& g, int kappa_max, bool* degenerate) {
    const auto n = static_cast<int>(g.size());
    if (degenerate) *degenerate = false;
    if (n < 2) throw DimensionMismatch("estimate_num_clusters: need at least two items");
    if (kappa_max < 1 || kappa_max > n - 1) {
        throw DimensionMismatch("estimate_num_clusters: kappa_max outside [1, n-1]");
    }
    if (g.weights.maxCoeff() <= 0.0) {
        if (degenerate) *degenerate = true;
        return n;  // every vertex isolated
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(normalized_laplacian(g.weights),
                                                      Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) {
        throw NumericalFailure("estimate_num_clusters: eigendecomposition failed");
    }
    const Eigen::VectorXd& ev = es.eigenvalues();  // ascending
    int best_k = 1;
    double best_gap = -std::numeric_limits<double>::infinity();
    for (int k = 1; k <= kappa_max; ++k) {
        const double gap = ev[k] - ev[k - 1];
        if (gap > best_gap) {
            best_gap = gap;
            best_k = k;
        }
    }
    return best_k;
}

ClusteringResult spectral_cluster(const AffinityGraph& g, int kappa, std::uint64_t seed) {
    const auto n = static_cast<int>(g.size());
    if (kappa < 1 || kappa > n) throw DimensionMismatch("spectral_cluster: kappa outside [1, n]");

    ClusteringResult out;
    if (kappa == 1) {
        out.labels.assign(static_cast<std::size_t>(n), 0);
        out.num_clusters = 1;
        return out;
    }
    out.labels = detail::kmeans_rows(detail::spectral_embedding(g, kappa), kappa, seed);
    out.num_clusters = compact_labels(out.labels);
    return out;
}

ClusteringResult ssc_nc(const FingerprintMatrix& x, const AdmmConfig& cfg, int kappa_max,
                        std::uint64_t seed) {
    const auto n = static_cast<int>(x.count());
    const AffinityGraph g = symmetrize(constrained_lasso(x, cfg));
    const int clamped_max = std::clamp(kappa_max, 1, n - 1);
    const int kappa = estimate_num_clusters(g, clamped_max);
    return spectral_cluster(g, std::min(kappa, n), seed);
}

namespace detail {

Eigen::MatrixXd spectral_embedding(const AffinityGraph& g, int kappa) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(normalized_laplacian(g.weights));
    if (es.info() != Eigen::Success) {
        throw NumericalFailure("spectral_embedding: eigendecomposition failed");
    }
    Eigen::MatrixXd emb = es.eigenvectors().leftCols(kappa);
    for (Eigen::Index i = 0; i < emb.rows(); ++i) {
        const double nrm = emb.row(i).norm();
        if (nrm > 0.0) emb.row(i) /= nrm;
    }
    return emb;
}

std::vector<int> kmeans_rows(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                             int restarts, int max_iters) {
    const auto n = static_cast<int>(points.rows());
    if (k > n) throw DimensionMismatch("kmeans_rows: more centers than points");

    auto sq_dist = [&](int i, const Eigen::RowVectorXd& c) {
        return (points.row(i) - c).squaredNorm();
    };

    std::vector<int> best_labels;
    double best_inertia = std::numeric_limits<double>::infinity();

    for (int restart = 0; restart < restarts; ++restart) {
        GaussianSampler rng(mix_seed(seed, "kmeans", static_cast<std::uint64_t>(restart)));

        // k-means++ seeding
        Eigen::MatrixXd centers(k, points.cols());
        centers.row(0) = points.row(static_cast<int>(rng.uniform() * n) % n);
        Eigen::VectorXd d2(n);
        for (int i = 0; i < n; ++i) d2[i] = sq_dist(i, centers.row(0));
        for (int c = 1; c < k; ++c) {
            const double total = d2.sum();
            int pick = 0;
            if (total > 0.0) {
                const double target = rng.uniform() * total;
                double acc = 0.0;
                for (int i = 0; i < n; ++i) {
                    acc += d2[i];
                    if (acc >= target) {
                        pick = i;
                        break;
                    }
                    pick = i;
                }
            } else {
                pick = static_cast<int>(rng.uniform() * n) % n;
            }
            centers.row(c) = points.row(pick);
            for (int i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(i, centers.row(c)));
        }

        std::vector<int> labels(static_cast<std::size_t>(n), 0);
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (int iter = 0; iter < max_iters; ++iter) {
            bool changed = false;
            for (int i = 0; i < n; ++i) {
                int arg = 0;
                double best = sq_dist(i, centers.row(0));
                for (int c = 1; c < k; ++c) {
                    const double dd = sq_dist(i, centers.row(c));
                    if (dd < best) {
                        best = dd;
                        arg = c;
                    }
                }
                if (labels[static_cast<std::size_t>(i)] != arg) {
                    labels[static_cast<std::size_t>(i)] = arg;
                    changed = true;
                }
            }
            centers.setZero();
            std::fill(counts.begin(), counts.end(), 0);
            for (int i = 0; i < n; ++i) {
                centers.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
                ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
            }
            for (int c = 0; c < k; ++c) {
                if (counts[static_cast<std::size_t>(c)] > 0) {
                    centers.row(c) /= counts[static_cast<std::size_t>(c)];
                } else {
                    // re-seed an empty center on the point farthest from its center
                    int far = 0;
                    double far_d = -1.0;
                    for (int i = 0; i < n; ++i) {
                        const double dd =
                            sq_dist(i, centers.row(labels[static_cast<std::size_t>(i)]));
                        if (dd > far_d) {
                            far_d = dd;
                            far = i;
                        }
                    }
                    centers.row(c) = points.row(far);
                    changed = true;
                }
            }
            if (!changed && iter > 0) break;
        }

        double inertia = 0.0;
        for (int i = 0; i < n; ++i) {
            inertia += sq_dist(i, centers.row(labels[static_cast<std::size_t>(i)]));
        }
        if (inertia < best_inertia) {
            best_inertia = inertia;
            best_labels = labels;
        }
    }
    return best_labels;
}

}  // namespace detail

}  // namespace spn
