#pragma once

#include <cstdint>
#include <span>

#include "spn/spectral.hpp"

namespace spn {

// Pair classification with the outlier conventions: tp/fp count only pairs
// with both items clustered; an Unclustered item is separated from
// everything, so its same-truth pairs land in fn and its different-truth
// pairs (including Unclustered-Unclustered ones) in tn.
struct PairCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;
};

PairCounts pair_counts(const ClusteringResult& pred, std::span<const int> truth);

struct FScore {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
};

// P = tp/(tp+fp), R = tp/(tp+fn), F = 2PR/(P+R); 0/0 -> 0.
FScore f_measure(const PairCounts& c);

struct RandScores {
    double ri = 0.0;
    double ari = 0.0;
};

// RI = (tp+tn)/(tp+tn+fp+fn); E[RI] from permutation-model expectations of
// tp and tn over the clustered subset; ARI = (RI-E)/(1-E), 0 when the
// denominator degenerates.
RandScores adjusted_rand(const PairCounts& c, const ClusteringResult& pred,
                         std::span<const int> truth);

// Predicted over ground-truth cluster count; may exceed 1.
double cluster_ratio(const ClusteringResult& pred, std::span<const int> truth);

struct MetricsReport {
    double precision = 0.0;
    double recall = 0.0;
    double f_measure = 0.0;
    double ri = 0.0;
    double ari = 0.0;
    double lp_over_lg = 0.0;
    std::uint64_t unclustered = 0;
    int num_pred_clusters = 0;
    int num_truth_classes = 0;
};

MetricsReport evaluate(const ClusteringResult& pred, std::span<const int> truth);

}  // namespace spn
