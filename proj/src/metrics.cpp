#include "spn/metrics.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <vector>

namespace spn {

namespace {

std::uint64_t choose2(std::uint64_t n) {
    return n * (n - 1) / 2;
}

void check_sizes(const ClusteringResult& pred, std::span<const int> truth) {
    if (pred.labels.size() != truth.size()) {
        throw DimensionMismatch("metrics: prediction and truth sizes differ");
    }
}

}  // namespace

PairCounts pair_counts(const ClusteringResult& pred, std::span<const int> truth) {
    check_sizes(pred, truth);
    const std::uint64_t n = truth.size();

    std::map<std::pair<int, int>, std::uint64_t> contingency;  // (pred, truth), clustered only
    std::map<int, std::uint64_t> pred_sizes;                   // clustered only
    std::map<int, std::uint64_t> truth_sizes_all;
    for (std::size_t i = 0; i < n; ++i) {
        ++truth_sizes_all[truth[i]];
        if (pred.labels[i] != kUnclustered) {
            ++contingency[{pred.labels[i], truth[i]}];
            ++pred_sizes[pred.labels[i]];
        }
    }

    PairCounts c;
    for (const auto& [key, count] : contingency) c.tp += choose2(count);
    std::uint64_t same_pred = 0;
    for (const auto& [label, count] : pred_sizes) same_pred += choose2(count);
    std::uint64_t same_truth = 0;
    for (const auto& [label, count] : truth_sizes_all) same_truth += choose2(count);

    c.fp = same_pred - c.tp;
    c.fn = same_truth - c.tp;
    c.tn = choose2(n) - c.tp - c.fp - c.fn;
    return c;
}

FScore f_measure(const PairCounts& c) {
    FScore s;
    const double tp = static_cast<double>(c.tp);
    if (c.tp + c.fp > 0) s.precision = tp / static_cast<double>(c.tp + c.fp);
    if (c.tp + c.fn > 0) s.recall = tp / static_cast<double>(c.tp + c.fn);
    if (s.precision + s.recall > 0.0) {
        s.f = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    }
    return s;
}

RandScores adjusted_rand(const PairCounts& c, const ClusteringResult& pred,
                         std::span<const int> truth) {
    check_sizes(pred, truth);
    RandScores out;
    const double denom = static_cast<double>(c.tp + c.tn + c.fp + c.fn);
    if (denom == 0.0) return out;
    out.ri = static_cast<double>(c.tp + c.tn) / denom;

    // permutation-model expectations over the clustered subset
    std::map<int, std::uint64_t> pred_sizes;
    std::map<int, std::uint64_t> truth_sizes;
    std::uint64_t m = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (pred.labels[i] == kUnclustered) continue;
        ++pred_sizes[pred.labels[i]];
        ++truth_sizes[truth[i]];
        ++m;
    }
    std::uint64_t sum_pred = 0;
    for (const auto& [label, count] : pred_sizes) sum_pred += choose2(count);
    std::uint64_t sum_truth = 0;
    for (const auto& [label, count] : truth_sizes) sum_truth += choose2(count);
    const double pairs_clustered = static_cast<double>(choose2(m));

    const double e_tp = pairs_clustered > 0.0 ? static_cast<double>(sum_pred) *
                                                    static_cast<double>(sum_truth) /
                                                    pairs_clustered
                                              : 0.0;
    const double e_tn = pairs_clustered - static_cast<double>(sum_pred) -
                        static_cast<double>(sum_truth) + e_tp;
    const double e_ri = (e_tp + e_tn) / denom;

    if (1.0 - e_ri < 1e-12) {
        out.ari = 0.0;
    } else {
        out.ari = (out.ri - e_ri) / (1.0 - e_ri);
    }
    return out;
}

double cluster_ratio(const ClusteringResult& pred, std::span<const int> truth) {
    check_sizes(pred, truth);
    const std::set<int> truth_classes(truth.begin(), truth.end());
    if (truth_classes.empty()) throw DimensionMismatch("cluster_ratio: empty ground truth");
    std::set<int> pred_clusters;
    for (int l : pred.labels) {
        if (l != kUnclustered) pred_clusters.insert(l);
    }
    return static_cast<double>(pred_clusters.size()) / static_cast<double>(truth_classes.size());
}

MetricsReport evaluate(const ClusteringResult& pred, std::span<const int> truth) {
    const PairCounts c = pair_counts(pred, truth);
    const FScore f = f_measure(c);
    const RandScores r = adjusted_rand(c, pred, truth);

    MetricsReport report;
    report.precision = f.precision;
    report.recall = f.recall;
    report.f_measure = f.f;
    report.ri = r.ri;
    report.ari = r.ari;
    report.lp_over_lg = cluster_ratio(pred, truth);
    report.unclustered = pred.unclustered_count();
    std::set<int> pred_clusters;
    for (int l : pred.labels) {
        if (l != kUnclustered) pred_clusters.insert(l);
    }
    report.num_pred_clusters = static_cast<int>(pred_clusters.size());
    report.num_truth_classes =
        static_cast<int>(std::set<int>(truth.begin(), truth.end()).size());
    return report;
}

}  // namespace spn
