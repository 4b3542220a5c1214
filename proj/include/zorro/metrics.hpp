#pragma once

#include <optional>
#include <vector>

#include "zorro/perturb.hpp"

namespace zorro {

// 1 iff the query prediction is preserved when every unselected entry is
// replaced by the fixed baseline value.
int validity(const Model& model, const ComputationalGraph& cg, const FeatureMatrix& local_features,
             const Explanation& explanation, double baseline_value = 0.0);

// Effective explanation size: entropy (nats) of the normalized mask.
// An all-zero mask has size 0; a hard mask of k elements gives ln k.
double sparsity_entropy(const std::vector<double>& mask);
double hard_mask_sparsity(size_t selected_count);

struct FidelityVariants {
    double plus_acc = 0.0;   // prediction flips when the explanation is removed
    double minus_acc = 0.0;  // 1 - validity
    double plus_prob = 0.0;  // h(X) - h(X \ S)
    double minus_prob = 0.0; // h(X) - h(S)
};

FidelityVariants fidelity_variants(const Model& model, const ComputationalGraph& cg,
                                   const FeatureMatrix& local_features,
                                   const Explanation& explanation, double baseline_value = 0.0);

struct GroundTruthScores {
    double precision = 0.0;
    double accuracy = 0.0;
};

GroundTruthScores ground_truth_scores(const std::vector<NodeId>& selected,
                                      const std::vector<NodeId>& ground_truth, size_t universe);

// Kendall tau-b; nullopt when either sequence is constant.
std::optional<double> kendall_tau(const std::vector<double>& x, const std::vector<double>& y);

// Fraction of selected nodes (query excluded) sharing the query's label.
// nullopt when no other node is selected.
std::optional<double> homophily(NodeId query, const std::vector<NodeId>& selected,
                                const std::vector<int>& labels);

// Soft-to-hard transforms. All return the kept indices, ascending.
std::vector<uint32_t> top_fraction(const std::vector<double>& scores, double fraction);
std::vector<uint32_t> top_k(const std::vector<double>& scores, size_t k);
std::vector<uint32_t> normalize_threshold(const std::vector<double>& scores, double threshold);

// Distributes each edge score equally onto its endpoints.
std::vector<double> edge_mask_to_node_mask(size_t num_nodes, const std::vector<Edge>& edges,
                                           const std::vector<double>& edge_scores);

struct MetricRecord {
    NodeId node = 0;
    int validity = 0;
    double node_sparsity = 0.0;
    double feature_sparsity = 0.0;
    double rdt_fidelity = 0.0;
    double stability = 0.0;
    std::optional<double> fidelity_plus_acc, fidelity_minus_acc;
    std::optional<double> fidelity_plus_prob, fidelity_minus_prob;
    std::optional<double> precision, accuracy;
};

}  // namespace zorro
