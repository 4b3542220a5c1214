#pragma once

#include <vector>

#include "zorro/baselines.hpp"
#include "zorro/gnn.hpp"
#include "zorro/graph.hpp"

namespace zorro {

// Descending ranking of features by summed mask value over all explanations;
// for hard masks this is frequency ranking. Ties break by ascending index.
std::vector<uint32_t> aggregate_feature_importance(
    const std::vector<std::vector<double>>& feature_masks);

struct RoarConfig {
    std::vector<size_t> k_values;
    size_t repeats = 20;
    TrainConfig train;       // per-repeat seeds are train.seed + i
    ModelKind arch = ModelKind::Gcn2;
    size_t hidden = 16;
    size_t threads = 1;
};

struct RoarResult {
    std::vector<size_t> k_values;
    std::vector<double> mean_accuracy_by_k;
    std::vector<std::vector<double>> per_repeat_accuracy;  // one row per k
    double baseline_accuracy = 0.0;  // full-feature accuracy, same seed schedule
    std::vector<uint32_t> feature_ranking;
    size_t repeats = 0;
};

// Remove-and-retrain: explain every training node with `explained_model`,
// aggregate the feature masks globally, then for each k retrain from scratch
// on only the top-k features and record mean test accuracy.
RoarResult roar_run(const Graph& graph, const FeatureMatrix& features,
                    const std::vector<int>& labels, const std::vector<NodeId>& train_mask,
                    const std::vector<NodeId>& test_mask, const Model& explained_model,
                    const ExplainerSpec& explainer, const RoarConfig& config);

}  // namespace zorro
