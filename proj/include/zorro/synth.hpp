#pragma once

#include <map>
#include <optional>
#include <vector>

#include "zorro/baselines.hpp"
#include "zorro/gnn.hpp"
#include "zorro/graph.hpp"

namespace zorro {

// Two Barabasi-Albert communities with five-node house motifs attached to
// random base nodes. The houses are the explanation ground truth.
struct SynthConfig {
    size_t base_nodes = 300;  // per community
    size_t attachment = 5;    // BA preferential-attachment edges per new node
    size_t houses = 80;       // per community
    double cross_edge_fraction = 0.01;  // cross-community edges as fraction of |V|
    double edge_perturb_rate = 0.0001;  // fraction of each community's edges rewired
    double train_fraction = 0.8;
    uint64_t seed = 0;
};

struct SynthDataset {
    Graph graph;
    FeatureMatrix features;
    std::vector<int> labels;  // 8 classes: {base, house bottom, house middle, house top} x 2
    std::map<NodeId, std::vector<NodeId>> ground_truth;  // house node -> its 5-node house
    std::vector<NodeId> train_mask, test_mask;
    size_t community_size = 0;  // nodes 0..community_size-1 are community 0
};

SynthDataset generate(const SynthConfig& config);

// Ground-truth evaluation over model snapshots: explain house nodes, binarize
// soft masks to the five highest-scoring nodes, score precision/accuracy, and
// correlate mean precision with test accuracy over the epochs.
struct EpochGroundTruthRow {
    size_t epoch = 0;
    double test_accuracy = 0.0;
    double mean_precision = 0.0;
    double mean_accuracy = 0.0;
};

struct GroundTruthEvalResult {
    std::vector<EpochGroundTruthRow> rows;
    std::optional<double> faithfulness_tau;
};

struct GroundTruthEvalConfig {
    ExplainerSpec explainer;
    size_t max_nodes = 0;  // 0 = all house nodes
    uint64_t node_selection_seed = 0;
    size_t top_k_nodes = 5;  // binarization size for soft masks
    size_t threads = 1;
};

GroundTruthEvalResult run_ground_truth_eval(const SynthDataset& dataset,
                                            const std::vector<std::pair<size_t, Model>>& snapshots,
                                            const GroundTruthEvalConfig& config);

// House nodes to explain, optionally capped by a seeded uniform draw.
std::vector<NodeId> house_nodes(const SynthDataset& dataset, size_t cap, uint64_t seed);

}  // namespace zorro
