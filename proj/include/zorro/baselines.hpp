#pragma once

#include <functional>
#include <optional>
#include <string>

#include "zorro/explain.hpp"
#include "zorro/perturb.hpp"

namespace zorro {

enum class ExplainerKind { Zorro, Empty, Random, Grad, GradInput };

std::string to_string(ExplainerKind kind);
ExplainerKind explainer_kind_from_string(const std::string& s);

struct ExplainerSpec {
    ExplainerKind kind = ExplainerKind::Zorro;
    ZorroConfig zorro;        // Zorro only
    size_t random_nodes = 5;  // Random only
    size_t random_features = 10;
    uint64_t seed = 0;  // Random; Zorro derives per-node seeds from zorro.seed
};

// Either a hard mask or a soft mask, depending on the explainer.
struct ExplainerOutput {
    std::optional<Explanation> explanation;  // local node indices
    std::optional<SoftMask> soft_mask;
    std::optional<ZorroResult> zorro;  // full trace when produced by Zorro
};

ExplainerOutput explain_baseline(const ExplainerSpec& spec, const Model& model,
                                 const ComputationalGraph& cg,
                                 const FeatureMatrix& local_features);

// Per-feature importance of an explainer output: indicator of the selected
// features for hard masks, the raw scores for soft masks.
std::vector<double> feature_mask_of(const ExplainerOutput& out, size_t num_features);

// Node scores: indicator of selected nodes / raw node scores.
std::vector<double> node_mask_of(const ExplainerOutput& out, size_t num_nodes);

}  // namespace zorro
