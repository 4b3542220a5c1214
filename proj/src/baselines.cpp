#include "zorro/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace zorro {

std::string to_string(ExplainerKind kind) {
    switch (kind) {
        case ExplainerKind::Zorro: return "zorro";
        case ExplainerKind::Empty: return "empty";
        case ExplainerKind::Random: return "random";
        case ExplainerKind::Grad: return "grad";
        case ExplainerKind::GradInput: return "grad-input";
    }
    return "unknown";
}

ExplainerKind explainer_kind_from_string(const std::string& s) {
    if (s == "zorro") return ExplainerKind::Zorro;
    if (s == "empty") return ExplainerKind::Empty;
    if (s == "random") return ExplainerKind::Random;
    if (s == "grad") return ExplainerKind::Grad;
    if (s == "grad-input") return ExplainerKind::GradInput;
    throw std::runtime_error("unknown explainer: " + s);
}

namespace {

std::vector<uint32_t> sample_without_replacement(size_t count, size_t bound, RngStream& rng) {
    if (count > bound) {
        throw std::invalid_argument("requested random mask larger than the candidate set");
    }
    std::vector<uint32_t> all(bound);
    for (size_t i = 0; i < bound; ++i) all[i] = static_cast<uint32_t>(i);
    for (size_t i = 0; i < count; ++i) {
        const size_t j = i + rng.index(bound - i);
        std::swap(all[i], all[j]);
    }
    all.resize(count);
    std::sort(all.begin(), all.end());
    return all;
}

SoftMask gradient_mask(const Model& model, const ComputationalGraph& cg, const Matrix& x,
                       bool multiply_input) {
    QueryForward qf(model, cg);
    const uint32_t predicted = qf.predict(x);
    Matrix g = gradient(model, cg, x, predicted);
    if (multiply_input) {
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] *= x.data[i];
    }
    SoftMask mask;
    mask.node_scores.assign(g.rows, 0.0);
    mask.feature_scores.assign(g.cols, 0.0);
    for (size_t i = 0; i < g.rows; ++i) {
        for (size_t j = 0; j < g.cols; ++j) {
            const double a = std::abs(g(i, j));
            mask.node_scores[i] += a;
            mask.feature_scores[j] += a;
        }
    }
    return mask;
}

}  // namespace

ExplainerOutput explain_baseline(const ExplainerSpec& spec, const Model& model,
                                 const ComputationalGraph& cg,
                                 const FeatureMatrix& local_features) {
    ExplainerOutput out;
    switch (spec.kind) {
        case ExplainerKind::Zorro: {
            ZorroConfig cfg = spec.zorro;
            cfg.seed = mix64(mix64(cfg.seed) ^ mix64(cg.query_node));
            ZorroResult res = zorro_explain(model, cg, local_features, cfg);
            out.explanation = res.explanation;
            out.zorro = std::move(res);
            break;
        }
        case ExplainerKind::Empty:
            out.explanation = Explanation{};
            break;
        case ExplainerKind::Random: {
            RngStream rng = RngStream(spec.seed).child(cg.query_node);
            Explanation e;
            e.nodes = sample_without_replacement(spec.random_nodes, cg.size(), rng);
            e.features = sample_without_replacement(spec.random_features, local_features.cols(), rng);
            out.explanation = std::move(e);
            break;
        }
        case ExplainerKind::Grad:
            out.soft_mask = gradient_mask(model, cg, local_features.values, false);
            break;
        case ExplainerKind::GradInput:
            out.soft_mask = gradient_mask(model, cg, local_features.values, true);
            break;
    }
    return out;
}

std::vector<double> feature_mask_of(const ExplainerOutput& out, size_t num_features) {
    std::vector<double> mask(num_features, 0.0);
    if (out.soft_mask) {
        for (size_t j = 0; j < out.soft_mask->feature_scores.size() && j < num_features; ++j) {
            mask[j] = out.soft_mask->feature_scores[j];
        }
    } else if (out.explanation) {
        for (uint32_t f : out.explanation->features) mask.at(f) = 1.0;
    }
    return mask;
}

std::vector<double> node_mask_of(const ExplainerOutput& out, size_t num_nodes) {
    std::vector<double> mask(num_nodes, 0.0);
    if (out.soft_mask) {
        for (size_t i = 0; i < out.soft_mask->node_scores.size() && i < num_nodes; ++i) {
            mask[i] = out.soft_mask->node_scores[i];
        }
    } else if (out.explanation) {
        for (uint32_t v : out.explanation->nodes) mask.at(v) = 1.0;
    }
    return mask;
}

}  // namespace zorro
