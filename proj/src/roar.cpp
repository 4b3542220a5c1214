#include "zorro/roar.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "zorro/parallel.hpp"

namespace zorro {

std::vector<uint32_t> aggregate_feature_importance(
    const std::vector<std::vector<double>>& feature_masks) {
    if (feature_masks.empty()) throw std::invalid_argument("need at least one explanation");
    const size_t d = feature_masks.front().size();
    std::vector<double> sum(d, 0.0);
    for (const auto& mask : feature_masks) {
        if (mask.size() != d) throw std::invalid_argument("feature masks differ in length");
        for (size_t j = 0; j < d; ++j) sum[j] += mask[j];
    }
    std::vector<uint32_t> ranking(d);
    std::iota(ranking.begin(), ranking.end(), 0);
    std::stable_sort(ranking.begin(), ranking.end(), [&](uint32_t a, uint32_t b) {
        if (sum[a] != sum[b]) return sum[a] > sum[b];
        return a < b;
    });
    return ranking;
}

namespace {

Model fresh_model(const RoarConfig& config, size_t in_dim, size_t num_classes, uint64_t seed) {
    switch (config.arch) {
        case ModelKind::Gcn2:
            return make_gcn2(in_dim, config.hidden, num_classes, RngStream(seed));
        case ModelKind::Gcn3Stack:
            return make_gcn3_stack(in_dim, config.hidden, num_classes, RngStream(seed));
        case ModelKind::RuleSum:
            break;
    }
    throw std::invalid_argument("remove-and-retrain needs a trainable architecture");
}

std::vector<double> retrain_accuracies(const Graph& graph, const FeatureMatrix& features,
                                       const std::vector<int>& labels,
                                       const std::vector<NodeId>& train_mask,
                                       const std::vector<NodeId>& test_mask, size_t num_classes,
                                       const RoarConfig& config) {
    std::vector<double> acc(config.repeats, 0.0);
    parallel_chunks(config.threads, config.repeats, [&](size_t, size_t b, size_t e) {
        for (size_t r = b; r < e; ++r) {
            TrainConfig tc = config.train;
            tc.seed = config.train.seed + r;
            tc.snapshot_epochs.clear();
            Model init = fresh_model(config, features.cols(), num_classes, tc.seed);
            TrainResult trained = train_gcn(std::move(init), graph, features, labels, train_mask, tc);
            acc[r] = evaluate_accuracy(trained.model, graph, features, labels, test_mask);
        }
    });
    return acc;
}

}  // namespace

RoarResult roar_run(const Graph& graph, const FeatureMatrix& features,
                    const std::vector<int>& labels, const std::vector<NodeId>& train_mask,
                    const std::vector<NodeId>& test_mask, const Model& explained_model,
                    const ExplainerSpec& explainer, const RoarConfig& config) {
    const size_t d = features.cols();
    for (size_t k : config.k_values) {
        if (k > d) throw std::invalid_argument("k exceeds the feature dimension");
    }
    const size_t num_classes =
        1 + static_cast<size_t>(*std::max_element(labels.begin(), labels.end()));

    // feature selection precedes retraining and is identical across repeats
    std::vector<std::vector<double>> masks(train_mask.size());
    parallel_chunks(config.threads, train_mask.size(), [&](size_t, size_t b, size_t e) {
        for (size_t i = b; i < e; ++i) {
            const auto cg = computational_graph(graph, train_mask[i], explained_model.hops);
            const auto local = restrict_rows(features, cg);
            const auto out = explain_baseline(explainer, explained_model, cg, local);
            masks[i] = feature_mask_of(out, d);
        }
    });

    RoarResult result;
    result.feature_ranking = aggregate_feature_importance(masks);
    result.k_values = config.k_values;
    result.repeats = config.repeats;

    const auto baseline = retrain_accuracies(graph, features, labels, train_mask, test_mask,
                                             num_classes, config);
    result.baseline_accuracy =
        std::accumulate(baseline.begin(), baseline.end(), 0.0) / baseline.size();

    for (size_t k : config.k_values) {
        Matrix reduced = features.values;
        std::vector<uint8_t> keep(d, 0);
        for (size_t j = 0; j < k; ++j) keep[result.feature_ranking[j]] = 1;
        for (size_t i = 0; i < reduced.rows; ++i) {
            for (size_t j = 0; j < d; ++j) {
                if (!keep[j]) reduced(i, j) = 0.0;
            }
        }
        const FeatureMatrix reduced_features = make_features(std::move(reduced));
        const auto acc = retrain_accuracies(graph, reduced_features, labels, train_mask, test_mask,
                                            num_classes, config);
        result.per_repeat_accuracy.push_back(acc);
        result.mean_accuracy_by_k.push_back(std::accumulate(acc.begin(), acc.end(), 0.0) /
                                            acc.size());
    }
    return result;
}

}  // namespace zorro
