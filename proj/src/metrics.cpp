#include "zorro/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace zorro {

namespace {

// Replaces entries by the baseline; `keep_selected` keeps the explanation and
// blanks the rest, the inverse keeps the rest and blanks the explanation.
Matrix baseline_substitute(const FeatureMatrix& x, const Explanation& e, double baseline,
                           bool keep_selected) {
    std::vector<uint8_t> rsel(x.rows(), 0), csel(x.cols(), 0);
    for (uint32_t i : e.nodes) rsel.at(i) = 1;
    for (uint32_t j : e.features) csel.at(j) = 1;
    Matrix out(x.rows(), x.cols());
    for (size_t i = 0; i < x.rows(); ++i) {
        for (size_t j = 0; j < x.cols(); ++j) {
            const bool sel = rsel[i] && csel[j];
            out(i, j) = (sel == keep_selected) ? x.values(i, j) : baseline;
        }
    }
    return out;
}

}  // namespace

int validity(const Model& model, const ComputationalGraph& cg, const FeatureMatrix& local_features,
             const Explanation& explanation, double baseline_value) {
    QueryForward qf(model, cg);
    const uint32_t ref = qf.predict(local_features.values);
    const Matrix masked = baseline_substitute(local_features, explanation, baseline_value, true);
    return qf.predict(masked) == ref ? 1 : 0;
}

double sparsity_entropy(const std::vector<double>& mask) {
    double total = 0.0;
    for (double m : mask) {
        if (m < 0.0) throw std::invalid_argument("mask scores must be non-negative");
        total += m;
    }
    if (total == 0.0) return 0.0;
    double h = 0.0;
    for (double m : mask) {
        if (m == 0.0) continue;
        const double p = m / total;
        h -= p * std::log(p);
    }
    return h;
}

double hard_mask_sparsity(size_t selected_count) {
    return selected_count == 0 ? 0.0 : std::log(static_cast<double>(selected_count));
}

FidelityVariants fidelity_variants(const Model& model, const ComputationalGraph& cg,
                                   const FeatureMatrix& local_features,
                                   const Explanation& explanation, double baseline_value) {
    QueryForward qf(model, cg);
    std::vector<double> probs;
    const uint32_t ref = qf.predict(local_features.values, &probs);
    const double h_x = probs[ref];

    const Matrix kept = baseline_substitute(local_features, explanation, baseline_value, true);
    const uint32_t cls_kept = qf.predict(kept, &probs);
    const double h_kept = probs[ref];

    const Matrix removed = baseline_substitute(local_features, explanation, baseline_value, false);
    const uint32_t cls_removed = qf.predict(removed, &probs);
    const double h_removed = probs[ref];

    FidelityVariants out;
    out.plus_acc = cls_removed == ref ? 0.0 : 1.0;
    out.minus_acc = cls_kept == ref ? 0.0 : 1.0;
    out.plus_prob = h_x - h_removed;
    out.minus_prob = h_x - h_kept;
    return out;
}

GroundTruthScores ground_truth_scores(const std::vector<NodeId>& selected,
                                      const std::vector<NodeId>& ground_truth, size_t universe) {
    std::vector<NodeId> sel = selected, gt = ground_truth;
    std::sort(sel.begin(), sel.end());
    std::sort(gt.begin(), gt.end());
    std::vector<NodeId> hit;
    std::set_intersection(sel.begin(), sel.end(), gt.begin(), gt.end(), std::back_inserter(hit));

    GroundTruthScores out;
    out.precision = sel.empty() ? 0.0 : static_cast<double>(hit.size()) / sel.size();
    const size_t true_negatives = universe - sel.size() - gt.size() + hit.size();
    out.accuracy = universe == 0
                       ? 0.0
                       : static_cast<double>(hit.size() + true_negatives) / universe;
    return out;
}

std::optional<double> kendall_tau(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("sequences must have equal length");
    if (x.size() < 2) throw std::invalid_argument("need at least two observations");
    long long concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
    const size_t n = x.size();
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            const double dx = x[i] - x[j];
            const double dy = y[i] - y[j];
            if (dx == 0.0) ++ties_x;
            if (dy == 0.0) ++ties_y;
            if (dx == 0.0 || dy == 0.0) continue;
            if (dx * dy > 0.0) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    }
    const double n0 = static_cast<double>(n) * (n - 1) / 2.0;
    const double denom = std::sqrt((n0 - ties_x) * (n0 - ties_y));
    if (denom == 0.0) return std::nullopt;
    return (concordant - discordant) / denom;
}

std::optional<double> homophily(NodeId query, const std::vector<NodeId>& selected,
                                const std::vector<int>& labels) {
    size_t considered = 0, same = 0;
    for (NodeId v : selected) {
        if (v == query) continue;
        ++considered;
        if (labels.at(v) == labels.at(query)) ++same;
    }
    if (considered == 0) return std::nullopt;
    return static_cast<double>(same) / considered;
}

std::vector<uint32_t> top_k(const std::vector<double>& scores, size_t k) {
    std::vector<uint32_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    order.resize(std::min(k, order.size()));
    std::sort(order.begin(), order.end());
    return order;
}

std::vector<uint32_t> top_fraction(const std::vector<double>& scores, double fraction) {
    if (fraction <= 0.0 || fraction > 1.0) throw std::invalid_argument("fraction must be in (0, 1]");
    return top_k(scores, static_cast<size_t>(std::ceil(fraction * scores.size())));
}

std::vector<uint32_t> normalize_threshold(const std::vector<double>& scores, double threshold) {
    if (threshold < 0.0) throw std::invalid_argument("threshold must be non-negative");
    if (scores.empty()) return {};
    const auto [mn_it, mx_it] = std::minmax_element(scores.begin(), scores.end());
    const double mn = *mn_it, mx = *mx_it;
    std::vector<uint32_t> kept;
    if (mn == mx) {
        // degenerate min-max normalization: keep everything
        kept.resize(scores.size());
        std::iota(kept.begin(), kept.end(), 0);
        return kept;
    }
    for (uint32_t i = 0; i < scores.size(); ++i) {
        if ((scores[i] - mn) / (mx - mn) > threshold) kept.push_back(i);
    }
    return kept;
}

std::vector<double> edge_mask_to_node_mask(size_t num_nodes, const std::vector<Edge>& edges,
                                           const std::vector<double>& edge_scores) {
    if (edges.size() != edge_scores.size()) {
        throw std::invalid_argument("need one score per edge");
    }
    std::vector<double> node_scores(num_nodes, 0.0);
    for (size_t e = 0; e < edges.size(); ++e) {
        if (edge_scores[e] < 0.0) throw std::invalid_argument("edge scores must be non-negative");
        node_scores.at(edges[e].first) += edge_scores[e] / 2.0;
        node_scores.at(edges[e].second) += edge_scores[e] / 2.0;
    }
    return node_scores;
}

}  // namespace zorro
