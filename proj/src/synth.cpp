#include "zorro/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "zorro/metrics.hpp"
#include "zorro/parallel.hpp"

namespace zorro {

namespace {

// Preferential attachment: each new node connects to `m` distinct existing
// nodes chosen proportionally to degree.
void build_ba_community(Graph& g, NodeId offset, size_t n, size_t m, RngStream& rng) {
    std::vector<NodeId> repeated;
    for (size_t k = m; k < n; ++k) {
        std::vector<NodeId> targets;
        if (repeated.empty()) {
            for (size_t i = 0; i < m; ++i) targets.push_back(offset + static_cast<NodeId>(i));
        } else {
            while (targets.size() < m) {
                NodeId cand = repeated[rng.index(repeated.size())];
                if (std::find(targets.begin(), targets.end(), cand) == targets.end()) {
                    targets.push_back(cand);
                }
            }
        }
        const NodeId node = offset + static_cast<NodeId>(k);
        for (NodeId t : targets) {
            g.add_edge(node, t);
            repeated.push_back(t);
            repeated.push_back(node);
        }
    }
}

void rewire_edges(Graph& g, NodeId lo, NodeId hi, double rate, RngStream& rng) {
    std::vector<Edge> community_edges;
    for (auto [u, v] : g.edges()) {
        if (u >= lo && u < hi && v >= lo && v < hi) community_edges.push_back({u, v});
    }
    const size_t count = static_cast<size_t>(std::llround(rate * community_edges.size()));
    for (size_t i = 0; i < count && !community_edges.empty(); ++i) {
        const size_t pick = rng.index(community_edges.size());
        const Edge victim = community_edges[pick];
        community_edges.erase(community_edges.begin() + pick);
        g.remove_edge(victim.first, victim.second);
        for (int attempt = 0; attempt < 1000; ++attempt) {
            const NodeId u = lo + static_cast<NodeId>(rng.index(hi - lo));
            const NodeId v = lo + static_cast<NodeId>(rng.index(hi - lo));
            if (u != v && !g.has_edge(u, v)) {
                g.add_edge(u, v);
                break;
            }
        }
    }
}

}  // namespace

SynthDataset generate(const SynthConfig& config) {
    if (config.attachment >= config.base_nodes) {
        throw std::invalid_argument("attachment count must be smaller than the BA base size");
    }
    if (config.train_fraction <= 0.0 || config.train_fraction > 1.0) {
        throw std::invalid_argument("train fraction must be in (0, 1]");
    }
    if (config.edge_perturb_rate < 0.0 || config.edge_perturb_rate > 1.0) {
        throw std::invalid_argument("edge perturbation rate must be in [0, 1]");
    }

    const size_t per_community = config.base_nodes + 5 * config.houses;
    const size_t total = 2 * per_community;
    RngStream root(config.seed);

    SynthDataset ds;
    ds.community_size = per_community;
    ds.graph = Graph(total);

    for (int c = 0; c < 2; ++c) {
        const NodeId offset = static_cast<NodeId>(c * per_community);
        RngStream rng = root.child(c == 0 ? "community-0" : "community-1");
        build_ba_community(ds.graph, offset, config.base_nodes, config.attachment, rng);

        for (size_t h = 0; h < config.houses; ++h) {
            const NodeId base = offset + static_cast<NodeId>(config.base_nodes + 5 * h);
            const NodeId b1 = base, b2 = base + 1, m1 = base + 2, m2 = base + 3, top = base + 4;
            ds.graph.add_edge(b1, b2);
            ds.graph.add_edge(b1, m1);
            ds.graph.add_edge(b2, m2);
            ds.graph.add_edge(m1, m2);
            ds.graph.add_edge(m1, top);
            ds.graph.add_edge(m2, top);
            const NodeId anchor = offset + static_cast<NodeId>(rng.index(config.base_nodes));
            ds.graph.add_edge(b1, anchor);
            for (NodeId v : {b1, b2, m1, m2, top}) {
                ds.ground_truth[v] = {b1, b2, m1, m2, top};
            }
        }
        rewire_edges(ds.graph, offset, offset + static_cast<NodeId>(per_community),
                     config.edge_perturb_rate, rng);
    }

    // cross-community bridges so the two communities form one graph
    {
        RngStream rng = root.child("bridges");
        const size_t count =
            static_cast<size_t>(std::llround(config.cross_edge_fraction * static_cast<double>(total)));
        for (size_t i = 0; i < count; ++i) {
            for (int attempt = 0; attempt < 1000; ++attempt) {
                const NodeId u = static_cast<NodeId>(rng.index(per_community));
                const NodeId v = static_cast<NodeId>(per_community + rng.index(per_community));
                if (!ds.graph.has_edge(u, v)) {
                    ds.graph.add_edge(u, v);
                    break;
                }
            }
        }
    }

    // labels: per community {BA base, house bottom, house middle, house top}
    ds.labels.assign(total, 0);
    for (int c = 0; c < 2; ++c) {
        const size_t offset = c * per_community;
        for (size_t i = 0; i < config.base_nodes; ++i) ds.labels[offset + i] = 4 * c;
        for (size_t h = 0; h < config.houses; ++h) {
            const size_t base = offset + config.base_nodes + 5 * h;
            ds.labels[base] = 4 * c + 1;
            ds.labels[base + 1] = 4 * c + 1;
            ds.labels[base + 2] = 4 * c + 2;
            ds.labels[base + 3] = 4 * c + 2;
            ds.labels[base + 4] = 4 * c + 3;
        }
    }

    // features: eight N(0,1) columns, two community columns N(-1,.5) / N(1,.5)
    {
        RngStream rng = root.child("features");
        Matrix x(total, 10);
        for (size_t i = 0; i < total; ++i) {
            const double mu = i < per_community ? -1.0 : 1.0;
            for (size_t j = 0; j < 8; ++j) x(i, j) = rng.normal(0.0, 1.0);
            x(i, 8) = rng.normal(mu, 0.5);
            x(i, 9) = rng.normal(mu, 0.5);
        }
        // per-community column normalization to unit root-mean-square; no
        // centering, which would erase the community signal the model has to
        // learn
        for (int c = 0; c < 2; ++c) {
            const size_t lo = c * per_community, hi = lo + per_community;
            for (size_t j = 0; j < 10; ++j) {
                double sq = 0.0;
                for (size_t i = lo; i < hi; ++i) sq += x(i, j) * x(i, j);
                const double rms = std::sqrt(sq / static_cast<double>(per_community));
                if (rms > 0.0) {
                    for (size_t i = lo; i < hi; ++i) x(i, j) /= rms;
                }
            }
        }
        ds.features = make_features(std::move(x));
    }

    // 80/20 train/test split
    {
        RngStream rng = root.child("split");
        std::vector<NodeId> order(total);
        std::iota(order.begin(), order.end(), 0);
        for (size_t i = 0; i + 1 < order.size(); ++i) {
            const size_t j = i + rng.index(order.size() - i);
            std::swap(order[i], order[j]);
        }
        const size_t n_train = static_cast<size_t>(std::llround(config.train_fraction * total));
        ds.train_mask.assign(order.begin(), order.begin() + n_train);
        ds.test_mask.assign(order.begin() + n_train, order.end());
        std::sort(ds.train_mask.begin(), ds.train_mask.end());
        std::sort(ds.test_mask.begin(), ds.test_mask.end());
    }
    return ds;
}

std::vector<NodeId> house_nodes(const SynthDataset& dataset, size_t cap, uint64_t seed) {
    std::vector<NodeId> nodes;
    nodes.reserve(dataset.ground_truth.size());
    for (const auto& [node, gt] : dataset.ground_truth) nodes.push_back(node);
    if (cap == 0 || cap >= nodes.size()) return nodes;
    RngStream rng = RngStream(seed).child("house-selection");
    for (size_t i = 0; i < cap; ++i) {
        const size_t j = i + rng.index(nodes.size() - i);
        std::swap(nodes[i], nodes[j]);
    }
    nodes.resize(cap);
    std::sort(nodes.begin(), nodes.end());
    return nodes;
}

GroundTruthEvalResult run_ground_truth_eval(const SynthDataset& dataset,
                                            const std::vector<std::pair<size_t, Model>>& snapshots,
                                            const GroundTruthEvalConfig& config) {
    const std::vector<NodeId> query_nodes =
        house_nodes(dataset, config.max_nodes, config.node_selection_seed);
    if (query_nodes.empty()) throw std::invalid_argument("dataset has no house nodes");

    GroundTruthEvalResult result;
    for (const auto& [epoch, model] : snapshots) {
        EpochGroundTruthRow row;
        row.epoch = epoch;
        row.test_accuracy =
            evaluate_accuracy(model, dataset.graph, dataset.features, dataset.labels, dataset.test_mask);

        std::vector<double> precisions(query_nodes.size()), accuracies(query_nodes.size());
        const Model& model_ref = model;
        parallel_chunks(config.threads, query_nodes.size(), [&](size_t, size_t b, size_t e) {
            for (size_t qi = b; qi < e; ++qi) {
                const NodeId node = query_nodes[qi];
                const auto cg = computational_graph(dataset.graph, node, model_ref.hops);
                const auto local = restrict_rows(dataset.features, cg);
                const auto out = explain_baseline(config.explainer, model_ref, cg, local);

                std::vector<NodeId> selected_global;
                if (out.soft_mask) {
                    const auto kept_local = top_k(out.soft_mask->node_scores, config.top_k_nodes);
                    for (uint32_t li : kept_local) selected_global.push_back(cg.local_nodes[li]);
                } else if (out.explanation) {
                    for (uint32_t li : out.explanation->nodes) {
                        selected_global.push_back(cg.local_nodes[li]);
                    }
                }
                const auto scores = ground_truth_scores(selected_global,
                                                        dataset.ground_truth.at(node), cg.size());
                precisions[qi] = scores.precision;
                accuracies[qi] = scores.accuracy;
            }
        });
        row.mean_precision =
            std::accumulate(precisions.begin(), precisions.end(), 0.0) / precisions.size();
        row.mean_accuracy =
            std::accumulate(accuracies.begin(), accuracies.end(), 0.0) / accuracies.size();
        result.rows.push_back(row);
    }

    if (result.rows.size() >= 2) {
        std::vector<double> prec, acc;
        for (const auto& row : result.rows) {
            prec.push_back(row.mean_precision);
            acc.push_back(row.test_accuracy);
        }
        result.faithfulness_tau = kendall_tau(prec, acc);
    }
    return result;
}

}  // namespace zorro
