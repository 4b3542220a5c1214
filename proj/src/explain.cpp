#include "zorro/explain.hpp"

#include <algorithm>
#include <memory>

#include "zorro/parallel.hpp"

namespace zorro {

namespace {

struct Ranked {
    uint32_t index;
    double score;
};

// descending score, ties by ascending index
void sort_ranking(std::vector<Ranked>& r) {
    std::stable_sort(r.begin(), r.end(), [](const Ranked& a, const Ranked& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.index < b.index;
    });
}

std::vector<uint32_t> sorted_union(std::vector<uint32_t> v, uint32_t extra) {
    v.push_back(extra);
    std::sort(v.begin(), v.end());
    return v;
}

class Search {
public:
    Search(const Model& model, const ComputationalGraph& cg, const FeatureMatrix& x,
           const ZorroConfig& config)
        : config_(config) {
        const size_t workers = std::max<size_t>(1, config.threads);
        for (size_t t = 0; t < workers; ++t) {
            evals_.push_back(std::make_unique<FidelityEvaluator>(model, cg, x));
        }
        features_ = &x;
    }

    // Evaluates all candidate explanations against the shared noise tensor.
    std::vector<double> score_all(const std::vector<Explanation>& candidates,
                                  const NoiseTensor& noise) {
        std::vector<double> scores(candidates.size());
        parallel_chunks(evals_.size(), candidates.size(), [&](size_t t, size_t b, size_t e) {
            for (size_t i = b; i < e; ++i) {
                scores[i] = evals_[t]->fraction_preserved(candidates[i], noise);
            }
        });
        return scores;
    }

    ZorroResult run(const std::vector<uint32_t>& candidate_nodes,
                    const std::vector<uint32_t>& candidate_features, RngStream stream) {
        const size_t samples = config_.samples;
        ZorroResult result;
        std::vector<uint32_t> v_sel, f_sel;

        // Static rankings in the maximal setting: nodes against all candidate
        // features, features against all candidate nodes.
        const NoiseTensor rank_noise = draw_noise(*features_, samples, stream.child("rank"));
        std::vector<Explanation> rank_cands;
        for (uint32_t v : candidate_nodes) rank_cands.push_back({{v}, candidate_features});
        for (uint32_t f : candidate_features) rank_cands.push_back({candidate_nodes, {f}});
        const std::vector<double> rank_scores = score_all(rank_cands, rank_noise);

        std::vector<Ranked> node_rank, feat_rank;
        for (size_t i = 0; i < candidate_nodes.size(); ++i) {
            node_rank.push_back({candidate_nodes[i], rank_scores[i]});
        }
        for (size_t i = 0; i < candidate_features.size(); ++i) {
            feat_rank.push_back({candidate_features[i], rank_scores[candidate_nodes.size() + i]});
        }
        sort_ranking(node_rank);
        sort_ranking(feat_rank);

        // Seed element. A single candidate node is selected outright and the
        // search continues over features only.
        bool seed_is_feature;
        if (candidate_nodes.size() == 1) {
            seed_is_feature = false;
        } else if (node_rank.empty()) {
            seed_is_feature = true;
        } else if (feat_rank.empty()) {
            seed_is_feature = false;
        } else {
            seed_is_feature = feat_rank[0].score >= node_rank[0].score;
        }
        size_t node_pos = 0, feat_pos = 0;  // consumed prefix of each ranking
        if (seed_is_feature) {
            f_sel.push_back(feat_rank[feat_pos++].index);
        } else {
            v_sel.push_back(node_rank[node_pos++].index);
        }

        RngStream seed_stream = stream.child("seed");
        const NoiseTensor seed_noise = draw_noise(*features_, samples, seed_stream);
        double fidelity = evals_[0]->fraction_preserved({v_sel, f_sel}, seed_noise);
        result.trace.push_back({seed_is_feature,
                                seed_is_feature ? f_sel.front() : v_sel.front(), fidelity});
        result.final_noise_stream = seed_stream;

        uint64_t step = 0;
        while (fidelity < config_.tau) {
            const bool exhausted = node_pos >= node_rank.size() && feat_pos >= feat_rank.size();
            const bool over_budget =
                config_.max_elements && v_sel.size() + f_sel.size() >= *config_.max_elements;
            if (exhausted || over_budget) {
                result.explanation = {v_sel, f_sel};
                result.fidelity = fidelity;
                throw ZorroIncomplete(std::move(result));
            }

            RngStream step_stream = stream.child(++step);
            const NoiseTensor noise = draw_noise(*features_, samples, step_stream);

            std::vector<Explanation> cands;
            const size_t node_end = std::min(node_pos + config_.beam, node_rank.size());
            const size_t feat_end = std::min(feat_pos + config_.beam, feat_rank.size());
            for (size_t i = node_pos; i < node_end; ++i) {
                cands.push_back({sorted_union(v_sel, node_rank[i].index), f_sel});
            }
            for (size_t i = feat_pos; i < feat_end; ++i) {
                cands.push_back({v_sel, sorted_union(f_sel, feat_rank[i].index)});
            }
            const std::vector<double> scores = score_all(cands, noise);
            if (config_.record_candidate_scores) result.step_scores.push_back(scores);

            auto best_in = [&](size_t begin, size_t end, const std::vector<Ranked>& rank,
                               size_t rank_begin) -> std::pair<size_t, double> {
                size_t best = SIZE_MAX;
                double best_score = -1.0;
                uint32_t best_index = 0;
                for (size_t i = begin; i < end; ++i) {
                    const uint32_t elem = rank[rank_begin + (i - begin)].index;
                    if (scores[i] > best_score ||
                        (scores[i] == best_score && best != SIZE_MAX && elem < best_index)) {
                        best = i;
                        best_score = scores[i];
                        best_index = elem;
                    }
                }
                return {best, best_score};
            };
            const size_t n_node_cands = node_end - node_pos;
            auto [best_node_cand, best_node_score] = best_in(0, n_node_cands, node_rank, node_pos);
            auto [best_feat_cand, best_feat_score] =
                best_in(n_node_cands, cands.size(), feat_rank, feat_pos);

            // Alg. 1 line 10: the feature wins ties.
            bool add_feature;
            if (best_feat_cand == SIZE_MAX) {
                add_feature = false;
            } else if (best_node_cand == SIZE_MAX) {
                add_feature = true;
            } else {
                add_feature = best_node_score <= best_feat_score;
            }

            if (add_feature) {
                const size_t offset = best_feat_cand - n_node_cands;
                const uint32_t f = feat_rank[feat_pos + offset].index;
                std::swap(feat_rank[feat_pos], feat_rank[feat_pos + offset]);
                ++feat_pos;
                f_sel = sorted_union(f_sel, f);
                fidelity = best_feat_score;
                result.trace.push_back({true, f, fidelity});
            } else {
                const size_t offset = best_node_cand;
                const uint32_t v = node_rank[node_pos + offset].index;
                std::swap(node_rank[node_pos], node_rank[node_pos + offset]);
                ++node_pos;
                v_sel = sorted_union(v_sel, v);
                fidelity = best_node_score;
                result.trace.push_back({false, v, fidelity});
            }
            result.final_noise_stream = step_stream;
        }

        result.explanation = {v_sel, f_sel};
        result.fidelity = fidelity;
        return result;
    }

    FidelityEvaluator& evaluator() { return *evals_[0]; }

private:
    const ZorroConfig& config_;
    const FeatureMatrix* features_;
    std::vector<std::unique_ptr<FidelityEvaluator>> evals_;
};

bool disjoint(const std::vector<uint32_t>& a, const std::vector<uint32_t>& b) {
    auto it_a = a.begin();
    auto it_b = b.begin();
    while (it_a != a.end() && it_b != b.end()) {
        if (*it_a < *it_b) {
            ++it_a;
        } else if (*it_b < *it_a) {
            ++it_b;
        } else {
            return false;
        }
    }
    return true;
}

bool compatible(const Explanation& a, const Explanation& b) {
    return disjoint(a.nodes, b.nodes) || disjoint(a.features, b.features);
}

void multi_recurse(Search& search, std::vector<uint32_t> nodes, std::vector<uint32_t> features,
                   size_t depth, RngStream stream, const ZorroConfig& config,
                   std::vector<ZorroResult>& out) {
    if (out.size() >= config.max_explanations || depth >= config.max_depth) return;
    if (nodes.empty() || features.empty()) return;

    // Prune branches whose maximal reachable fidelity misses tau.
    const double reachable =
        search.evaluator().estimate({nodes, features}, config.samples, stream.child("gate")).value;
    if (reachable < config.tau) return;

    ZorroResult found;
    try {
        found = search.run(nodes, features, stream.child("explain"));
    } catch (const ZorroIncomplete&) {
        return;
    }

    bool ok = true;
    for (const ZorroResult& prev : out) {
        if (!compatible(prev.explanation, found.explanation)) {
            ok = false;
            break;
        }
    }
    std::vector<uint32_t> v_rest, f_rest;
    std::set_difference(nodes.begin(), nodes.end(), found.explanation.nodes.begin(),
                        found.explanation.nodes.end(), std::back_inserter(v_rest));
    std::set_difference(features.begin(), features.end(), found.explanation.features.begin(),
                        found.explanation.features.end(), std::back_inserter(f_rest));
    if (ok) out.push_back(std::move(found));

    multi_recurse(search, nodes, f_rest, depth + 1, stream.child("feature-branch"), config, out);
    multi_recurse(search, v_rest, features, depth + 1, stream.child("node-branch"), config, out);
}

}  // namespace

ZorroResult zorro_explain(const Model& model, const ComputationalGraph& cg,
                          const FeatureMatrix& local_features, const ZorroConfig& config) {
    if (cg.size() == 0) throw std::invalid_argument("computational graph is empty");
    if (config.tau <= 0.0 || config.tau > 1.0) throw std::invalid_argument("tau must be in (0, 1]");
    if (config.beam < 1) throw std::invalid_argument("beam width must be >= 1");

    Search search(model, cg, local_features, config);
    const auto all = full_explanation(cg.size(), local_features.cols());
    return search.run(all.nodes, all.features, RngStream(config.seed));
}

std::vector<ZorroResult> zorro_multi(const Model& model, const ComputationalGraph& cg,
                                     const FeatureMatrix& local_features,
                                     const ZorroConfig& config) {
    if (cg.size() == 0) throw std::invalid_argument("computational graph is empty");
    Search search(model, cg, local_features, config);
    const auto all = full_explanation(cg.size(), local_features.cols());
    std::vector<ZorroResult> out;
    multi_recurse(search, all.nodes, all.features, 0, RngStream(config.seed), config, out);
    return out;
}

Explanation explanation_at_threshold(const ZorroResult& result, double tau_prime) {
    Explanation e;
    for (const TraceStep& step : result.trace) {
        if (step.is_feature) {
            e.features = sorted_union(e.features, step.index);
        } else {
            e.nodes = sorted_union(e.nodes, step.index);
        }
        if (step.fidelity >= tau_prime) return e;
    }
    return e;
}

}  // namespace zorro
