#pragma once

#include <cstdint>
#include <vector>

#include "zorro/gnn.hpp"
#include "zorro/graph.hpp"
#include "zorro/rng.hpp"

namespace zorro {

// Hard mask over a computational graph: selected local node indices and
// selected feature columns. Entry (i,j) is pinned iff i is selected and j is
// selected; everything else is free.
struct Explanation {
    std::vector<uint32_t> nodes;     // local node indices, ascending
    std::vector<uint32_t> features;  // feature column indices, ascending

    size_t selected_entries() const { return nodes.size() * features.size(); }
    bool empty() const { return nodes.empty() || features.empty(); }
};

Explanation full_explanation(size_t num_nodes, size_t num_features);

// Non-negative importance scores; either side may be empty.
struct SoftMask {
    std::vector<double> node_scores;
    std::vector<double> feature_scores;
};

struct FidelityEstimate {
    double value = 0.0;
    size_t samples = 0;
    double std_error = 0.0;  // binomial, sqrt(value*(1-value)/samples)
};

// One perturbation draw: pinned entries keep their value, free entries are
// resampled independently and uniformly from the global column pools.
Matrix perturb(const FeatureMatrix& features, const Explanation& explanation, RngStream rng);

// Noise tensor shared by paired candidate evaluations. Sample i is drawn from
// stream.child(i), so any later re-draw from the same stream is identical.
struct NoiseTensor {
    std::vector<Matrix> z;
};

NoiseTensor draw_noise(const FeatureMatrix& features, size_t samples, RngStream stream);

// Monte-Carlo and exact evaluation of RDT-fidelity for one query node.
// Holds per-instance scratch, so use one evaluator per thread.
class FidelityEvaluator {
public:
    FidelityEvaluator(const Model& model, const ComputationalGraph& cg,
                      const FeatureMatrix& local_features);

    uint32_t reference_class() const { return ref_class_; }
    size_t num_nodes() const { return x_->rows(); }
    size_t num_features() const { return x_->cols(); }

    // Fraction of draws whose prediction at the query matches the reference.
    double fraction_preserved(const Explanation& explanation, const NoiseTensor& noise);
    // Count over samples [begin, end), sample i drawn from stream.child(i).
    size_t count_preserved(const Explanation& explanation, size_t begin, size_t end,
                           RngStream stream);
    FidelityEstimate estimate(const Explanation& explanation, size_t samples, RngStream stream);
    // Exact expectation by enumerating all assignments of the free entries
    // over the given per-column domains. Throws if the product of domain
    // sizes exceeds the budget of 1e6.
    double exact(const Explanation& explanation,
                 const std::vector<std::vector<double>>& domains) const;

private:
    void set_masks(const Explanation& explanation);

    const Model* model_;
    const ComputationalGraph* cg_;
    const FeatureMatrix* x_;
    mutable QueryForward qf_;
    uint32_t ref_class_;
    std::vector<uint8_t> row_sel_, col_sel_;
};

FidelityEstimate rdt_fidelity(const Model& model, const ComputationalGraph& cg,
                              const FeatureMatrix& local_features, const Explanation& explanation,
                              size_t samples, RngStream stream, size_t threads = 1);

double exact_fidelity(const Model& model, const ComputationalGraph& cg,
                      const FeatureMatrix& local_features, const Explanation& explanation,
                      const std::vector<std::vector<double>>& domains);

// Stability 1/(1 + p(1-p)) of an explanation with RDT-fidelity p.
double stability(double fidelity);

}  // namespace zorro
