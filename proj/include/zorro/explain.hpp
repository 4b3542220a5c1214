#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "zorro/perturb.hpp"

namespace zorro {

struct ZorroConfig {
    double tau = 0.85;       // fidelity threshold in (0, 1]
    size_t beam = 10;        // K: top-ranked remaining nodes/features evaluated per step
    size_t samples = 100;    // Monte-Carlo samples per fidelity estimate
    uint64_t seed = 0;
    std::optional<size_t> max_elements;
    size_t max_explanations = 32;  // recursion caps for the multi variant
    size_t max_depth = 16;
    size_t threads = 1;
    bool record_candidate_scores = false;
};

struct TraceStep {
    bool is_feature = false;
    uint32_t index = 0;  // local node index or feature column
    double fidelity = 0.0;
};

struct ZorroResult {
    Explanation explanation;
    std::vector<TraceStep> trace;
    double fidelity = 0.0;
    // Stream whose per-sample children produced the final fidelity estimate;
    // rdt_fidelity with the same stream reproduces `fidelity` exactly.
    RngStream final_noise_stream;
    // One entry per greedy step when record_candidate_scores is set: the
    // fidelity of every candidate evaluated at that step.
    std::vector<std::vector<double>> step_scores;
};

// Raised when max_elements is hit before reaching tau; carries the partial
// search state.
class ZorroIncomplete : public std::runtime_error {
public:
    explicit ZorroIncomplete(ZorroResult partial)
        : std::runtime_error("explanation incomplete: element budget exhausted before reaching tau"),
          partial_result(std::move(partial)) {}
    ZorroResult partial_result;
};

// Greedy search for one explanation with fidelity >= tau.
ZorroResult zorro_explain(const Model& model, const ComputationalGraph& cg,
                          const FeatureMatrix& local_features, const ZorroConfig& config);

// Recursive variant returning pairwise disjoint explanations (node sets or
// feature sets disjoint), each with fidelity >= tau.
std::vector<ZorroResult> zorro_multi(const Model& model, const ComputationalGraph& cg,
                                     const FeatureMatrix& local_features,
                                     const ZorroConfig& config);

// Prefix explanation reaching tau_prime, extracted from the recorded trace.
Explanation explanation_at_threshold(const ZorroResult& result, double tau_prime);

}  // namespace zorro
