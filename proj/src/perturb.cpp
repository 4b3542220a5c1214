#include "zorro/perturb.hpp"

#include <cmath>
#include <stdexcept>

#include "zorro/parallel.hpp"

namespace zorro {

namespace {

void check_explanation(const Explanation& e, size_t n, size_t d) {
    for (uint32_t v : e.nodes) {
        if (v >= n) throw std::out_of_range("explanation node index out of range");
    }
    for (uint32_t f : e.features) {
        if (f >= d) throw std::out_of_range("explanation feature index out of range");
    }
}

// Fills `out` with one full noise draw, row-major, one value per entry.
void draw_full(const FeatureMatrix& features, RngStream& rng, Matrix& out) {
    const auto& pools = *features.column_pools;
    const size_t n = features.rows(), d = features.cols();
    for (size_t j = 0; j < d; ++j) {
        if (pools[j].empty()) {
            throw std::runtime_error("empty value pool for feature column " + std::to_string(j));
        }
    }
    for (size_t i = 0; i < n; ++i) {
        double* row = out.row(i);
        for (size_t j = 0; j < d; ++j) row[j] = pools[j][rng.index(pools[j].size())];
    }
}

}  // namespace

Explanation full_explanation(size_t num_nodes, size_t num_features) {
    Explanation e;
    e.nodes.resize(num_nodes);
    e.features.resize(num_features);
    for (size_t i = 0; i < num_nodes; ++i) e.nodes[i] = static_cast<uint32_t>(i);
    for (size_t j = 0; j < num_features; ++j) e.features[j] = static_cast<uint32_t>(j);
    return e;
}

Matrix perturb(const FeatureMatrix& features, const Explanation& explanation, RngStream rng) {
    check_explanation(explanation, features.rows(), features.cols());
    Matrix y(features.rows(), features.cols());
    draw_full(features, rng, y);
    for (uint32_t i : explanation.nodes) {
        for (uint32_t j : explanation.features) y(i, j) = features.values(i, j);
    }
    return y;
}

NoiseTensor draw_noise(const FeatureMatrix& features, size_t samples, RngStream stream) {
    NoiseTensor noise;
    noise.z.reserve(samples);
    for (size_t i = 0; i < samples; ++i) {
        Matrix z(features.rows(), features.cols());
        RngStream s = stream.child(i);
        draw_full(features, s, z);
        noise.z.push_back(std::move(z));
    }
    return noise;
}

FidelityEvaluator::FidelityEvaluator(const Model& model, const ComputationalGraph& cg,
                                     const FeatureMatrix& local_features)
    : model_(&model), cg_(&cg), x_(&local_features), qf_(model, cg) {
    if (local_features.rows() != cg.size()) {
        throw std::invalid_argument("local feature rows do not match computational graph size");
    }
    ref_class_ = qf_.predict(local_features.values);
    row_sel_.assign(cg.size(), 0);
    col_sel_.assign(local_features.cols(), 0);
}

void FidelityEvaluator::set_masks(const Explanation& explanation) {
    check_explanation(explanation, x_->rows(), x_->cols());
    std::fill(row_sel_.begin(), row_sel_.end(), 0);
    std::fill(col_sel_.begin(), col_sel_.end(), 0);
    for (uint32_t i : explanation.nodes) row_sel_[i] = 1;
    for (uint32_t j : explanation.features) col_sel_[j] = 1;
}

double FidelityEvaluator::fraction_preserved(const Explanation& explanation,
                                             const NoiseTensor& noise) {
    set_masks(explanation);
    size_t correct = 0;
    for (const Matrix& z : noise.z) {
        if (qf_.predict_blended(z, &row_sel_, &col_sel_, x_->values) == ref_class_) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(noise.z.size());
}

size_t FidelityEvaluator::count_preserved(const Explanation& explanation, size_t begin, size_t end,
                                          RngStream stream) {
    set_masks(explanation);
    Matrix z(x_->rows(), x_->cols());
    size_t correct = 0;
    for (size_t i = begin; i < end; ++i) {
        RngStream s = stream.child(i);
        draw_full(*x_, s, z);
        if (qf_.predict_blended(z, &row_sel_, &col_sel_, x_->values) == ref_class_) ++correct;
    }
    return correct;
}

FidelityEstimate FidelityEvaluator::estimate(const Explanation& explanation, size_t samples,
                                             RngStream stream) {
    if (samples < 1) throw std::invalid_argument("sample count must be >= 1");
    const size_t correct = count_preserved(explanation, 0, samples, stream);
    FidelityEstimate est;
    est.value = static_cast<double>(correct) / static_cast<double>(samples);
    est.samples = samples;
    est.std_error = std::sqrt(est.value * (1.0 - est.value) / static_cast<double>(samples));
    return est;
}

double FidelityEvaluator::exact(const Explanation& explanation,
                                const std::vector<std::vector<double>>& domains) const {
    check_explanation(explanation, x_->rows(), x_->cols());
    if (domains.size() != x_->cols()) {
        throw std::invalid_argument("need one value domain per feature column");
    }
    std::vector<uint8_t> rsel(x_->rows(), 0), csel(x_->cols(), 0);
    for (uint32_t i : explanation.nodes) rsel[i] = 1;
    for (uint32_t j : explanation.features) csel[j] = 1;

    std::vector<std::pair<size_t, size_t>> free_entries;
    double budget = 1.0;
    for (size_t i = 0; i < x_->rows(); ++i) {
        for (size_t j = 0; j < x_->cols(); ++j) {
            if (rsel[i] && csel[j]) continue;
            if (domains[j].empty()) throw std::invalid_argument("empty domain for free entry");
            free_entries.emplace_back(i, j);
            budget *= static_cast<double>(domains[j].size());
            if (budget > 1e6) throw std::runtime_error("enumeration budget exceeded");
        }
    }

    Matrix y = x_->values;
    std::vector<size_t> counter(free_entries.size(), 0);
    for (auto [i, j] : free_entries) y(i, j) = domains[j][0];

    size_t total = 0, correct = 0;
    while (true) {
        ++total;
        if (qf_.predict(y) == ref_class_) ++correct;
        size_t k = 0;
        for (; k < free_entries.size(); ++k) {
            auto [i, j] = free_entries[k];
            if (++counter[k] < domains[j].size()) {
                y(i, j) = domains[j][counter[k]];
                break;
            }
            counter[k] = 0;
            y(i, j) = domains[j][0];
        }
        if (k == free_entries.size()) break;
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

FidelityEstimate rdt_fidelity(const Model& model, const ComputationalGraph& cg,
                              const FeatureMatrix& local_features, const Explanation& explanation,
                              size_t samples, RngStream stream, size_t threads) {
    if (samples < 1) throw std::invalid_argument("sample count must be >= 1");
    size_t correct = 0;
    if (threads <= 1 || samples < 64) {
        FidelityEvaluator eval(model, cg, local_features);
        correct = eval.count_preserved(explanation, 0, samples, stream);
    } else {
        // Per-sample child streams make the result independent of the partition.
        std::vector<size_t> per_thread(threads, 0);
        parallel_chunks(threads, samples, [&](size_t t, size_t begin, size_t end) {
            FidelityEvaluator eval(model, cg, local_features);
            per_thread[t] = eval.count_preserved(explanation, begin, end, stream);
        });
        for (size_t c : per_thread) correct += c;
    }
    FidelityEstimate est;
    est.value = static_cast<double>(correct) / static_cast<double>(samples);
    est.samples = samples;
    est.std_error = std::sqrt(est.value * (1.0 - est.value) / static_cast<double>(samples));
    return est;
}

double exact_fidelity(const Model& model, const ComputationalGraph& cg,
                      const FeatureMatrix& local_features, const Explanation& explanation,
                      const std::vector<std::vector<double>>& domains) {
    FidelityEvaluator eval(model, cg, local_features);
    return eval.exact(explanation, domains);
}

double stability(double fidelity) {
    if (fidelity < 0.0 || fidelity > 1.0) {
        throw std::invalid_argument("fidelity must lie in [0, 1]");
    }
    return 1.0 / (1.0 + fidelity * (1.0 - fidelity));
}

}  // namespace zorro
