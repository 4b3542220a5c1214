#pragma once

#include <atomic>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "zorro/graph.hpp"
#include "zorro/matrix.hpp"
#include "zorro/rng.hpp"

namespace zorro {

// Node features plus, per column, the pool of values that column takes over
// the full dataset. The pools are the noise distribution for perturbation and
// stay global even when the rows are restricted to a computational graph.
struct FeatureMatrix {
    Matrix values;
    std::shared_ptr<const std::vector<std::vector<double>>> column_pools;

    size_t rows() const { return values.rows; }
    size_t cols() const { return values.cols; }
};

// Builds a feature matrix whose pools are the columns of `values`.
FeatureMatrix make_features(Matrix values);

// Restricts rows to the computational graph's local nodes; pools are shared.
FeatureMatrix restrict_rows(const FeatureMatrix& full, const ComputationalGraph& cg);

enum class ModelKind { RuleSum, Gcn2, Gcn3Stack };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

// Per-channel batch normalization constants. Inference always uses the
// stored running statistics, so the forward map stays pure and independent
// of the evaluated node set.
struct BatchNormParams {
    std::vector<double> gamma, beta, running_mean, running_var;
};

// A node classifier with a pure forward map. Weights layout:
//   Gcn2:      W1 (d x h), W2 (h x c)
//   Gcn3Stack: W1 (d x h), W2 (h x h), W3 (h x h), Wout (3h x c),
//              plus one bias per matrix and batch norm after each conv layer.
// RuleSum has no weights; it predicts class 1 iff the feature sum over the
// query's hop neighborhood reaches theta.
struct Model {
    ModelKind kind = ModelKind::Gcn2;
    size_t in_dim = 0;
    size_t hidden = 0;
    size_t num_classes = 2;
    uint32_t hops = 2;
    double theta = 0.0;
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;   // empty for Gcn2 and RuleSum
    std::vector<BatchNormParams> batch_norm;   // empty for Gcn2 and RuleSum

    std::shared_ptr<std::atomic<uint64_t>> forward_counter =
        std::make_shared<std::atomic<uint64_t>>(0);

    uint64_t forward_count() const { return forward_counter->load(); }
    void reset_forward_count() const { forward_counter->store(0); }
};

Model make_rule_sum(double theta, uint32_t hops);
Model make_gcn2(size_t in_dim, size_t hidden, size_t num_classes, RngStream init);
Model make_gcn3_stack(size_t in_dim, size_t hidden, size_t num_classes, RngStream init);

struct Prediction {
    NodeId node = 0;  // local index within the evaluated topology
    std::vector<double> class_probs;
    uint32_t predicted_class = 0;
};

// Symmetric-normalized adjacency with self-loops, D^{-1/2}(A+I)D^{-1/2},
// stored CSR. Built per (sub)graph, independent of the ambient graph size.
struct NormalizedAdjacency {
    size_t n = 0;
    std::vector<uint32_t> row_ptr;
    std::vector<uint32_t> col_idx;
    std::vector<double> coef;

    static NormalizedAdjacency build(size_t num_nodes, const std::vector<Edge>& edges);
};

// Forward over an explicit local topology; predictions for every local node.
std::vector<Prediction> forward(const Model& model, size_t num_nodes,
                                const std::vector<Edge>& edges, const Matrix& features);
std::vector<Prediction> forward(const Model& model, const ComputationalGraph& cg,
                                const Matrix& features);
std::vector<Prediction> forward(const Model& model, const Graph& graph, const Matrix& features);

// Exact gradient of the pre-softmax logit of `target_class` at the query node
// with respect to the input features. RuleSum is not differentiable.
Matrix gradient(const Model& model, const ComputationalGraph& cg, const Matrix& features,
                uint32_t target_class);

// Prediction of the query node only, with per-layer computation restricted to
// the hop shells that can still reach the query. Holds scratch buffers, so use
// one instance per thread.
class QueryForward {
public:
    QueryForward(const Model& model, const ComputationalGraph& cg);

    // Entry (i,j) of the input is `selected(i,j) ? fixed(i,j) : base(i,j)`.
    // Row/column selections may be null for "nothing selected".
    uint32_t predict_blended(const Matrix& base, const std::vector<uint8_t>* row_sel,
                             const std::vector<uint8_t>* col_sel, const Matrix& fixed,
                             std::vector<double>* probs_out = nullptr,
                             std::vector<double>* logits_out = nullptr);
    uint32_t predict(const Matrix& features, std::vector<double>* probs_out = nullptr,
                     std::vector<double>* logits_out = nullptr);

private:
    const Model* model_;
    const ComputationalGraph* cg_;
    NormalizedAdjacency adj_;
    std::vector<std::vector<uint32_t>> transform_rows_;  // per layer
    std::vector<std::vector<uint32_t>> aggregate_rows_;  // per layer
    std::vector<std::vector<double>> bn_scale_, bn_shift_;  // folded batch norm
    Matrix t_buf_, h_buf_, h_prev_;
    std::vector<double> xrow_, logits_;
    std::vector<uint32_t> rule_reach_;  // rule-sum: nodes within model hops of query
};

uint32_t argmax_class(const std::vector<double>& scores);

struct TrainConfig {
    size_t epochs = 200;
    double learning_rate = 0.01;
    double weight_decay = 0.005;
    uint64_t seed = 0;
    std::vector<size_t> snapshot_epochs;
};

struct TrainResult {
    Model model;
    std::vector<std::pair<size_t, Model>> snapshots;
    std::vector<double> train_accuracy;  // one entry per epoch
};

// Full-batch training with Adam and L2 weight decay. The model passed in
// provides the architecture and initial weights.
TrainResult train_gcn(Model initial, const Graph& graph, const FeatureMatrix& features,
                      const std::vector<int>& labels, const std::vector<NodeId>& train_mask,
                      const TrainConfig& config);

double evaluate_accuracy(const Model& model, const Graph& graph, const FeatureMatrix& features,
                         const std::vector<int>& labels, const std::vector<NodeId>& mask);

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace zorro
