#include "zorro/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace zorro {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

void check_dims(const Model& model, const Matrix& features) {
    if (model.kind == ModelKind::RuleSum) return;
    if (features.cols != model.in_dim) {
        throw std::invalid_argument("feature dimension " + std::to_string(features.cols) +
                                    " does not match model input dimension " +
                                    std::to_string(model.in_dim));
    }
}

size_t layer_count(const Model& model) {
    switch (model.kind) {
        case ModelKind::Gcn2: return 2;
        case ModelKind::Gcn3Stack: return 3;
        case ModelKind::RuleSum: return model.hops;
    }
    return 0;
}

void softmax_inplace(std::vector<double>& v) {
    double mx = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (double& x : v) {
        x = std::exp(x - mx);
        sum += x;
    }
    for (double& x : v) x /= sum;
}

Matrix glorot_uniform(size_t rows, size_t cols, RngStream rng) {
    Matrix w(rows, cols);
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (double& x : w.data) x = (2.0 * rng.uniform01() - 1.0) * limit;
    return w;
}

// T[rows,:] = X[rows,:] * W (+ bias)
void linear_rows(const Matrix& x, const Matrix& w, const std::vector<double>* bias,
               const std::vector<uint32_t>& rows, Matrix& t) {
    const size_t d = w.rows, h = w.cols;
    for (uint32_t i : rows) {
        const double* xi = x.row(i);
        double* ti = t.row(i);
        if (bias) {
            std::copy(bias->begin(), bias->end(), ti);
        } else {
            std::fill(ti, ti + h, 0.0);
        }
        for (size_t j = 0; j < d; ++j) {
            const double xij = xi[j];
            if (xij == 0.0) continue;
            const double* wj = w.row(j);
            for (size_t k = 0; k < h; ++k) ti[k] += xij * wj[k];
        }
    }
}

// H[rows,:] = A_hat * T restricted to rows, optional ReLU
void aggregate(const NormalizedAdjacency& adj, const Matrix& t, const std::vector<uint32_t>& rows,
               bool relu, Matrix& h) {
    const size_t width = t.cols;
    for (uint32_t i : rows) {
        double* hi = h.row(i);
        std::fill(hi, hi + width, 0.0);
        for (uint32_t e = adj.row_ptr[i]; e < adj.row_ptr[i + 1]; ++e) {
            const double c = adj.coef[e];
            const double* tj = t.row(adj.col_idx[e]);
            for (size_t k = 0; k < width; ++k) hi[k] += c * tj[k];
        }
        if (relu) {
            for (size_t k = 0; k < width; ++k) hi[k] = std::max(0.0, hi[k]);
        }
    }
}

std::vector<uint32_t> all_rows(size_t n) {
    std::vector<uint32_t> rows(n);
    for (size_t i = 0; i < n; ++i) rows[i] = static_cast<uint32_t>(i);
    return rows;
}

std::vector<std::vector<NodeId>> adjacency_lists(size_t n, const std::vector<Edge>& edges) {
    std::vector<std::vector<NodeId>> adj(n);
    for (auto [u, v] : edges) {
        adj[u].push_back(v);
        adj[v].push_back(u);
    }
    return adj;
}

std::vector<uint32_t> nodes_within_hops(const std::vector<std::vector<NodeId>>& adj, NodeId start,
                                        uint32_t hops) {
    constexpr uint32_t kUnseen = UINT32_MAX;
    std::vector<uint32_t> depth(adj.size(), kUnseen);
    std::deque<NodeId> queue{start};
    depth[start] = 0;
    std::vector<uint32_t> reach{start};
    while (!queue.empty()) {
        NodeId u = queue.front();
        queue.pop_front();
        if (depth[u] == hops) continue;
        for (NodeId w : adj[u]) {
            if (depth[w] == kUnseen) {
                depth[w] = depth[u] + 1;
                queue.push_back(w);
                reach.push_back(w);
            }
        }
    }
    std::sort(reach.begin(), reach.end());
    return reach;
}

struct LayerDims {
    size_t in, out;
    const Matrix* w;
    const std::vector<double>* bias;  // null when absent
};

std::vector<LayerDims> conv_layers(const Model& model) {
    std::vector<LayerDims> layers;
    auto bias_of = [&](size_t idx) -> const std::vector<double>* {
        return idx < model.biases.size() ? &model.biases[idx] : nullptr;
    };
    if (model.kind == ModelKind::Gcn2) {
        layers.push_back({model.in_dim, model.hidden, &model.weights[0], bias_of(0)});
        layers.push_back({model.hidden, model.num_classes, &model.weights[1], bias_of(1)});
    } else if (model.kind == ModelKind::Gcn3Stack) {
        layers.push_back({model.in_dim, model.hidden, &model.weights[0], bias_of(0)});
        layers.push_back({model.hidden, model.hidden, &model.weights[1], bias_of(1)});
        layers.push_back({model.hidden, model.hidden, &model.weights[2], bias_of(2)});
    }
    return layers;
}

// inference-mode batch norm folded to y = x * scale + shift
void fold_batch_norm(const BatchNormParams& bn, std::vector<double>& scale,
                     std::vector<double>& shift) {
    const size_t h = bn.gamma.size();
    scale.resize(h);
    shift.resize(h);
    for (size_t k = 0; k < h; ++k) {
        scale[k] = bn.gamma[k] / std::sqrt(bn.running_var[k] + kBnEps);
        shift[k] = bn.beta[k] - bn.running_mean[k] * scale[k];
    }
}

void apply_affine_rows(Matrix& h, const std::vector<uint32_t>& rows,
                       const std::vector<double>& scale, const std::vector<double>& shift) {
    for (uint32_t i : rows) {
        double* hi = h.row(i);
        for (size_t k = 0; k < scale.size(); ++k) hi[k] = hi[k] * scale[k] + shift[k];
    }
}

}  // namespace

FeatureMatrix make_features(Matrix values) {
    auto pools = std::make_shared<std::vector<std::vector<double>>>(values.cols);
    for (size_t j = 0; j < values.cols; ++j) {
        auto& pool = (*pools)[j];
        pool.reserve(values.rows);
        for (size_t i = 0; i < values.rows; ++i) pool.push_back(values(i, j));
    }
    FeatureMatrix fm;
    fm.values = std::move(values);
    fm.column_pools = std::move(pools);
    return fm;
}

FeatureMatrix restrict_rows(const FeatureMatrix& full, const ComputationalGraph& cg) {
    Matrix local(cg.size(), full.cols());
    for (size_t i = 0; i < cg.size(); ++i) {
        const double* src = full.values.row(cg.local_nodes[i]);
        std::copy(src, src + full.cols(), local.row(i));
    }
    FeatureMatrix fm;
    fm.values = std::move(local);
    fm.column_pools = full.column_pools;
    return fm;
}

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::RuleSum: return "rule-sum";
        case ModelKind::Gcn2: return "gcn2";
        case ModelKind::Gcn3Stack: return "gcn3-stack";
    }
    return "unknown";
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "rule-sum") return ModelKind::RuleSum;
    if (s == "gcn2") return ModelKind::Gcn2;
    if (s == "gcn3-stack") return ModelKind::Gcn3Stack;
    throw std::runtime_error("unknown model kind: " + s);
}

Model make_rule_sum(double theta, uint32_t hops) {
    Model m;
    m.kind = ModelKind::RuleSum;
    m.theta = theta;
    m.hops = hops;
    m.num_classes = 2;
    return m;
}

Model make_gcn2(size_t in_dim, size_t hidden, size_t num_classes, RngStream init) {
    Model m;
    m.kind = ModelKind::Gcn2;
    m.in_dim = in_dim;
    m.hidden = hidden;
    m.num_classes = num_classes;
    m.hops = 2;
    m.weights.push_back(glorot_uniform(in_dim, hidden, init.child(0)));
    m.weights.push_back(glorot_uniform(hidden, num_classes, init.child(1)));
    return m;
}

Model make_gcn3_stack(size_t in_dim, size_t hidden, size_t num_classes, RngStream init) {
    Model m;
    m.kind = ModelKind::Gcn3Stack;
    m.in_dim = in_dim;
    m.hidden = hidden;
    m.num_classes = num_classes;
    m.hops = 3;
    m.weights.push_back(glorot_uniform(in_dim, hidden, init.child(0)));
    m.weights.push_back(glorot_uniform(hidden, hidden, init.child(1)));
    m.weights.push_back(glorot_uniform(hidden, hidden, init.child(2)));
    m.weights.push_back(glorot_uniform(3 * hidden, num_classes, init.child(3)));
    m.biases = {std::vector<double>(hidden, 0.0), std::vector<double>(hidden, 0.0),
                std::vector<double>(hidden, 0.0), std::vector<double>(num_classes, 0.0)};
    for (int l = 0; l < 3; ++l) {
        BatchNormParams bn;
        bn.gamma.assign(hidden, 1.0);
        bn.beta.assign(hidden, 0.0);
        bn.running_mean.assign(hidden, 0.0);
        bn.running_var.assign(hidden, 1.0);
        m.batch_norm.push_back(std::move(bn));
    }
    return m;
}

NormalizedAdjacency NormalizedAdjacency::build(size_t num_nodes, const std::vector<Edge>& edges) {
    auto adj = adjacency_lists(num_nodes, edges);
    std::vector<double> inv_sqrt_deg(num_nodes);
    for (size_t i = 0; i < num_nodes; ++i) {
        inv_sqrt_deg[i] = 1.0 / std::sqrt(static_cast<double>(adj[i].size() + 1));
    }
    NormalizedAdjacency out;
    out.n = num_nodes;
    out.row_ptr.assign(num_nodes + 1, 0);
    for (size_t i = 0; i < num_nodes; ++i) {
        auto row = adj[i];
        row.push_back(static_cast<NodeId>(i));
        std::sort(row.begin(), row.end());
        for (NodeId j : row) {
            out.col_idx.push_back(j);
            out.coef.push_back(inv_sqrt_deg[i] * inv_sqrt_deg[j]);
        }
        out.row_ptr[i + 1] = static_cast<uint32_t>(out.col_idx.size());
    }
    return out;
}

uint32_t argmax_class(const std::vector<double>& scores) {
    uint32_t best = 0;
    for (uint32_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    return best;
}

std::vector<Prediction> forward(const Model& model, size_t num_nodes,
                                const std::vector<Edge>& edges, const Matrix& features) {
    check_dims(model, features);
    if (features.rows != num_nodes) {
        throw std::invalid_argument("feature rows do not match node count");
    }
    model.forward_counter->fetch_add(1, std::memory_order_relaxed);

    std::vector<Prediction> preds(num_nodes);
    if (model.kind == ModelKind::RuleSum) {
        auto adj = adjacency_lists(num_nodes, edges);
        for (size_t v = 0; v < num_nodes; ++v) {
            double sum = 0.0;
            for (uint32_t u : nodes_within_hops(adj, static_cast<NodeId>(v), model.hops)) {
                const double* xu = features.row(u);
                for (size_t j = 0; j < features.cols; ++j) sum += xu[j];
            }
            const uint32_t cls = sum >= model.theta ? 1u : 0u;
            preds[v] = {static_cast<NodeId>(v), {cls == 0 ? 1.0 : 0.0, cls == 1 ? 1.0 : 0.0}, cls};
        }
        return preds;
    }

    const auto adj = NormalizedAdjacency::build(num_nodes, edges);
    const auto rows = all_rows(num_nodes);
    const auto layers = conv_layers(model);
    const bool stacked = model.kind == ModelKind::Gcn3Stack;

    Matrix cur = features;
    Matrix stack(num_nodes, stacked ? 3 * model.hidden : 0);
    for (size_t l = 0; l < layers.size(); ++l) {
        Matrix t(num_nodes, layers[l].out);
        Matrix h(num_nodes, layers[l].out);
        linear_rows(cur, *layers[l].w, layers[l].bias, rows, t);
        const bool relu = stacked || l + 1 < layers.size();
        aggregate(adj, t, rows, relu, h);
        if (stacked) {
            std::vector<double> scale, shift;
            fold_batch_norm(model.batch_norm[l], scale, shift);
            apply_affine_rows(h, rows, scale, shift);
            for (size_t i = 0; i < num_nodes; ++i) {
                std::copy(h.row(i), h.row(i) + model.hidden, stack.row(i) + l * model.hidden);
            }
        }
        cur = std::move(h);
    }

    Matrix logits;
    if (stacked) {
        logits = Matrix(num_nodes, model.num_classes);
        linear_rows(stack, model.weights.back(), &model.biases.back(), rows, logits);
    } else {
        logits = std::move(cur);
    }
    for (size_t v = 0; v < num_nodes; ++v) {
        std::vector<double> probs(logits.row(v), logits.row(v) + model.num_classes);
        softmax_inplace(probs);
        const uint32_t cls = argmax_class(probs);
        preds[v] = {static_cast<NodeId>(v), std::move(probs), cls};
    }
    return preds;
}

std::vector<Prediction> forward(const Model& model, const ComputationalGraph& cg,
                                const Matrix& features) {
    return forward(model, cg.size(), cg.local_edges, features);
}

std::vector<Prediction> forward(const Model& model, const Graph& graph, const Matrix& features) {
    return forward(model, graph.num_nodes(), graph.edges(), features);
}

QueryForward::QueryForward(const Model& model, const ComputationalGraph& cg)
    : model_(&model), cg_(&cg), adj_(NormalizedAdjacency::build(cg.size(), cg.local_edges)) {
    const size_t n = cg.size();
    const size_t layers = layer_count(model);
    if (model.kind != ModelKind::RuleSum) {
        transform_rows_.resize(layers);
        aggregate_rows_.resize(layers);
        for (size_t l = 0; l < layers; ++l) {
            const uint32_t t_limit = static_cast<uint32_t>(layers - l);
            for (uint32_t i = 0; i < n; ++i) {
                if (cg.hop_distance[i] <= t_limit) transform_rows_[l].push_back(i);
                if (cg.hop_distance[i] + 1 <= t_limit) aggregate_rows_[l].push_back(i);
            }
        }
        if (!model.batch_norm.empty()) {
            bn_scale_.resize(model.batch_norm.size());
            bn_shift_.resize(model.batch_norm.size());
            for (size_t l = 0; l < model.batch_norm.size(); ++l) {
                fold_batch_norm(model.batch_norm[l], bn_scale_[l], bn_shift_[l]);
            }
        }
        const size_t width = std::max(model.in_dim, std::max(model.hidden, model.num_classes));
        t_buf_ = Matrix(n, width);
        h_buf_ = Matrix(n, width);
        h_prev_ = Matrix(n, width);
        xrow_.resize(model.in_dim);
        logits_.resize(model.num_classes);
    } else {
        auto adj_lists = adjacency_lists(n, cg.local_edges);
        rule_reach_ = nodes_within_hops(adj_lists, cg.query_local_index, model.hops);
    }
}

uint32_t QueryForward::predict_blended(const Matrix& base, const std::vector<uint8_t>* row_sel,
                                       const std::vector<uint8_t>* col_sel, const Matrix& fixed,
                                       std::vector<double>* probs_out,
                                       std::vector<double>* logits_out) {
    model_->forward_counter->fetch_add(1, std::memory_order_relaxed);
    const size_t d = base.cols;
    const Model& m = *model_;

    auto blended_entry = [&](uint32_t i, size_t j) {
        const bool sel = row_sel && (*row_sel)[i] && (*col_sel)[j];
        return sel ? fixed(i, j) : base(i, j);
    };

    if (m.kind == ModelKind::RuleSum) {
        double sum = 0.0;
        for (uint32_t i : rule_reach_) {
            for (size_t j = 0; j < d; ++j) sum += blended_entry(i, j);
        }
        const uint32_t cls = sum >= m.theta ? 1u : 0u;
        if (probs_out) *probs_out = {cls == 0 ? 1.0 : 0.0, cls == 1 ? 1.0 : 0.0};
        if (logits_out) *logits_out = {cls == 0 ? 1.0 : 0.0, cls == 1 ? 1.0 : 0.0};
        return cls;
    }

    const auto layers = conv_layers(m);
    const bool stacked = m.kind == ModelKind::Gcn3Stack;
    std::vector<double> stack(stacked ? 3 * m.hidden : 0);
    const uint32_t q = cg_->query_local_index;

    for (size_t l = 0; l < layers.size(); ++l) {
        const Matrix& w = *layers[l].w;
        const std::vector<double>* bias = layers[l].bias;
        if (l == 0) {
            // layer 1 reads the blended input row by row
            for (uint32_t i : transform_rows_[0]) {
                if (row_sel && (*row_sel)[i]) {
                    for (size_t j = 0; j < d; ++j) xrow_[j] = blended_entry(i, j);
                } else {
                    std::copy(base.row(i), base.row(i) + d, xrow_.begin());
                }
                double* ti = t_buf_.row(i);
                if (bias) {
                    std::copy(bias->begin(), bias->end(), ti);
                } else {
                    std::fill(ti, ti + w.cols, 0.0);
                }
                for (size_t j = 0; j < d; ++j) {
                    const double xij = xrow_[j];
                    if (xij == 0.0) continue;
                    const double* wj = w.row(j);
                    for (size_t k = 0; k < w.cols; ++k) ti[k] += xij * wj[k];
                }
            }
        } else {
            std::swap(h_prev_, h_buf_);
            for (uint32_t i : transform_rows_[l]) {
                const double* hi = h_prev_.row(i);
                double* ti = t_buf_.row(i);
                if (bias) {
                    std::copy(bias->begin(), bias->end(), ti);
                } else {
                    std::fill(ti, ti + w.cols, 0.0);
                }
                for (size_t j = 0; j < w.rows; ++j) {
                    const double xij = hi[j];
                    if (xij == 0.0) continue;
                    const double* wj = w.row(j);
                    for (size_t k = 0; k < w.cols; ++k) ti[k] += xij * wj[k];
                }
            }
        }
        const bool relu = stacked || l + 1 < layers.size();
        for (uint32_t i : aggregate_rows_[l]) {
            double* hi = h_buf_.row(i);
            std::fill(hi, hi + w.cols, 0.0);
            for (uint32_t e = adj_.row_ptr[i]; e < adj_.row_ptr[i + 1]; ++e) {
                const double c = adj_.coef[e];
                const double* tj = t_buf_.row(adj_.col_idx[e]);
                for (size_t k = 0; k < w.cols; ++k) hi[k] += c * tj[k];
            }
            if (relu) {
                for (size_t k = 0; k < w.cols; ++k) hi[k] = std::max(0.0, hi[k]);
            }
            if (stacked) {
                const auto& scale = bn_scale_[l];
                const auto& shift = bn_shift_[l];
                for (size_t k = 0; k < w.cols; ++k) hi[k] = hi[k] * scale[k] + shift[k];
            }
        }
        if (stacked) {
            std::copy(h_buf_.row(q), h_buf_.row(q) + m.hidden, stack.data() + l * m.hidden);
        }
    }

    if (stacked) {
        const Matrix& wout = m.weights.back();
        std::copy(m.biases.back().begin(), m.biases.back().end(), logits_.begin());
        for (size_t j = 0; j < wout.rows; ++j) {
            const double sj = stack[j];
            if (sj == 0.0) continue;
            const double* wj = wout.row(j);
            for (size_t k = 0; k < m.num_classes; ++k) logits_[k] += sj * wj[k];
        }
    } else {
        std::copy(h_buf_.row(q), h_buf_.row(q) + m.num_classes, logits_.begin());
    }

    if (logits_out) *logits_out = logits_;
    if (probs_out) {
        *probs_out = logits_;
        softmax_inplace(*probs_out);
    }
    return argmax_class(logits_);
}

uint32_t QueryForward::predict(const Matrix& features, std::vector<double>* probs_out,
                               std::vector<double>* logits_out) {
    return predict_blended(features, nullptr, nullptr, features, probs_out, logits_out);
}

Matrix gradient(const Model& model, const ComputationalGraph& cg, const Matrix& features,
                uint32_t target_class) {
    if (model.kind == ModelKind::RuleSum) {
        throw std::invalid_argument("gradient is not defined for the rule-sum model");
    }
    check_dims(model, features);
    if (target_class >= model.num_classes) {
        throw std::invalid_argument("target class out of range");
    }
    const size_t n = cg.size();
    const auto adj = NormalizedAdjacency::build(n, cg.local_edges);
    const auto rows = all_rows(n);
    const auto layers = conv_layers(model);
    const bool stacked = model.kind == ModelKind::Gcn3Stack;
    const uint32_t q = cg.query_local_index;

    // forward, keeping pre-activation Z per layer
    std::vector<Matrix> z(layers.size()), h(layers.size());
    const Matrix* cur = &features;
    for (size_t l = 0; l < layers.size(); ++l) {
        Matrix t(n, layers[l].out);
        linear_rows(*cur, *layers[l].w, layers[l].bias, rows, t);
        z[l] = Matrix(n, layers[l].out);
        aggregate(adj, t, rows, false, z[l]);
        h[l] = z[l];
        const bool relu = stacked || l + 1 < layers.size();
        if (relu) {
            for (double& x : h[l].data) x = std::max(0.0, x);
        }
        if (stacked) {
            std::vector<double> scale, shift;
            fold_batch_norm(model.batch_norm[l], scale, shift);
            apply_affine_rows(h[l], rows, scale, shift);
        }
        cur = &h[l];
    }

    // backward: G_H per layer, seeded from the target logit at the query node
    std::vector<Matrix> gh(layers.size());
    for (size_t l = 0; l < layers.size(); ++l) gh[l] = Matrix(n, layers[l].out);
    if (stacked) {
        const Matrix& wout = model.weights.back();
        for (size_t l = 0; l < 3; ++l) {
            for (size_t k = 0; k < model.hidden; ++k) {
                gh[l](q, k) = wout(l * model.hidden + k, target_class);
            }
        }
    } else {
        gh.back()(q, target_class) = 1.0;
    }

    Matrix gx;
    for (size_t l = layers.size(); l-- > 0;) {
        const bool relu = stacked || l + 1 < layers.size();
        Matrix gz = std::move(gh[l]);
        if (stacked) {
            // batch norm at inference is a per-channel affine map
            std::vector<double> scale, shift;
            fold_batch_norm(model.batch_norm[l], scale, shift);
            for (size_t i = 0; i < n; ++i) {
                double* gi = gz.row(i);
                for (size_t k = 0; k < layers[l].out; ++k) gi[k] *= scale[k];
            }
        }
        if (relu) {
            for (size_t i = 0; i < gz.data.size(); ++i) {
                if (z[l].data[i] <= 0.0) gz.data[i] = 0.0;
            }
        }
        // Z = A_hat (X W + b):  G_T = A_hat^T G_Z = A_hat G_Z;  G_prev += G_T W^T
        Matrix gt(n, layers[l].out);
        aggregate(adj, gz, rows, false, gt);
        Matrix gprev(n, layers[l].in);
        for (size_t i = 0; i < n; ++i) {
            const double* gti = gt.row(i);
            double* gpi = gprev.row(i);
            const Matrix& w = *layers[l].w;
            for (size_t j = 0; j < layers[l].in; ++j) {
                double acc = 0.0;
                const double* wj = w.row(j);
                for (size_t k = 0; k < layers[l].out; ++k) acc += gti[k] * wj[k];
                gpi[j] = acc;
            }
        }
        if (l == 0) {
            gx = std::move(gprev);
        } else {
            for (size_t i = 0; i < gh[l - 1].data.size(); ++i) gh[l - 1].data[i] += gprev.data[i];
        }
    }
    return gx;
}

namespace {

struct AdamState {
    std::vector<std::vector<double>> m, v;
    size_t t = 0;
};

void adam_step(std::vector<std::vector<double>*>& params,
               const std::vector<std::vector<double>>& grads, AdamState& state, double lr) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++state.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (size_t w = 0; w < params.size(); ++w) {
        for (size_t i = 0; i < params[w]->size(); ++i) {
            const double g = grads[w][i];
            double& m = state.m[w][i];
            double& v = state.v[w][i];
            m = beta1 * m + (1.0 - beta1) * g;
            v = beta2 * v + (1.0 - beta2) * g * g;
            (*params[w])[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
        }
    }
}

struct BnCache {
    std::vector<double> inv_std;  // per channel
    Matrix x_hat;                 // normalized pre-scale activations
};

}  // namespace

TrainResult train_gcn(Model initial, const Graph& graph, const FeatureMatrix& features,
                      const std::vector<int>& labels, const std::vector<NodeId>& train_mask,
                      const TrainConfig& config) {
    if (initial.kind == ModelKind::RuleSum) {
        throw std::invalid_argument("rule-sum model is not trainable");
    }
    check_dims(initial, features.values);
    if (train_mask.empty()) throw std::invalid_argument("empty training mask");
    for (NodeId t : train_mask) {
        if (t >= labels.size() || labels[t] < 0 ||
            static_cast<size_t>(labels[t]) >= initial.num_classes) {
            throw std::invalid_argument("train mask node " + std::to_string(t) +
                                        " has no valid label");
        }
    }

    TrainResult result;
    result.model = std::move(initial);
    Model& model = result.model;

    const size_t n = graph.num_nodes();
    const auto adj = NormalizedAdjacency::build(n, graph.edges());
    const auto rows = all_rows(n);
    const bool stacked = model.kind == ModelKind::Gcn3Stack;
    const size_t c = model.num_classes;

    // unified parameter list: weights, biases, batch-norm gamma/beta
    std::vector<std::vector<double>*> params;
    for (Matrix& w : model.weights) params.push_back(&w.data);
    for (auto& b : model.biases) params.push_back(&b);
    for (auto& bn : model.batch_norm) {
        params.push_back(&bn.gamma);
        params.push_back(&bn.beta);
    }
    AdamState adam;
    for (auto* p : params) {
        adam.m.emplace_back(p->size(), 0.0);
        adam.v.emplace_back(p->size(), 0.0);
    }

    auto snapshot_requested = [&](size_t epoch) {
        return std::find(config.snapshot_epochs.begin(), config.snapshot_epochs.end(), epoch) !=
               config.snapshot_epochs.end();
    };
    if (snapshot_requested(0)) result.snapshots.emplace_back(0, model);

    for (size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto layers = conv_layers(model);
        const size_t nl = layers.size();

        // forward with caches; batch norm uses current batch statistics
        std::vector<Matrix> z(nl), h(nl);
        std::vector<BnCache> bn_cache(nl);
        const Matrix* cur = &features.values;
        for (size_t l = 0; l < nl; ++l) {
            Matrix t(n, layers[l].out);
            linear_rows(*cur, *layers[l].w, layers[l].bias, rows, t);
            z[l] = Matrix(n, layers[l].out);
            aggregate(adj, t, rows, false, z[l]);
            h[l] = z[l];
            if (stacked || l + 1 < nl) {
                for (double& x : h[l].data) x = std::max(0.0, x);
            }
            if (stacked) {
                auto& bn = model.batch_norm[l];
                auto& cache = bn_cache[l];
                const size_t width = layers[l].out;
                cache.inv_std.resize(width);
                cache.x_hat = Matrix(n, width);
                for (size_t k = 0; k < width; ++k) {
                    double mean = 0.0;
                    for (size_t i = 0; i < n; ++i) mean += h[l](i, k);
                    mean /= static_cast<double>(n);
                    double var = 0.0;
                    for (size_t i = 0; i < n; ++i) {
                        const double dd = h[l](i, k) - mean;
                        var += dd * dd;
                    }
                    var /= static_cast<double>(n);
                    const double inv_std = 1.0 / std::sqrt(var + kBnEps);
                    cache.inv_std[k] = inv_std;
                    for (size_t i = 0; i < n; ++i) {
                        cache.x_hat(i, k) = (h[l](i, k) - mean) * inv_std;
                        h[l](i, k) = cache.x_hat(i, k) * bn.gamma[k] + bn.beta[k];
                    }
                    bn.running_mean[k] = (1.0 - kBnMomentum) * bn.running_mean[k] + kBnMomentum * mean;
                    const double unbiased = var * static_cast<double>(n) / std::max<double>(1.0, n - 1);
                    bn.running_var[k] = (1.0 - kBnMomentum) * bn.running_var[k] + kBnMomentum * unbiased;
                }
            }
            cur = &h[l];
        }
        Matrix stack;
        Matrix logits;
        if (stacked) {
            stack = Matrix(n, 3 * model.hidden);
            for (size_t l = 0; l < 3; ++l) {
                for (size_t i = 0; i < n; ++i) {
                    std::copy(h[l].row(i), h[l].row(i) + model.hidden,
                              stack.row(i) + l * model.hidden);
                }
            }
            logits = Matrix(n, c);
            linear_rows(stack, model.weights.back(), &model.biases.back(), rows, logits);
        } else {
            logits = h.back();
        }

        // cross-entropy over the train mask + L2 weight decay
        Matrix glogits(n, c);
        double loss = 0.0;
        size_t correct = 0;
        const double inv_t = 1.0 / static_cast<double>(train_mask.size());
        for (NodeId t : train_mask) {
            std::vector<double> probs(logits.row(t), logits.row(t) + c);
            softmax_inplace(probs);
            const int y = labels[t];
            loss -= std::log(std::max(probs[y], 1e-300)) * inv_t;
            if (argmax_class(probs) == static_cast<uint32_t>(y)) ++correct;
            for (size_t k = 0; k < c; ++k) {
                glogits(t, k) = (probs[k] - (static_cast<int>(k) == y ? 1.0 : 0.0)) * inv_t;
            }
        }
        for (auto* p : params) {
            for (double x : *p) loss += 0.5 * config.weight_decay * x * x;
        }
        if (!std::isfinite(loss)) {
            throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                     std::to_string(epoch));
        }
        result.train_accuracy.push_back(static_cast<double>(correct) / train_mask.size());

        // backward
        std::vector<std::vector<double>> grads;
        for (auto* p : params) grads.emplace_back(p->size(), 0.0);
        auto grad_of = [&](const std::vector<double>* param_ptr) -> std::vector<double>& {
            for (size_t i = 0; i < params.size(); ++i) {
                if (params[i] == param_ptr) return grads[i];
            }
            throw std::logic_error("unknown parameter");
        };

        std::vector<Matrix> ghs(nl);
        for (size_t l = 0; l < nl; ++l) ghs[l] = Matrix(n, layers[l].out);
        if (stacked) {
            const Matrix& wout = model.weights.back();
            auto& gwout = grad_of(&model.weights.back().data);
            auto& gbout = grad_of(&model.biases.back());
            for (size_t i = 0; i < n; ++i) {
                const double* gi = glogits.row(i);
                const double* si = stack.row(i);
                for (size_t k = 0; k < c; ++k) gbout[k] += gi[k];
                for (size_t j = 0; j < wout.rows; ++j) {
                    const double sij = si[j];
                    double acc = 0.0;
                    const double* wj = wout.row(j);
                    for (size_t k = 0; k < c; ++k) {
                        gwout[j * c + k] += sij * gi[k];
                        acc += gi[k] * wj[k];
                    }
                    ghs[j / model.hidden](i, j % model.hidden) += acc;
                }
            }
        } else {
            ghs.back() = glogits;
        }

        for (size_t l = nl; l-- > 0;) {
            const bool relu = stacked || l + 1 < nl;
            Matrix gz = std::move(ghs[l]);
            if (stacked) {
                auto& bn = model.batch_norm[l];
                auto& cache = bn_cache[l];
                auto& ggamma = grad_of(&bn.gamma);
                auto& gbeta = grad_of(&bn.beta);
                const size_t width = layers[l].out;
                for (size_t k = 0; k < width; ++k) {
                    double sum_dy = 0.0, sum_dy_xhat = 0.0;
                    for (size_t i = 0; i < n; ++i) {
                        const double dy = gz(i, k);
                        sum_dy += dy;
                        sum_dy_xhat += dy * cache.x_hat(i, k);
                    }
                    ggamma[k] += sum_dy_xhat;
                    gbeta[k] += sum_dy;
                    const double mean_dy = sum_dy / static_cast<double>(n);
                    const double mean_dy_xhat = sum_dy_xhat / static_cast<double>(n);
                    const double scale = bn.gamma[k] * cache.inv_std[k];
                    for (size_t i = 0; i < n; ++i) {
                        gz(i, k) = scale * (gz(i, k) - mean_dy - cache.x_hat(i, k) * mean_dy_xhat);
                    }
                }
            }
            if (relu) {
                for (size_t i = 0; i < gz.data.size(); ++i) {
                    if (z[l].data[i] <= 0.0) gz.data[i] = 0.0;
                }
            }
            Matrix gt(n, layers[l].out);
            aggregate(adj, gz, rows, false, gt);
            const Matrix& hin = l == 0 ? features.values : h[l - 1];
            auto& gw = grad_of(&model.weights[l].data);
            const size_t out_w = layers[l].out;
            for (size_t i = 0; i < n; ++i) {
                const double* hi = hin.row(i);
                const double* gti = gt.row(i);
                for (size_t j = 0; j < layers[l].in; ++j) {
                    const double hij = hi[j];
                    if (hij == 0.0) continue;
                    double* gwj = gw.data() + j * out_w;
                    for (size_t k = 0; k < out_w; ++k) gwj[k] += hij * gti[k];
                }
            }
            if (layers[l].bias) {
                auto& gb = grad_of(&model.biases[l]);
                for (size_t i = 0; i < n; ++i) {
                    const double* gti = gt.row(i);
                    for (size_t k = 0; k < out_w; ++k) gb[k] += gti[k];
                }
            }
            if (l > 0) {
                const Matrix& w = *layers[l].w;
                for (size_t i = 0; i < n; ++i) {
                    const double* gti = gt.row(i);
                    double* gp = ghs[l - 1].row(i);
                    for (size_t j = 0; j < layers[l].in; ++j) {
                        double acc = 0.0;
                        const double* wj = w.row(j);
                        for (size_t k = 0; k < out_w; ++k) acc += gti[k] * wj[k];
                        gp[j] += acc;
                    }
                }
            }
        }

        for (size_t w = 0; w < params.size(); ++w) {
            for (size_t i = 0; i < grads[w].size(); ++i) {
                grads[w][i] += config.weight_decay * (*params[w])[i];
            }
        }
        adam_step(params, grads, adam, config.learning_rate);

        if (snapshot_requested(epoch)) result.snapshots.emplace_back(epoch, model);
    }
    return result;
}

double evaluate_accuracy(const Model& model, const Graph& graph, const FeatureMatrix& features,
                         const std::vector<int>& labels, const std::vector<NodeId>& mask) {
    const auto preds = forward(model, graph, features.values);
    size_t correct = 0;
    for (NodeId v : mask) {
        if (preds[v].predicted_class == static_cast<uint32_t>(labels[v])) ++correct;
    }
    return mask.empty() ? 0.0 : static_cast<double>(correct) / mask.size();
}

namespace {
constexpr int kModelFormatVersion = 1;

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (size_t i = 0; i < m.rows; ++i) {
        rows.push_back(std::vector<double>(m.row(i), m.row(i) + m.cols));
    }
    return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
    const size_t rows = j.size();
    const size_t cols = rows == 0 ? 0 : j[0].size();
    Matrix m(rows, cols);
    for (size_t i = 0; i < rows; ++i) {
        if (j[i].size() != cols) throw std::runtime_error("ragged weight matrix in model file");
        for (size_t k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
    }
    return m;
}
}  // namespace

void save_model(const Model& model, const std::string& path) {
    nlohmann::json j;
    j["format_version"] = kModelFormatVersion;
    j["kind"] = to_string(model.kind);
    j["in_dim"] = model.in_dim;
    j["hidden"] = model.hidden;
    j["num_classes"] = model.num_classes;
    j["hops"] = model.hops;
    j["theta"] = model.theta;
    j["weights"] = nlohmann::json::array();
    for (const Matrix& w : model.weights) j["weights"].push_back(matrix_to_json(w));
    if (!model.biases.empty()) j["biases"] = model.biases;
    if (!model.batch_norm.empty()) {
        j["batch_norm"] = nlohmann::json::array();
        for (const auto& bn : model.batch_norm) {
            j["batch_norm"].push_back({{"gamma", bn.gamma},
                                       {"beta", bn.beta},
                                       {"running_mean", bn.running_mean},
                                       {"running_var", bn.running_var}});
        }
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model file: " + path);
    out << j.dump(1) << "\n";
}

Model load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed model file " + path + ": " + e.what());
    }
    if (!j.contains("format_version") || j["format_version"].get<int>() != kModelFormatVersion) {
        throw std::runtime_error("model file " + path + ": unsupported format version");
    }
    Model m;
    m.kind = model_kind_from_string(j["kind"].get<std::string>());
    m.in_dim = j["in_dim"].get<size_t>();
    m.hidden = j["hidden"].get<size_t>();
    m.num_classes = j["num_classes"].get<size_t>();
    m.hops = j["hops"].get<uint32_t>();
    m.theta = j["theta"].get<double>();
    for (const auto& wj : j["weights"]) m.weights.push_back(matrix_from_json(wj));
    if (j.contains("biases")) {
        m.biases = j["biases"].get<std::vector<std::vector<double>>>();
    }
    if (j.contains("batch_norm")) {
        for (const auto& bj : j["batch_norm"]) {
            BatchNormParams bn;
            bn.gamma = bj["gamma"].get<std::vector<double>>();
            bn.beta = bj["beta"].get<std::vector<double>>();
            bn.running_mean = bj["running_mean"].get<std::vector<double>>();
            bn.running_var = bj["running_var"].get<std::vector<double>>();
            m.batch_norm.push_back(std::move(bn));
        }
    }

    auto expect = [&](size_t idx, size_t rows, size_t cols) {
        if (m.weights[idx].rows != rows || m.weights[idx].cols != cols) {
            throw std::runtime_error("model file " + path + ": weight matrix " +
                                     std::to_string(idx) + " has wrong dimensions");
        }
    };
    if (m.kind == ModelKind::Gcn2) {
        if (m.weights.size() != 2) throw std::runtime_error("model file " + path + ": expected 2 weight matrices");
        expect(0, m.in_dim, m.hidden);
        expect(1, m.hidden, m.num_classes);
    } else if (m.kind == ModelKind::Gcn3Stack) {
        if (m.weights.size() != 4) throw std::runtime_error("model file " + path + ": expected 4 weight matrices");
        expect(0, m.in_dim, m.hidden);
        expect(1, m.hidden, m.hidden);
        expect(2, m.hidden, m.hidden);
        expect(3, 3 * m.hidden, m.num_classes);
        if (m.biases.size() != 4 || m.batch_norm.size() != 3) {
            throw std::runtime_error("model file " + path + ": missing bias or batch-norm blocks");
        }
        for (const auto& bn : m.batch_norm) {
            if (bn.gamma.size() != m.hidden || bn.beta.size() != m.hidden ||
                bn.running_mean.size() != m.hidden || bn.running_var.size() != m.hidden) {
                throw std::runtime_error("model file " + path + ": batch-norm block has wrong width");
            }
        }
    } else if (!m.weights.empty()) {
        throw std::runtime_error("model file " + path + ": rule-sum model cannot carry weights");
    }
    return m;
}

}  // namespace zorro
