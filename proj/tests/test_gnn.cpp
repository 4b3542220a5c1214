#include <cmath>
#include <fstream>

#include "common.hpp"
#include "doctest.h"
#include "zorro/gnn.hpp"

using namespace zorro;
using namespace zorro::testing;

TEST_CASE("rule-sum classifies the toy query by the sign of the feature sum") {
    auto g = toy_graph();
    auto cg = computational_graph(g, 0, 2);
    auto model = make_rule_sum(0.0, 2);

    auto x = toy_features_three();  // (3, -1, 2, 1) sums to 5
    CHECK(forward(model, cg, x.values)[cg.query_local_index].predicted_class == 1);

    Matrix still_positive(4, 1);  // (3, 0, 2, -2) sums to 3
    still_positive(0, 0) = 3;
    still_positive(1, 0) = 0;
    still_positive(2, 0) = 2;
    still_positive(3, 0) = -2;
    CHECK(forward(model, cg, still_positive)[cg.query_local_index].predicted_class == 1);

    Matrix negative(4, 1);  // (3, 0, -10, 0) sums to -7
    negative(0, 0) = 3;
    negative(1, 0) = 0;
    negative(2, 0) = -10;
    negative(3, 0) = 0;
    CHECK(forward(model, cg, negative)[cg.query_local_index].predicted_class == 0);
}

TEST_CASE("zero-weight gcn2 outputs the uniform distribution") {
    auto g = toy_graph();
    auto cg = computational_graph(g, 0, 2);
    auto model = make_gcn2(3, 4, 5, RngStream(1));
    for (auto& w : model.weights) w.fill(0.0);

    auto rng = RngStream(2);
    auto x = random_matrix(4, 3, rng);
    for (const auto& pred : forward(model, cg, x)) {
        for (double p : pred.class_probs) CHECK(p == doctest::Approx(0.2).epsilon(1e-12));
        CHECK(pred.predicted_class == 0);  // tie broken by lowest index
    }
}

TEST_CASE("softmax rows are positive and sum to one") {
    auto rng = RngStream(5);
    auto g = random_graph(8, 0.3, rng);
    auto cg = computational_graph(g, 1, 2);
    auto model = make_gcn2(4, 6, 3, RngStream(9));
    auto x = random_matrix(cg.size(), 4, rng);
    for (const auto& pred : forward(model, cg, x)) {
        double sum = 0.0;
        for (double p : pred.class_probs) {
            CHECK(p > 0.0);
            sum += p;
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("forward is pure: identical inputs give bitwise-identical outputs") {
    auto rng = RngStream(17);
    auto g = random_graph(9, 0.3, rng);
    auto cg = computational_graph(g, 0, 2);
    auto model = make_gcn2(5, 8, 4, RngStream(23));
    auto x = random_matrix(cg.size(), 5, rng);
    auto a = forward(model, cg, x);
    auto b = forward(model, cg, x);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].class_probs == b[i].class_probs);
        CHECK(a[i].predicted_class == b[i].predicted_class);
    }
}

TEST_CASE("permutation equivariance") {
    auto rng = RngStream(29);
    for (ModelKind kind : {ModelKind::Gcn2, ModelKind::Gcn3Stack}) {
        const size_t n = 7, d = 3;
        auto g = random_graph(n, 0.4, rng);
        Model model = kind == ModelKind::Gcn2 ? make_gcn2(d, 5, 3, RngStream(31))
                                              : make_gcn3_stack(d, 5, 3, RngStream(31));
        auto x = random_matrix(n, d, rng);

        std::vector<NodeId> perm(n);
        for (size_t i = 0; i < n; ++i) perm[i] = static_cast<NodeId>((i + 3) % n);
        std::vector<Edge> edges_p;
        for (auto [u, v] : g.edges()) edges_p.emplace_back(perm[u], perm[v]);
        Matrix x_p(n, d);
        for (size_t i = 0; i < n; ++i) {
            std::copy(x.row(i), x.row(i) + d, x_p.row(perm[i]));
        }

        auto base = forward(model, n, g.edges(), x);
        auto permuted = forward(model, n, edges_p, x_p);
        for (size_t i = 0; i < n; ++i) {
            CHECK(permuted[perm[i]].predicted_class == base[i].predicted_class);
            for (size_t k = 0; k < 3; ++k) {
                CHECK(permuted[perm[i]].class_probs[k] ==
                      doctest::Approx(base[i].class_probs[k]).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("query-only forward agrees with the full forward pass") {
    auto rng = RngStream(37);
    for (int trial = 0; trial < 25; ++trial) {
        const size_t n = 4 + rng.index(8), d = 1 + rng.index(4);
        auto g = random_graph(n, 0.35, rng);
        const NodeId q = static_cast<NodeId>(rng.index(n));
        for (ModelKind kind : {ModelKind::Gcn2, ModelKind::Gcn3Stack}) {
            Model model = kind == ModelKind::Gcn2
                              ? make_gcn2(d, 4, 3, RngStream(trial))
                              : make_gcn3_stack(d, 4, 3, RngStream(trial));
            auto cg = computational_graph(g, q, model.hops);
            auto x = random_matrix(cg.size(), d, rng);
            auto full = forward(model, cg, x)[cg.query_local_index];
            QueryForward qf(model, cg);
            std::vector<double> probs;
            const uint32_t cls = qf.predict(x, &probs);
            CHECK(cls == full.predicted_class);
            for (size_t k = 0; k < probs.size(); ++k) {
                CHECK(probs[k] == doctest::Approx(full.class_probs[k]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("zero-weight gcn2 has a zero gradient") {
    auto g = toy_graph();
    auto cg = computational_graph(g, 0, 2);
    auto model = make_gcn2(2, 3, 2, RngStream(1));
    for (auto& w : model.weights) w.fill(0.0);
    auto rng = RngStream(2);
    auto x = random_matrix(4, 2, rng);
    auto grad = gradient(model, cg, x, 0);
    for (double v : grad.data) CHECK(v == 0.0);
}

TEST_CASE("gradient on the 1x1 chain equals the weight path") {
    Graph g(1);
    auto cg = computational_graph(g, 0, 2);
    auto model = make_gcn2(1, 1, 2, RngStream(3));
    model.weights[0](0, 0) = 0.7;
    model.weights[1](0, 0) = 0.4;
    model.weights[1](0, 1) = -0.3;
    Matrix x(1, 1);
    x(0, 0) = 2.0;  // positive pre-activation keeps the ReLU open
    // single node: A_hat is the 1x1 identity, logit_c = relu(x * w1) * w2_c
    auto grad0 = gradient(model, cg, x, 0);
    CHECK(grad0(0, 0) == doctest::Approx(0.7 * 0.4));
    auto grad1 = gradient(model, cg, x, 1);
    CHECK(grad1(0, 0) == doctest::Approx(0.7 * -0.3));
}

TEST_CASE("gradient of rule-sum is rejected") {
    auto g = toy_graph();
    auto cg = computational_graph(g, 0, 2);
    auto model = make_rule_sum(0.0, 2);
    Matrix x(4, 1);
    CHECK_THROWS_AS(gradient(model, cg, x, 0), std::invalid_argument);
}

TEST_CASE("analytic gradient matches central finite differences") {
    auto rng = RngStream(41);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const size_t n = 2 + rng.index(9), d = 1 + rng.index(8);
        auto g = random_graph(n, 0.4, rng);
        const NodeId q = static_cast<NodeId>(rng.index(n));
        const bool stacked = trial % 3 == 0;
        Model model = stacked ? make_gcn3_stack(d, 4, 3, RngStream(100 + trial))
                              : make_gcn2(d, 4, 3, RngStream(100 + trial));
        auto cg = computational_graph(g, q, model.hops);
        auto x = random_matrix(cg.size(), d, rng);
        const uint32_t target = static_cast<uint32_t>(rng.index(3));

        auto analytic = gradient(model, cg, x, target);

        // central finite differences of the pre-softmax logit
        QueryForward qf(model, cg);
        auto logit = [&](const Matrix& input) {
            std::vector<double> logits;
            qf.predict(input, nullptr, &logits);
            return logits[target];
        };
        const double step = 1e-4;
        double max_rel = 0.0;
        for (size_t i = 0; i < x.rows; ++i) {
            for (size_t j = 0; j < x.cols; ++j) {
                Matrix xp = x, xm = x;
                xp(i, j) += step;
                xm(i, j) -= step;
                const double fd = (logit(xp) - logit(xm)) / (2 * step);
                const double scale = std::max({std::abs(fd), std::abs(analytic(i, j)), 1e-6});
                max_rel = std::max(max_rel, std::abs(fd - analytic(i, j)) / scale);
            }
        }
        worst = std::max(worst, max_rel);
    }
    CHECK(worst <= 1e-3);
}

TEST_CASE("training fits a linearly separable toy") {
    Graph g(4);  // two disconnected pairs
    g.add_edge(0, 1);
    g.add_edge(2, 3);
    Matrix x(4, 2);
    x(0, 0) = 1.0;
    x(1, 0) = 0.9;
    x(2, 1) = 1.0;
    x(3, 1) = 0.8;
    auto features = make_features(std::move(x));
    std::vector<int> labels{0, 0, 1, 1};
    std::vector<NodeId> mask{0, 1, 2, 3};

    TrainConfig tc;
    tc.epochs = 200;
    tc.learning_rate = 0.01;
    tc.weight_decay = 0.005;
    auto result = train_gcn(make_gcn2(2, 8, 2, RngStream(0)), g, features, labels, mask, tc);
    CHECK(result.train_accuracy.back() == 1.0);
}

TEST_CASE("zero epochs returns the initialization unchanged") {
    Graph g(2);
    g.add_edge(0, 1);
    auto features = make_features(Matrix(2, 3, 0.5));
    std::vector<int> labels{0, 1};
    TrainConfig tc;
    tc.epochs = 0;
    auto init = make_gcn2(3, 4, 2, RngStream(77));
    auto before = init.weights;
    auto result = train_gcn(std::move(init), g, features, labels, {0, 1}, tc);
    CHECK(result.model.weights == before);
}

TEST_CASE("training is reproducible run-to-run") {
    auto rng = RngStream(53);
    auto g = random_graph(10, 0.3, rng);
    auto features = make_features(random_matrix(10, 4, rng));
    std::vector<int> labels;
    for (size_t i = 0; i < 10; ++i) labels.push_back(static_cast<int>(i % 3));
    std::vector<NodeId> mask{0, 1, 2, 3, 4, 5, 6, 7};
    TrainConfig tc;
    tc.epochs = 50;
    tc.snapshot_epochs = {10, 50};

    auto a = train_gcn(make_gcn3_stack(4, 6, 3, RngStream(5)), g, features, labels, mask, tc);
    auto b = train_gcn(make_gcn3_stack(4, 6, 3, RngStream(5)), g, features, labels, mask, tc);
    for (size_t w = 0; w < a.model.weights.size(); ++w) {
        CHECK(a.model.weights[w] == b.model.weights[w]);
    }
    CHECK(a.snapshots.size() == 2);
    CHECK(a.snapshots[0].second.weights == b.snapshots[0].second.weights);
}

TEST_CASE("model save/load round-trip preserves forward outputs bit-exactly") {
    auto rng = RngStream(61);
    auto g = random_graph(8, 0.3, rng);
    auto cg = computational_graph(g, 0, 2);
    auto model = make_gcn2(4, 6, 3, RngStream(19));
    auto x = random_matrix(cg.size(), 4, rng);

    const std::string path = "/tmp/zorro_test_model.json";
    save_model(model, path);
    auto loaded = load_model(path);
    auto a = forward(model, cg, x);
    auto b = forward(loaded, cg, x);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].class_probs == b[i].class_probs);
}

TEST_CASE("model file with wrong dimensions is rejected") {
    auto model = make_gcn2(4, 6, 3, RngStream(19));
    const std::string path = "/tmp/zorro_test_model_bad.json";
    save_model(model, path);
    // corrupt the declared input dimension
    {
        std::ifstream in(path);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        auto pos = text.find("\"in_dim\": 4");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, 11, "\"in_dim\": 9");
        std::ofstream out(path);
        out << text;
    }
    CHECK_THROWS_AS(load_model(path), std::runtime_error);
}

TEST_CASE("loaded rule-sum specification reproduces the toy behavior") {
    auto model = make_rule_sum(0.0, 2);
    const std::string path = "/tmp/zorro_test_rule.json";
    save_model(model, path);
    auto loaded = load_model(path);
    auto g = toy_graph();
    auto cg = computational_graph(g, 0, 2);
    auto x = toy_features_three();
    CHECK(forward(loaded, cg, x.values)[cg.query_local_index].predicted_class == 1);
}
