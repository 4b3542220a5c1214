#pragma once

#include <vector>

#include "zorro/gnn.hpp"
#include "zorro/graph.hpp"

namespace zorro::testing {

// Four-node toy: edges v1-v2, v1-v3, v3-v4 so the 2-hop neighborhood of v1
// covers the whole graph. The rule-sum model classifies v1 as 1 iff the sum
// of all four scalar features is >= 0.
inline Graph toy_graph() {
    Graph g(4);
    g.add_edge(0, 1);
    g.add_edge(0, 2);
    g.add_edge(2, 3);
    return g;
}

// Integer feature domain of the toy, -2..3.
inline std::vector<double> toy_domain() { return {-2, -1, 0, 1, 2, 3}; }

// Scalar features (1, -1, 2, 1): the {v1, v3} selection pins a sum of 3, so
// exactly one of the 36 noise assignments (-2, -2) flips the prediction and
// the exact fidelity of {v1, v3} is 35/36.
inline FeatureMatrix toy_features_unit() {
    Matrix x(4, 1);
    x(0, 0) = 1;
    x(1, 0) = -1;
    x(2, 0) = 2;
    x(3, 0) = 1;
    auto fm = make_features(std::move(x));
    fm.column_pools = std::make_shared<const std::vector<std::vector<double>>>(
        std::vector<std::vector<double>>{toy_domain()});
    return fm;
}

// Scalar features (3, -1, 2, 1), the variant used for the forward example.
inline FeatureMatrix toy_features_three() {
    Matrix x(4, 1);
    x(0, 0) = 3;
    x(1, 0) = -1;
    x(2, 0) = 2;
    x(3, 0) = 1;
    auto fm = make_features(std::move(x));
    fm.column_pools = std::make_shared<const std::vector<std::vector<double>>>(
        std::vector<std::vector<double>>{toy_domain()});
    return fm;
}

// Random connected-ish undirected graph on n nodes.
inline Graph random_graph(size_t n, double edge_prob, RngStream& rng) {
    Graph g(n);
    for (NodeId u = 0; u < n; ++u) {
        for (NodeId v = u + 1; v < n; ++v) {
            if (rng.uniform01() < edge_prob) g.add_edge(u, v);
        }
    }
    return g;
}

inline Matrix random_matrix(size_t rows, size_t cols, RngStream& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (double& x : m.data) x = (2.0 * rng.uniform01() - 1.0) * scale;
    return m;
}

}  // namespace zorro::testing
