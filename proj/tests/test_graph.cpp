#include <algorithm>
#include <fstream>
#include <set>

#include "common.hpp"
#include "doctest.h"
#include "zorro/graph.hpp"

using namespace zorro;

namespace {

// Independent oracle: plain breadth-first search truncated at depth L.
std::set<NodeId> bfs_oracle(const Graph& g, NodeId start, uint32_t depth_limit) {
    std::set<NodeId> seen{start};
    std::vector<NodeId> frontier{start};
    for (uint32_t depth = 0; depth < depth_limit; ++depth) {
        std::vector<NodeId> next;
        for (NodeId u : frontier) {
            for (NodeId w : g.neighbors(u)) {
                if (seen.insert(w).second) next.push_back(w);
            }
        }
        frontier = std::move(next);
    }
    return seen;
}

std::string write_temp(const std::string& name, const std::string& content) {
    std::string path = "/tmp/zorro_test_" + name;
    std::ofstream out(path);
    out << content;
    return path;
}

}  // namespace

TEST_CASE("star graph 1-hop neighborhood covers all leaves") {
    Graph g(4);  // center 2, leaves 0, 1, 3
    g.add_edge(2, 0);
    g.add_edge(2, 1);
    g.add_edge(2, 3);
    auto cg = computational_graph(g, 2, 1);
    CHECK(cg.local_nodes == std::vector<NodeId>{0, 1, 2, 3});
    CHECK(cg.query_local_index == 2);
}

TEST_CASE("path endpoint 2-hop neighborhood") {
    Graph g(4);
    g.add_edge(0, 1);
    g.add_edge(1, 2);
    g.add_edge(2, 3);
    auto cg = computational_graph(g, 0, 2);
    CHECK(cg.local_nodes == std::vector<NodeId>{0, 1, 2});
}

TEST_CASE("toy graph 2-hop of v1 spans all four nodes") {
    auto g = zorro::testing::toy_graph();
    auto cg = computational_graph(g, 0, 2);
    CHECK(cg.local_nodes == std::vector<NodeId>{0, 1, 2, 3});
    CHECK(cg.hop_distance == std::vector<uint32_t>{0, 1, 1, 2});
}

TEST_CASE("computational graph edges are the induced edge set") {
    auto rng = RngStream(7);
    for (int trial = 0; trial < 20; ++trial) {
        auto g = zorro::testing::random_graph(12, 0.2, rng);
        auto cg = computational_graph(g, static_cast<NodeId>(rng.index(12)), 2);
        for (auto [lu, lv] : cg.local_edges) {
            CHECK(g.has_edge(cg.local_nodes[lu], cg.local_nodes[lv]));
        }
        size_t induced = 0;
        for (auto [u, v] : g.edges()) {
            if (cg.local_index_of(u) && cg.local_index_of(v)) ++induced;
        }
        CHECK(cg.local_edges.size() == induced);
    }
}

TEST_CASE("computational graph equals truncated BFS oracle and is monotone in L") {
    auto rng = RngStream(13);
    for (int trial = 0; trial < 30; ++trial) {
        auto g = zorro::testing::random_graph(15, 0.15, rng);
        const NodeId q = static_cast<NodeId>(rng.index(15));
        for (uint32_t hops = 1; hops <= 3; ++hops) {
            auto cg = computational_graph(g, q, hops);
            std::set<NodeId> got(cg.local_nodes.begin(), cg.local_nodes.end());
            CHECK(got == bfs_oracle(g, q, hops));
            CHECK(std::is_sorted(cg.local_nodes.begin(), cg.local_nodes.end()));

            auto bigger = computational_graph(g, q, hops + 1);
            CHECK(std::includes(bigger.local_nodes.begin(), bigger.local_nodes.end(),
                                cg.local_nodes.begin(), cg.local_nodes.end()));
        }
    }
}

TEST_CASE("identical inputs give identical orderings") {
    auto rng = RngStream(3);
    auto g = zorro::testing::random_graph(20, 0.15, rng);
    auto a = computational_graph(g, 5, 2);
    auto b = computational_graph(g, 5, 2);
    CHECK(a.local_nodes == b.local_nodes);
    CHECK(a.local_edges == b.local_edges);
}

TEST_CASE("isolated query node yields a single-node computational graph") {
    Graph g(3);
    g.add_edge(1, 2);
    auto cg = computational_graph(g, 0, 2);
    CHECK(cg.local_nodes == std::vector<NodeId>{0});
    CHECK(cg.query_local_index == 0);
    CHECK(cg.local_edges.empty());
}

TEST_CASE("invalid query node is rejected") {
    Graph g(3);
    CHECK_THROWS_AS(computational_graph(g, 5, 1), std::out_of_range);
}

TEST_CASE("edge list loading") {
    SUBCASE("two-edge path") {
        auto g = load_graph(write_temp("path.txt", "0 1\n1 2\n"));
        CHECK(g.num_nodes() == 3);
        CHECK(g.num_edges() == 2);
    }
    SUBCASE("duplicate directed pair collapses to one undirected edge") {
        auto g = load_graph(write_temp("dup.txt", "0 1\n1 0\n"));
        CHECK(g.num_edges() == 1);
    }
    SUBCASE("header only gives isolated nodes") {
        auto g = load_graph(write_temp("iso.txt", "nodes=5\n"));
        CHECK(g.num_nodes() == 5);
        CHECK(g.num_edges() == 0);
    }
    SUBCASE("comments and blank lines are ignored") {
        auto g = load_graph(write_temp("com.txt", "# a comment\nnodes=3\n0 1 # trailing\n\n"));
        CHECK(g.num_nodes() == 3);
        CHECK(g.num_edges() == 1);
    }
    SUBCASE("parse error reports the line number") {
        auto path = write_temp("bad.txt", "0 1\nfoo bar\n");
        CHECK_THROWS_WITH_AS(load_graph(path), doctest::Contains(":2"), std::runtime_error);
    }
    SUBCASE("dangling index against declared node count") {
        auto path = write_temp("dangle.txt", "nodes=2\n0 5\n");
        CHECK_THROWS_AS(load_graph(path), std::runtime_error);
    }
    SUBCASE("save and reload round-trips") {
        auto rng = RngStream(11);
        auto g = zorro::testing::random_graph(10, 0.3, rng);
        auto path = write_temp("round.txt", "");
        save_graph(g, path);
        auto g2 = load_graph(path);
        CHECK(g2.num_nodes() == g.num_nodes());
        CHECK(g2.edges() == g.edges());
    }
}
