#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace zorro {

using NodeId = uint32_t;
using Edge = std::pair<NodeId, NodeId>;

// Undirected, unweighted graph over nodes 0..num_nodes-1. Edges are stored
// once with u < v; adjacency lists hold both directions. Immutable after
// construction apart from add_edge, which callers use only while building.
class Graph {
public:
    Graph() = default;
    explicit Graph(size_t num_nodes) : adj_(num_nodes) {}

    size_t num_nodes() const { return adj_.size(); }
    size_t num_edges() const { return edges_.size(); }

    // Symmetrizes and deduplicates; self-loops are dropped (the GCN adds its
    // own transient self-loops during normalization).
    void add_edge(NodeId u, NodeId v);
    bool has_edge(NodeId u, NodeId v) const;
    void remove_edge(NodeId u, NodeId v);

    const std::vector<NodeId>& neighbors(NodeId v) const { return adj_[v]; }
    const std::vector<Edge>& edges() const { return edges_; }

private:
    std::vector<std::vector<NodeId>> adj_;
    std::vector<Edge> edges_;  // canonical (u < v)
};

// L-hop induced subgraph around a query node. local_nodes is sorted by
// ascending global index, which fixes all downstream tie-breaking.
struct ComputationalGraph {
    const Graph* parent = nullptr;
    NodeId query_node = 0;
    std::vector<NodeId> local_nodes;          // global indices, ascending
    std::vector<Edge> local_edges;            // local indices
    std::vector<uint32_t> hop_distance;       // per local node, BFS depth from query
    uint32_t query_local_index = 0;
    uint32_t hops = 0;

    size_t size() const { return local_nodes.size(); }
    std::optional<uint32_t> local_index_of(NodeId global) const;
};

ComputationalGraph computational_graph(const Graph& graph, NodeId node, uint32_t hops);

// Edge-list text format: optional `nodes=<N>` header, one `u v` pair per
// line, `#` comments allowed.
Graph load_graph(const std::string& path);
void save_graph(const Graph& graph, const std::string& path);

}  // namespace zorro
