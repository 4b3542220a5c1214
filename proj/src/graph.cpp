#include "zorro/graph.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace zorro {

void Graph::add_edge(NodeId u, NodeId v) {
    if (u == v) return;
    if (u >= num_nodes() || v >= num_nodes()) {
        throw std::out_of_range("edge endpoint " + std::to_string(std::max(u, v)) +
                                " out of range for graph with " + std::to_string(num_nodes()) + " nodes");
    }
    if (has_edge(u, v)) return;
    adj_[u].push_back(v);
    adj_[v].push_back(u);
    edges_.emplace_back(std::min(u, v), std::max(u, v));
}

bool Graph::has_edge(NodeId u, NodeId v) const {
    const auto& nu = adj_[u];
    return std::find(nu.begin(), nu.end(), v) != nu.end();
}

void Graph::remove_edge(NodeId u, NodeId v) {
    auto erase_from = [](std::vector<NodeId>& vec, NodeId x) {
        vec.erase(std::remove(vec.begin(), vec.end(), x), vec.end());
    };
    erase_from(adj_[u], v);
    erase_from(adj_[v], u);
    Edge e{std::min(u, v), std::max(u, v)};
    edges_.erase(std::remove(edges_.begin(), edges_.end(), e), edges_.end());
}

std::optional<uint32_t> ComputationalGraph::local_index_of(NodeId global) const {
    auto it = std::lower_bound(local_nodes.begin(), local_nodes.end(), global);
    if (it == local_nodes.end() || *it != global) return std::nullopt;
    return static_cast<uint32_t>(it - local_nodes.begin());
}

ComputationalGraph computational_graph(const Graph& graph, NodeId node, uint32_t hops) {
    if (node >= graph.num_nodes()) {
        throw std::out_of_range("query node " + std::to_string(node) + " out of range");
    }
    if (hops < 1) throw std::invalid_argument("hop count must be >= 1");

    constexpr uint32_t kUnseen = UINT32_MAX;
    std::vector<uint32_t> depth(graph.num_nodes(), kUnseen);
    std::deque<NodeId> queue{node};
    depth[node] = 0;
    while (!queue.empty()) {
        NodeId u = queue.front();
        queue.pop_front();
        if (depth[u] == hops) continue;
        for (NodeId w : graph.neighbors(u)) {
            if (depth[w] == kUnseen) {
                depth[w] = depth[u] + 1;
                queue.push_back(w);
            }
        }
    }

    ComputationalGraph cg;
    cg.parent = &graph;
    cg.query_node = node;
    cg.hops = hops;
    for (NodeId v = 0; v < graph.num_nodes(); ++v) {
        if (depth[v] != kUnseen) cg.local_nodes.push_back(v);
    }
    cg.hop_distance.reserve(cg.local_nodes.size());
    for (NodeId v : cg.local_nodes) cg.hop_distance.push_back(depth[v]);
    cg.query_local_index = *cg.local_index_of(node);

    for (uint32_t li = 0; li < cg.local_nodes.size(); ++li) {
        for (NodeId w : graph.neighbors(cg.local_nodes[li])) {
            auto lw = cg.local_index_of(w);
            if (lw && *lw > li) cg.local_edges.emplace_back(li, *lw);
        }
    }
    std::sort(cg.local_edges.begin(), cg.local_edges.end());
    return cg;
}

Graph load_graph(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open graph file: " + path);

    std::vector<Edge> pending;
    std::optional<size_t> declared_nodes;
    NodeId max_seen = 0;
    bool any_edge = false;

    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ls(line);
        std::string first;
        if (!(ls >> first)) continue;
        if (first.rfind("nodes=", 0) == 0) {
            declared_nodes = std::stoull(first.substr(6));
            continue;
        }
        long long u, v;
        try {
            u = std::stoll(first);
        } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected node index, got '" + first + "'");
        }
        if (!(ls >> v)) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": missing second endpoint");
        }
        if (u < 0 || v < 0) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": negative node index");
        }
        pending.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
        max_seen = std::max({max_seen, static_cast<NodeId>(u), static_cast<NodeId>(v)});
        any_edge = true;
    }

    size_t n = declared_nodes.value_or(any_edge ? max_seen + 1 : 0);
    if (declared_nodes && any_edge && max_seen >= *declared_nodes) {
        throw std::runtime_error(path + ": edge references node " + std::to_string(max_seen) +
                                 " but header declares nodes=" + std::to_string(*declared_nodes));
    }
    Graph g(n);
    for (auto [u, v] : pending) g.add_edge(u, v);
    return g;
}

void save_graph(const Graph& graph, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write graph file: " + path);
    out << "nodes=" << graph.num_nodes() << "\n";
    for (auto [u, v] : graph.edges()) out << u << " " << v << "\n";
}

}  // namespace zorro
