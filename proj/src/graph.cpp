#include "stdde/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <utility>

#include "stdde/error.hpp"

namespace stdde {

TrafficGraph build_graph(int node_count, const std::vector<Edge>& raw_edges) {
  if (node_count <= 0) throw InputError("graph needs at least one node");

  TrafficGraph g;
  g.node_count_ = node_count;
  std::set<std::pair<int, int>> seen;
  std::vector<bool> has_self(node_count, false);

  for (const Edge& e : raw_edges) {
    if (e.src < 0 || e.src >= node_count || e.dst < 0 || e.dst >= node_count) {
      throw InputError("edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) +
                       ") references a node outside [0," + std::to_string(node_count) + ")");
    }
    if (!std::isfinite(e.weight) || e.weight < 0.0) {
      throw InputError("edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) +
                       ") has an invalid weight");
    }
    if (!seen.emplace(e.src, e.dst).second) {
      throw InputError("duplicate edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) + ")");
    }
    if (e.src == e.dst) has_self[e.src] = true;
    g.edges_.push_back(e);
  }
  for (int i = 0; i < node_count; ++i) {
    if (!has_self[i]) g.edges_.push_back(Edge{i, i, 1.0});
  }

  g.in_edges_.assign(node_count, {});
  std::vector<double> in_sum(node_count, 0.0);
  for (std::size_t e = 0; e < g.edges_.size(); ++e) {
    g.in_edges_[g.edges_[e].dst].push_back(e);
    in_sum[g.edges_[e].dst] += g.edges_[e].weight;
  }

  g.alpha_.resize(g.edges_.size());
  for (std::size_t e = 0; e < g.edges_.size(); ++e) {
    const int dst = g.edges_[e].dst;
    // A user-supplied zero-weight self-loop can leave a row empty; fall back to uniform.
    g.alpha_[e] = in_sum[dst] > 0.0 ? g.edges_[e].weight / in_sum[dst]
                                    : 1.0 / static_cast<double>(g.in_edges_[dst].size());
  }

  g.max_degree_ = 0;
  for (const auto& in : g.in_edges_) g.max_degree_ = std::max(g.max_degree_, static_cast<int>(in.size()));
  return g;
}

long TrafficGraph::find_edge(int src, int dst) const {
  if (dst < 0 || dst >= node_count_) return -1;
  for (std::size_t e : in_edges_[dst]) {
    if (edges_[e].src == src) return static_cast<long>(e);
  }
  return -1;
}

}  // namespace stdde
