#pragma once

#include <cstddef>
#include <vector>

namespace stdde {

struct Edge {
  int src = 0;
  int dst = 0;
  double weight = 1.0;
};

/// Directed traffic network with per-destination normalized aggregation weights.
///
/// Every node carries a self-loop of weight 1, so the in-neighborhood of a node
/// is never empty and the alpha of each node's incoming edges sums to one.
class TrafficGraph {
 public:
  TrafficGraph() = default;

  int node_count() const noexcept { return node_count_; }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const Edge& edge(std::size_t e) const { return edges_.at(e); }
  double alpha(std::size_t e) const { return alpha_.at(e); }
  const std::vector<double>& alphas() const noexcept { return alpha_; }
  bool is_self_loop(std::size_t e) const { return edges_.at(e).src == edges_.at(e).dst; }

  /// Incoming edge indices of `node`, self-loop included.
  const std::vector<std::size_t>& in_edges(int node) const { return in_edges_.at(node); }

  /// Maximum in-degree over nodes, counting the self-loop.
  int max_degree() const noexcept { return max_degree_; }

  /// Edge index of (src,dst) or -1.
  long find_edge(int src, int dst) const;

 private:
  friend TrafficGraph build_graph(int node_count, const std::vector<Edge>& raw_edges);

  int node_count_ = 0;
  std::vector<Edge> edges_;
  std::vector<double> alpha_;
  std::vector<std::vector<std::size_t>> in_edges_;
  int max_degree_ = 0;
};

/// Validates ids and weights, inserts missing self-loops (weight 1) and
/// row-normalizes incoming weights per destination. Throws InputError on
/// out-of-range ids, negative or non-finite weights, or duplicate pairs.
TrafficGraph build_graph(int node_count, const std::vector<Edge>& raw_edges);

inline int max_degree(const TrafficGraph& graph) { return graph.max_degree(); }

}  // namespace stdde
