#pragma once

#include "grade/types.hpp"

#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace grade {

// Compressed row layout shared between a Graph and every edge-supported
// matrix built on it. Neighbor lists are sorted ascending.
struct Adjacency {
  std::vector<std::size_t> offsets;  // n+1
  std::vector<NodeId> cols;          // 2m
  std::vector<double> weights;       // 2m, w_uv aligned with cols
};

struct WeightedEdge {
  NodeId u;
  NodeId v;
  double weight;
};

// Immutable undirected graph without self-loops or multi-edges.
class Graph {
 public:
  Graph() : adj_(std::make_shared<Adjacency>(Adjacency{{0}, {}, {}})) {}

  // Duplicate (u,v)/(v,u) inputs collapse into one edge; they must agree on
  // weight. Throws InputError on out-of-range endpoints, self-loops, negative
  // or non-finite weights, and conflicting duplicates.
  static Graph from_edge_list(std::size_t n, std::span<const std::pair<NodeId, NodeId>> edges,
                              std::optional<std::span<const double>> weights = std::nullopt);

  std::size_t size() const { return adj_->offsets.size() - 1; }
  std::size_t edge_count() const { return adj_->cols.size() / 2; }

  std::size_t degree(NodeId u) const { return adj_->offsets[u + 1] - adj_->offsets[u]; }
  double weighted_degree(NodeId u) const;

  std::span<const NodeId> neighbors(NodeId u) const {
    return {adj_->cols.data() + adj_->offsets[u], degree(u)};
  }
  std::span<const double> neighbor_weights(NodeId u) const {
    return {adj_->weights.data() + adj_->offsets[u], degree(u)};
  }

  // Slot range of row u inside the shared compressed layout.
  std::size_t row_begin(NodeId u) const { return adj_->offsets[u]; }
  std::size_t row_end(NodeId u) const { return adj_->offsets[u + 1]; }

  // w_uv, or 0 when (u,v) is not an edge.
  double weight(NodeId u, NodeId v) const;
  bool has_edge(NodeId u, NodeId v) const;

  // Each undirected edge once, with u < v, in (u,v) lexicographic order.
  std::vector<WeightedEdge> edges() const;

  const std::shared_ptr<const Adjacency>& adjacency() const { return adj_; }

 private:
  explicit Graph(std::shared_ptr<const Adjacency> adj) : adj_(std::move(adj)) {}

  std::shared_ptr<const Adjacency> adj_;
};

// Sparse n×n matrix whose support is the edge set of a graph. values[s]
// belongs to slot s of the shared adjacency layout.
class EdgeMatrix {
 public:
  EdgeMatrix() = default;
  explicit EdgeMatrix(const Graph& g, double fill = 0.0)
      : adj_(g.adjacency()), values_(adj_->cols.size(), fill) {}

  std::size_t rows() const { return adj_ ? adj_->offsets.size() - 1 : 0; }
  std::size_t row_begin(NodeId u) const { return adj_->offsets[u]; }
  std::size_t row_end(NodeId u) const { return adj_->offsets[u + 1]; }
  NodeId col(std::size_t slot) const { return adj_->cols[slot]; }

  double& operator[](std::size_t slot) { return values_[slot]; }
  double operator[](std::size_t slot) const { return values_[slot]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  // Entry (u,v); 0 off the support.
  double at(NodeId u, NodeId v) const;

  double row_sum(NodeId u) const;

  // True when this matrix lives on the same edge set as g.
  bool supported_on(const Graph& g) const;

  Eigen::MatrixXd to_dense() const;

 private:
  std::shared_ptr<const Adjacency> adj_;
  std::vector<double> values_;
};

// Row-stochastic A with A_uv = w_uv / sum_l w_ul. Throws InputError if a node
// is isolated or has zero total weight.
EdgeMatrix row_normalized_adjacency(const Graph& g);

// Lowest-index node attaining the minimum degree.
std::pair<NodeId, std::size_t> min_degree_node(const Graph& g);

// Convenience builders used by tests, the CLI and the acceptance scenarios.
Graph path_graph(std::size_t n);
Graph complete_graph(std::size_t n);
Graph star_graph(std::size_t leaves);
// Two K_k cliques on nodes [0,k) and [k,2k) joined by the edge (k-1, k).
Graph two_cliques(std::size_t k);

}  // namespace grade
