#include "grade/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace grade {

Graph Graph::from_edge_list(std::size_t n, std::span<const std::pair<NodeId, NodeId>> edges,
                            std::optional<std::span<const double>> weights) {
  if (weights && weights->size() != edges.size()) {
    throw InputError("weight count " + std::to_string(weights->size()) +
                     " does not match edge count " + std::to_string(edges.size()));
  }

  std::map<std::pair<NodeId, NodeId>, double> unique;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    auto [u, v] = edges[i];
    if (u >= n || v >= n) {
      throw InputError("edge (" + std::to_string(u) + "," + std::to_string(v) +
                       ") has endpoint outside [0," + std::to_string(n) + ")");
    }
    if (u == v) throw InputError("self-loop at node " + std::to_string(u));
    const double w = weights ? (*weights)[i] : 1.0;
    if (!std::isfinite(w) || w < 0.0) {
      throw InputError("edge (" + std::to_string(u) + "," + std::to_string(v) +
                       ") has invalid weight " + std::to_string(w));
    }
    const auto key = std::minmax(u, v);
    auto [it, inserted] = unique.emplace(std::pair{key.first, key.second}, w);
    if (!inserted && it->second != w) {
      throw InputError("conflicting weights for duplicate edge (" + std::to_string(key.first) +
                       "," + std::to_string(key.second) + ")");
    }
  }

  Adjacency adj;
  adj.offsets.assign(n + 1, 0);
  for (const auto& [key, w] : unique) {
    ++adj.offsets[key.first + 1];
    ++adj.offsets[key.second + 1];
  }
  for (std::size_t u = 0; u < n; ++u) adj.offsets[u + 1] += adj.offsets[u];

  adj.cols.resize(adj.offsets[n]);
  adj.weights.resize(adj.offsets[n]);
  std::vector<std::size_t> cursor(adj.offsets.begin(), adj.offsets.end() - 1);
  // Map iteration is (u,v)-sorted with u<v, so each row fills in ascending
  // column order: lower neighbors arrive first via their own rows.
  for (const auto& [key, w] : unique) {
    auto [u, v] = key;
    adj.cols[cursor[u]] = v;
    adj.weights[cursor[u]++] = w;
    adj.cols[cursor[v]] = u;
    adj.weights[cursor[v]++] = w;
  }
  return Graph(std::make_shared<const Adjacency>(std::move(adj)));
}

double Graph::weighted_degree(NodeId u) const {
  double s = 0.0;
  for (double w : neighbor_weights(u)) s += w;
  return s;
}

double Graph::weight(NodeId u, NodeId v) const {
  auto nb = neighbors(u);
  auto it = std::lower_bound(nb.begin(), nb.end(), v);
  if (it == nb.end() || *it != v) return 0.0;
  return adj_->weights[row_begin(u) + static_cast<std::size_t>(it - nb.begin())];
}

bool Graph::has_edge(NodeId u, NodeId v) const {
  if (u >= size() || v >= size()) return false;
  auto nb = neighbors(u);
  return std::binary_search(nb.begin(), nb.end(), v);
}

std::vector<WeightedEdge> Graph::edges() const {
  std::vector<WeightedEdge> out;
  out.reserve(edge_count());
  for (NodeId u = 0; u < size(); ++u) {
    for (auto s = row_begin(u); s < row_end(u); ++s) {
      if (adj_->cols[s] > u) out.push_back({u, adj_->cols[s], adj_->weights[s]});
    }
  }
  return out;
}

double EdgeMatrix::at(NodeId u, NodeId v) const {
  const auto b = adj_->cols.begin() + static_cast<std::ptrdiff_t>(row_begin(u));
  const auto e = adj_->cols.begin() + static_cast<std::ptrdiff_t>(row_end(u));
  auto it = std::lower_bound(b, e, v);
  if (it == e || *it != v) return 0.0;
  return values_[static_cast<std::size_t>(it - adj_->cols.begin())];
}

double EdgeMatrix::row_sum(NodeId u) const {
  double s = 0.0;
  for (auto k = row_begin(u); k < row_end(u); ++k) s += values_[k];
  return s;
}

bool EdgeMatrix::supported_on(const Graph& g) const {
  if (!adj_) return false;
  if (adj_ == g.adjacency()) return true;
  const auto& other = *g.adjacency();
  return adj_->offsets == other.offsets && adj_->cols == other.cols;
}

Eigen::MatrixXd EdgeMatrix::to_dense() const {
  const auto n = static_cast<Eigen::Index>(rows());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t u = 0; u < rows(); ++u) {
    for (auto s = row_begin(u); s < row_end(u); ++s) {
      m(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(col(s))) = values_[s];
    }
  }
  return m;
}

EdgeMatrix row_normalized_adjacency(const Graph& g) {
  EdgeMatrix a(g);
  for (NodeId u = 0; u < g.size(); ++u) {
    const double total = g.weighted_degree(u);
    if (g.degree(u) == 0 || !(total > 0.0)) {
      throw InputError("node " + std::to_string(u) + " is isolated; cannot row-normalize");
    }
    auto w = g.neighbor_weights(u);
    for (std::size_t i = 0; i < w.size(); ++i) a[g.row_begin(u) + i] = w[i] / total;
  }
  return a;
}

std::pair<NodeId, std::size_t> min_degree_node(const Graph& g) {
  if (g.size() == 0) throw InputError("min_degree_node on empty graph");
  NodeId best = 0;
  for (NodeId u = 1; u < g.size(); ++u) {
    if (g.degree(u) < g.degree(best)) best = u;
  }
  return {best, g.degree(best)};
}

Graph path_graph(std::size_t n) {
  std::vector<std::pair<NodeId, NodeId>> e;
  for (NodeId u = 0; u + 1 < n; ++u) e.emplace_back(u, u + 1);
  return Graph::from_edge_list(n, e);
}

Graph complete_graph(std::size_t n) {
  std::vector<std::pair<NodeId, NodeId>> e;
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v) e.emplace_back(u, v);
  return Graph::from_edge_list(n, e);
}

Graph star_graph(std::size_t leaves) {
  std::vector<std::pair<NodeId, NodeId>> e;
  for (NodeId v = 1; v <= leaves; ++v) e.emplace_back(0, v);
  return Graph::from_edge_list(leaves + 1, e);
}

Graph two_cliques(std::size_t k) {
  std::vector<std::pair<NodeId, NodeId>> e;
  for (NodeId base : {NodeId{0}, k}) {
    for (NodeId u = 0; u < k; ++u)
      for (NodeId v = u + 1; v < k; ++v) e.emplace_back(base + u, base + v);
  }
  if (k > 0) e.emplace_back(k - 1, k);
  return Graph::from_edge_list(2 * k, e);
}

}  // namespace grade
