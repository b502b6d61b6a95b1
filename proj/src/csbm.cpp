#include "grade/csbm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace grade {

int Dataset::num_classes() const {
  int c = 0;
  for (int y : labels) c = std::max(c, y + 1);
  return c;
}

void Dataset::validate() const {
  const auto n = graph.size();
  if (static_cast<std::size_t>(features.rows()) != n) {
    throw InputError("feature rows " + std::to_string(features.rows()) + " != node count " +
                     std::to_string(n));
  }
  if (labels.size() != n) throw InputError("label count does not match node count");
  for (int y : labels) {
    if (y < 0) throw InputError("negative class label");
  }
  if (train_mask.size() != n || val_mask.size() != n || test_mask.size() != n) {
    throw InputError("mask length does not match node count");
  }
  for (std::size_t u = 0; u < n; ++u) {
    if (int(train_mask[u]) + int(val_mask[u]) + int(test_mask[u]) > 1) {
      throw InputError("node " + std::to_string(u) + " belongs to more than one mask");
    }
  }
  if (!features.allFinite()) throw InputError("features contain non-finite values");
}

void CsbmConfig::validate() const {
  auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (classes != 2) throw InputError("csbm supports exactly 2 classes");
  if (n < 2 || n % 2 != 0) throw InputError("csbm node count must be even and >= 2");
  if (!in_unit(p_intra) || !in_unit(p_inter)) {
    throw InputError("csbm edge probabilities must lie in [0,1]");
  }
  if (feat_dim == 0) throw InputError("csbm feat_dim must be positive");
  if (!(noise_std >= 0.0) || !std::isfinite(class_mean_separation)) {
    throw InputError("csbm noise_std must be >= 0 and separation finite");
  }
  if (train_fraction < 0 || val_fraction < 0 || train_fraction + val_fraction > 1.0) {
    throw InputError("csbm split fractions must be nonnegative and sum to at most 1");
  }
}

Dataset csbm_generate(const CsbmConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t n = cfg.n;
  std::mt19937_64 edge_rng(seed);
  std::mt19937_64 feat_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 split_rng(seed ^ 0xbf58476d1ce4e5b9ULL);

  Dataset ds;
  ds.labels.resize(n);
  for (std::size_t u = 0; u < n; ++u) ds.labels[u] = u < n / 2 ? 0 : 1;

  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v = u + 1; v < n; ++v) {
      const double p = ds.labels[u] == ds.labels[v] ? cfg.p_intra : cfg.p_inter;
      // One draw per pair regardless of p keeps the stream aligned across configs.
      if (coin(edge_rng) < p) edges.emplace_back(u, v);
    }
  }
  ds.graph = Graph::from_edge_list(n, edges);

  std::normal_distribution<double> noise(0.0, 1.0);
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cfg.feat_dim));
  for (std::size_t u = 0; u < n; ++u) {
    const double mean = (ds.labels[u] == 0 ? -0.5 : 0.5) * cfg.class_mean_separation;
    for (std::size_t c = 0; c < cfg.feat_dim; ++c) {
      ds.features(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(c)) =
          mean + cfg.noise_std * noise(feat_rng);
    }
  }

  std::vector<NodeId> order(n);
  std::iota(order.begin(), order.end(), NodeId{0});
  std::shuffle(order.begin(), order.end(), split_rng);
  const auto n_train = static_cast<std::size_t>(cfg.train_fraction * static_cast<double>(n));
  const auto n_val = static_cast<std::size_t>(cfg.val_fraction * static_cast<double>(n));
  ds.train_mask.assign(n, false);
  ds.val_mask.assign(n, false);
  ds.test_mask.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const NodeId u = order[i];
    if (i < n_train) {
      ds.train_mask[u] = true;
    } else if (i < n_train + n_val) {
      ds.val_mask[u] = true;
    } else {
      ds.test_mask[u] = true;
    }
  }
  return ds;
}

}  // namespace grade
