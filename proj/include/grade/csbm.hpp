#pragma once

#include "grade/graph.hpp"
#include "grade/types.hpp"

#include <cstdint>
#include <vector>

namespace grade {

// Graph plus node features, labels and disjoint train/val/test masks.
struct Dataset {
  Graph graph;
  StateMatrix features;  // n × d_in
  std::vector<int> labels;
  std::vector<bool> train_mask;
  std::vector<bool> val_mask;
  std::vector<bool> test_mask;

  std::size_t size() const { return graph.size(); }
  int num_classes() const;

  // Throws InputError if row counts disagree, labels are negative, or a
  // node sits in more than one mask.
  void validate() const;
};

// Two-class contextual stochastic block model.
struct CsbmConfig {
  std::size_t n = 100;
  int classes = 2;
  double p_intra = 0.9;
  double p_inter = 0.05;
  std::size_t feat_dim = 2;
  // Class c has mean -sep/2 (c = 0) or +sep/2 (c = 1) on every coordinate.
  double class_mean_separation = 2.0;
  double noise_std = 1.0;
  double train_fraction = 0.2;
  double val_fraction = 0.2;

  void validate() const;
};

// Pure function of (cfg, seed). Nodes [0, n/2) are class 0, the rest class 1;
// each pair u<v is linked with p_intra or p_inter by class agreement.
Dataset csbm_generate(const CsbmConfig& cfg, std::uint64_t seed);

}  // namespace grade
