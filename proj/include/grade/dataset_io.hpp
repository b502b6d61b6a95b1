#pragma once

#include "grade/csbm.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace grade::io {

// "%.17g": round-trips every double.
std::string format_double(double x);

// Edge list: one "u v [weight]" per line, '#' starts a comment. A leading
// "# nodes N" comment fixes the node count; otherwise it is max id + 1 (or
// node_count when given).
Graph read_edge_list(const std::filesystem::path& path,
                     std::optional<std::size_t> node_count = std::nullopt);
void write_edge_list(const std::filesystem::path& path, const Graph& g);

// Header "node,f0,...,f{d-1}"; rows may appear in any order but must cover
// 0..n-1 exactly once.
StateMatrix read_features_csv(const std::filesystem::path& path);
void write_features_csv(const std::filesystem::path& path, const StateMatrix& x);

// Header "node,label".
std::vector<int> read_labels_csv(const std::filesystem::path& path);
void write_labels_csv(const std::filesystem::path& path, const std::vector<int>& labels);

// Header "node,train,val,test" with 0/1 flags.
void read_masks_csv(const std::filesystem::path& path, Dataset& ds);
void write_masks_csv(const std::filesystem::path& path, const Dataset& ds);

// Directory bundle {graph.txt, features.csv, labels.csv, masks.csv}.
Dataset read_dataset(const std::filesystem::path& dir);
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);

// Writes to a sibling temp file then renames over the target.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace grade::io
