#include "grade/dataset_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace grade::io {

namespace fs = std::filesystem;

namespace {

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return in;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    cells.push_back(cell);
  }
  return cells;
}

double parse_double(const std::string& s, const fs::path& where) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InputError("bad number '" + s + "' in " + where.string());
  }
}

long long parse_int(const std::string& s, const fs::path& where) {
  try {
    std::size_t used = 0;
    long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InputError("bad integer '" + s + "' in " + where.string());
  }
}

// Reads "node,..." rows into a node-indexed table, checking coverage.
std::vector<std::vector<std::string>> read_node_table(const fs::path& path,
                                                      const std::string& first_header,
                                                      std::vector<std::string>& header) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw InputError(path.string() + " is empty");
  header = split_csv(line);
  if (header.empty() || header[0] != first_header) {
    throw InputError(path.string() + ": header must start with '" + first_header + "'");
  }
  std::vector<std::vector<std::string>> rows;
  std::vector<bool> seen;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw InputError(path.string() + ": row has " + std::to_string(cells.size()) +
                       " cells, expected " + std::to_string(header.size()));
    }
    const auto node = parse_int(cells[0], path);
    if (node < 0) throw InputError(path.string() + ": negative node id");
    const auto u = static_cast<std::size_t>(node);
    if (u >= rows.size()) {
      rows.resize(u + 1);
      seen.resize(u + 1, false);
    }
    if (seen[u]) throw InputError(path.string() + ": node " + cells[0] + " listed twice");
    seen[u] = true;
    rows[u] = std::move(cells);
  }
  for (std::size_t u = 0; u < seen.size(); ++u) {
    if (!seen[u]) throw InputError(path.string() + ": missing node " + std::to_string(u));
  }
  return rows;
}

}  // namespace

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Graph read_edge_list(const fs::path& path, std::optional<std::size_t> node_count) {
  auto in = open_input(path);
  std::vector<std::pair<NodeId, NodeId>> edges;
  std::vector<double> weights;
  bool any_weight = false;
  std::size_t max_id_plus_one = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      std::istringstream comment(line.substr(hash + 1));
      std::string key;
      std::size_t value = 0;
      if (comment >> key >> value && key == "nodes" && !node_count) node_count = value;
      line.erase(hash);
    }
    std::istringstream ss(line);
    long long u = 0, v = 0;
    if (!(ss >> u)) continue;
    if (!(ss >> v) || u < 0 || v < 0) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": malformed edge");
    }
    double w = 1.0;
    if (ss >> w) any_weight = true;
    std::string rest;
    if (ss >> rest) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": trailing tokens");
    }
    edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
    weights.push_back(w);
    max_id_plus_one = std::max({max_id_plus_one, static_cast<std::size_t>(u) + 1,
                                static_cast<std::size_t>(v) + 1});
  }
  const std::size_t n = node_count.value_or(max_id_plus_one);
  if (any_weight) return Graph::from_edge_list(n, edges, std::span<const double>(weights));
  return Graph::from_edge_list(n, edges);
}

void write_edge_list(const fs::path& path, const Graph& g) {
  std::ostringstream out;
  out << "# nodes " << g.size() << "\n";
  for (const auto& e : g.edges()) {
    out << e.u << ' ' << e.v;
    if (e.weight != 1.0) out << ' ' << format_double(e.weight);
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

StateMatrix read_features_csv(const fs::path& path) {
  std::vector<std::string> header;
  auto rows = read_node_table(path, "node", header);
  const auto d = static_cast<Eigen::Index>(header.size() - 1);
  StateMatrix x(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t u = 0; u < rows.size(); ++u) {
    for (Eigen::Index c = 0; c < d; ++c) {
      x(static_cast<Eigen::Index>(u), c) =
          parse_double(rows[u][static_cast<std::size_t>(c) + 1], path);
    }
  }
  return x;
}

void write_features_csv(const fs::path& path, const StateMatrix& x) {
  std::ostringstream out;
  out << "node";
  for (Eigen::Index c = 0; c < x.cols(); ++c) out << ",f" << c;
  out << '\n';
  for (Eigen::Index u = 0; u < x.rows(); ++u) {
    out << u;
    for (Eigen::Index c = 0; c < x.cols(); ++c) out << ',' << format_double(x(u, c));
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

std::vector<int> read_labels_csv(const fs::path& path) {
  std::vector<std::string> header;
  auto rows = read_node_table(path, "node", header);
  if (header.size() != 2 || header[1] != "label") {
    throw InputError(path.string() + ": expected header node,label");
  }
  std::vector<int> labels(rows.size());
  for (std::size_t u = 0; u < rows.size(); ++u) {
    labels[u] = static_cast<int>(parse_int(rows[u][1], path));
  }
  return labels;
}

void write_labels_csv(const fs::path& path, const std::vector<int>& labels) {
  std::ostringstream out;
  out << "node,label\n";
  for (std::size_t u = 0; u < labels.size(); ++u) out << u << ',' << labels[u] << '\n';
  write_file_atomic(path, out.str());
}

void read_masks_csv(const fs::path& path, Dataset& ds) {
  std::vector<std::string> header;
  auto rows = read_node_table(path, "node", header);
  if (header != std::vector<std::string>{"node", "train", "val", "test"}) {
    throw InputError(path.string() + ": expected header node,train,val,test");
  }
  const auto n = rows.size();
  ds.train_mask.assign(n, false);
  ds.val_mask.assign(n, false);
  ds.test_mask.assign(n, false);
  auto flag = [&](const std::string& s) {
    const auto v = parse_int(s, path);
    if (v != 0 && v != 1) throw InputError(path.string() + ": mask flags must be 0 or 1");
    return v == 1;
  };
  for (std::size_t u = 0; u < n; ++u) {
    ds.train_mask[u] = flag(rows[u][1]);
    ds.val_mask[u] = flag(rows[u][2]);
    ds.test_mask[u] = flag(rows[u][3]);
  }
}

void write_masks_csv(const fs::path& path, const Dataset& ds) {
  std::ostringstream out;
  out << "node,train,val,test\n";
  for (std::size_t u = 0; u < ds.size(); ++u) {
    out << u << ',' << int(ds.train_mask[u]) << ',' << int(ds.val_mask[u]) << ','
        << int(ds.test_mask[u]) << '\n';
  }
  write_file_atomic(path, out.str());
}

Dataset read_dataset(const fs::path& dir) {
  Dataset ds;
  ds.features = read_features_csv(dir / "features.csv");
  const auto n = static_cast<std::size_t>(ds.features.rows());
  ds.graph = read_edge_list(dir / "graph.txt", n);
  if (ds.graph.size() != n) {
    throw InputError(dir.string() + ": graph has " + std::to_string(ds.graph.size()) +
                     " nodes but features have " + std::to_string(n) + " rows");
  }
  ds.labels = read_labels_csv(dir / "labels.csv");
  if (fs::exists(dir / "masks.csv")) {
    read_masks_csv(dir / "masks.csv", ds);
  } else {
    ds.train_mask.assign(n, false);
    ds.val_mask.assign(n, false);
    ds.test_mask.assign(n, false);
  }
  ds.validate();
  return ds;
}

void write_dataset(const fs::path& dir, const Dataset& ds) {
  fs::create_directories(dir);
  write_edge_list(dir / "graph.txt", ds.graph);
  write_features_csv(dir / "features.csv", ds.features);
  write_labels_csv(dir / "labels.csv", ds.labels);
  write_masks_csv(dir / "masks.csv", ds);
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out << contents;
    if (!out) throw InputError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace grade::io
