#include "grade/diagnostics.hpp"

#include "grade/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace grade {

double dirichlet_energy(const Graph& g, const StateMatrix& x) {
  if (static_cast<std::size_t>(x.rows()) != g.size()) {
    throw InputError("dirichlet_energy: state has " + std::to_string(x.rows()) + " rows, graph has " +
                     std::to_string(g.size()) + " nodes");
  }
  if (g.size() == 0) return 0.0;
  double total = 0.0;
  for (NodeId i = 0; i < g.size(); ++i) {
    const auto nbrs = g.neighbors(i);
    const auto w = g.neighbor_weights(i);
    for (std::size_t s = 0; s < nbrs.size(); ++s) {
      total += w[s] * (x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(nbrs[s])))
                          .squaredNorm();
    }
  }
  return total / static_cast<double>(g.size());
}

double feature_spread(const StateMatrix& x) {
  if (x.rows() == 0) throw InputError("feature_spread: empty state");
  return (x.colwise().maxCoeff() - x.colwise().minCoeff()).maxCoeff();
}

double feature_diameter(const StateMatrix& x) {
  double best = 0.0;
  for (Eigen::Index u = 0; u < x.rows(); ++u) {
    for (Eigen::Index v = u + 1; v < x.rows(); ++v) {
      best = std::max(best, (x.row(u) - x.row(v)).squaredNorm());
    }
  }
  return std::sqrt(best);
}

namespace {

struct DisjointSet {
  explicit DisjointSet(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[std::max(a, b)] = std::min(a, b);
    return true;
  }
  std::vector<std::size_t> parent;
};

}  // namespace

std::size_t cluster_count(const StateMatrix& x, double eps) {
  if (!(eps > 0.0)) throw InputError("cluster_count: eps must be positive");
  const auto n = static_cast<std::size_t>(x.rows());
  DisjointSet dsu(n);
  std::size_t components = n;
  const double eps2 = eps * eps;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      if ((x.row(static_cast<Eigen::Index>(u)) - x.row(static_cast<Eigen::Index>(v))).squaredNorm() <= eps2 &&
          dsu.unite(u, v)) {
        --components;
      }
    }
  }
  return components;
}

double default_cluster_eps(const StateMatrix& x0) {
  const double d = feature_diameter(x0);
  return d > 0.0 ? 0.05 * d : 1e-12;
}

std::vector<DwellInterval> dwell_intervals(const std::vector<double>& times,
                                           const std::vector<std::size_t>& counts) {
  if (times.size() != counts.size()) throw InputError("dwell_intervals: length mismatch");
  std::vector<DwellInterval> out;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (!out.empty() && out.back().count == counts[i]) {
      out.back().t_end = times[i];
    } else {
      out.push_back({counts[i], times[i], times[i]});
    }
  }
  return out;
}

ClusterProfile metastability_profile(const Trajectory& traj, double eps) {
  if (traj.states.empty()) throw InputError("metastability_profile: empty trajectory");
  ClusterProfile p;
  p.times = traj.times;
  p.counts.reserve(traj.states.size());
  for (const auto& x : traj.states) p.counts.push_back(cluster_count(x, eps));
  p.dwell_intervals = dwell_intervals(p.times, p.counts);
  return p;
}

std::string to_string(Verdict v) { return v == Verdict::oversmoothed ? "oversmoothed" : "mitigated"; }

Verdict oversmoothing_verdict(const Trajectory& traj, const Graph& g, double energy_floor,
                              double spread_floor) {
  if (traj.states.empty()) throw InputError("oversmoothing_verdict: empty trajectory");
  const auto& x = traj.final_state();
  const bool flat = dirichlet_energy(g, x) < energy_floor && feature_spread(x) < spread_floor;
  return flat ? Verdict::oversmoothed : Verdict::mitigated;
}

EnergyReport energy_report(const Trajectory& traj, const Graph& g, double eps, double energy_floor,
                           double spread_floor) {
  if (traj.states.empty()) throw InputError("energy_report: empty trajectory");
  EnergyReport r;
  r.times = traj.times;
  r.eps = eps;
  r.energy_floor = energy_floor;
  r.spread_floor = spread_floor;
  for (const auto& x : traj.states) {
    r.energy.push_back(dirichlet_energy(g, x));
    r.spread.push_back(feature_spread(x));
    r.clusters.push_back(cluster_count(x, eps));
  }
  r.dwell = dwell_intervals(r.times, r.clusters);
  r.verdict = oversmoothing_verdict(traj, g, energy_floor, spread_floor);
  return r;
}

void write_energy_csv(const std::filesystem::path& path, const EnergyReport& r) {
  std::ostringstream out;
  out << "time,energy,spread,cluster_count\n";
  for (std::size_t i = 0; i < r.times.size(); ++i) {
    out << io::format_double(r.times[i]) << ',' << io::format_double(r.energy[i]) << ','
        << io::format_double(r.spread[i]) << ',' << r.clusters[i] << '\n';
  }
  io::write_file_atomic(path, out.str());
}

nlohmann::json energy_summary_json(const EnergyReport& r) {
  nlohmann::json dwell = nlohmann::json::array();
  for (const auto& d : r.dwell) {
    dwell.push_back({{"count", d.count}, {"t_start", d.t_start}, {"t_end", d.t_end}});
  }
  return {{"times", r.times},
          {"energy", r.energy},
          {"spread", r.spread},
          {"cluster_count", r.clusters},
          {"eps", r.eps},
          {"energy_floor", r.energy_floor},
          {"spread_floor", r.spread_floor},
          {"verdict", to_string(r.verdict)},
          {"dwell_intervals", dwell}};
}

}  // namespace grade
