#pragma once

#include "grade/graph.hpp"
#include "grade/solvers.hpp"
#include "grade/types.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace grade {

// (1/N) sum_i sum_{j in N(i)} w_ij ||x_i - x_j||^2. Every undirected edge is
// counted once per direction.
double dirichlet_energy(const Graph& g, const StateMatrix& x);

// max_{u,v} ||x_u - x_v||_inf, i.e. the widest per-coordinate range.
double feature_spread(const StateMatrix& x);

// Largest pairwise Euclidean distance between rows.
double feature_diameter(const StateMatrix& x);

// Connected components of the graph linking rows at Euclidean distance <= eps.
std::size_t cluster_count(const StateMatrix& x, double eps);

// eps used when none is given: 5% of the initial diameter. Falls back to a
// tiny positive value when the initial state is constant.
double default_cluster_eps(const StateMatrix& x0);

struct DwellInterval {
  std::size_t count;
  double t_start;
  double t_end;

  double duration() const { return t_end - t_start; }
  bool operator==(const DwellInterval&) const = default;
};

struct ClusterProfile {
  std::vector<double> times;
  std::vector<std::size_t> counts;
  std::vector<DwellInterval> dwell_intervals;  // run-length encoding of counts
};

// Run-length encoding of per-record counts; each interval spans the first and
// last recorded time of its run.
std::vector<DwellInterval> dwell_intervals(const std::vector<double>& times,
                                           const std::vector<std::size_t>& counts);

ClusterProfile metastability_profile(const Trajectory& traj, double eps);

enum class Verdict { oversmoothed, mitigated };
std::string to_string(Verdict v);

constexpr double kDefaultEnergyFloor = 1e-8;
constexpr double kDefaultSpreadFloor = 1e-4;

// oversmoothed iff the final state has energy < energy_floor and spread <
// spread_floor.
Verdict oversmoothing_verdict(const Trajectory& traj, const Graph& g,
                              double energy_floor = kDefaultEnergyFloor,
                              double spread_floor = kDefaultSpreadFloor);

// Per-record energy, spread and cluster count.
struct EnergyReport {
  std::vector<double> times;
  std::vector<double> energy;
  std::vector<double> spread;
  std::vector<std::size_t> clusters;
  std::vector<DwellInterval> dwell;
  double eps = 0.0;
  double energy_floor = kDefaultEnergyFloor;
  double spread_floor = kDefaultSpreadFloor;
  Verdict verdict = Verdict::mitigated;
};

EnergyReport energy_report(const Trajectory& traj, const Graph& g, double eps,
                           double energy_floor = kDefaultEnergyFloor,
                           double spread_floor = kDefaultSpreadFloor);

// CSV time,energy,spread,cluster_count.
void write_energy_csv(const std::filesystem::path& path, const EnergyReport& r);
// {times, energy, spread, cluster_count, eps, floors, verdict, dwell_intervals}.
nlohmann::json energy_summary_json(const EnergyReport& r);

}  // namespace grade
