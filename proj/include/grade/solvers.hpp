#pragma once

#include "grade/types.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace grade {

using RhsFn = std::function<StateMatrix(const StateMatrix&, double)>;

enum class Method { euler, rk4, dopri5 };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct SolverConfig {
  Method method = Method::euler;
  double step = 1.0;      // fixed-step size
  double horizon = 40.0;  // T
  double rel_tol = 1e-6;  // dopri5
  double abs_tol = 1e-9;  // dopri5
  std::size_t max_steps = 1'000'000;
  std::size_t record_every = 1;

  void validate() const;
  bool fixed_step() const { return method != Method::dopri5; }
};

void to_json(nlohmann::json& j, const SolverConfig& c);
void from_json(const nlohmann::json& j, SolverConfig& c);

struct Trajectory {
  std::vector<double> times;
  std::vector<StateMatrix> states;
  std::size_t step_count = 0;
  std::size_t rejected_steps = 0;       // dopri5 only
  double max_accepted_error = 0.0;      // dopri5 scaled RMS error, <= 1 when accepted
  std::vector<double> energy;           // optional per-record diagnostics
  std::vector<double> spread;

  const StateMatrix& final_state() const { return states.back(); }
  double final_time() const { return times.back(); }
};

// Times t_0 = 0 < t_1 < ... < t_K = T of a fixed-step run: K = ceil(T/step)
// with the final step shortened to land exactly on T. Empty steps for T = 0.
std::vector<double> fixed_step_grid(double step, double horizon);

// X + step * f(X, t). Throws InputError for step <= 0 and NumericalError for a
// non-finite result.
StateMatrix euler_step(const RhsFn& f, const StateMatrix& x, double t, double step);

// Classical four-stage Runge-Kutta. When stage_inputs is given it receives
// the states at which f was evaluated (X, X + h/2 k1, X + h/2 k2, X + h k3).
StateMatrix rk4_step(const RhsFn& f, const StateMatrix& x, double t, double step,
                     std::array<StateMatrix, 4>* stage_inputs = nullptr);

// Solves dX/dt = f(X, t) on [0, T]. Records the initial state, every
// record_every-th accepted step and the final state.
Trajectory integrate(const RhsFn& f, const StateMatrix& x0, const SolverConfig& cfg);

// CSV with columns time,node,f0..f{d-1}.
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj);
Trajectory read_trajectory_csv(const std::filesystem::path& path);

}  // namespace grade
