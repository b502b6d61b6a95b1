#include "grade/solvers.hpp"

#include "grade/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace grade {

std::string to_string(Method m) {
  switch (m) {
    case Method::euler: return "euler";
    case Method::rk4: return "rk4";
    case Method::dopri5: return "dopri5";
  }
  return "unknown";
}

Method method_from_string(const std::string& s) {
  if (s == "euler") return Method::euler;
  if (s == "rk4") return Method::rk4;
  if (s == "dopri5") return Method::dopri5;
  throw InputError("unknown solver method '" + s + "'");
}

void SolverConfig::validate() const {
  if (!(horizon >= 0.0) || !std::isfinite(horizon)) throw InputError("horizon must be finite and >= 0");
  if (record_every == 0) throw InputError("record_every must be >= 1");
  if (max_steps == 0) throw InputError("max_steps must be >= 1");
  if (fixed_step()) {
    if (!(step > 0.0) || !std::isfinite(step)) throw InputError("step must be positive");
    if (fixed_step_grid(step, horizon).size() - 1 > max_steps) {
      throw InputError("horizon/step exceeds max_steps");
    }
  } else {
    if (!(rel_tol >= 1e-12) || !(abs_tol >= 1e-12)) throw InputError("tolerances must be >= 1e-12");
  }
}

void to_json(nlohmann::json& j, const SolverConfig& c) {
  j = nlohmann::json{{"method", to_string(c.method)}, {"step", c.step},
                     {"horizon", c.horizon},          {"rel_tol", c.rel_tol},
                     {"abs_tol", c.abs_tol},          {"max_steps", c.max_steps},
                     {"record_every", c.record_every}};
}

void from_json(const nlohmann::json& j, SolverConfig& c) {
  if (!j.is_object()) throw InputError("solver config must be a JSON object");
  static const std::vector<std::string> known{"method",  "step",      "horizon",     "rel_tol",
                                              "abs_tol", "max_steps", "record_every"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw InputError("unknown solver field '" + key + "'");
    }
  }
  SolverConfig out;
  try {
    if (j.contains("method")) out.method = method_from_string(j.at("method").get<std::string>());
    out.step = j.value("step", out.step);
    out.horizon = j.value("horizon", out.horizon);
    out.rel_tol = j.value("rel_tol", out.rel_tol);
    out.abs_tol = j.value("abs_tol", out.abs_tol);
    out.max_steps = j.value("max_steps", out.max_steps);
    out.record_every = j.value("record_every", out.record_every);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("invalid solver config: ") + e.what());
  }
  out.validate();
  c = out;
}

std::vector<double> fixed_step_grid(double step, double horizon) {
  if (!(step > 0.0)) throw InputError("step must be positive");
  std::vector<double> t{0.0};
  if (horizon <= 0.0) return t;
  // Guard against T/step landing a hair above an integer.
  const auto count = static_cast<std::size_t>(std::ceil(horizon / step * (1.0 - 1e-12)));
  t.reserve(count + 1);
  for (std::size_t k = 1; k < count; ++k) t.push_back(static_cast<double>(k) * step);
  t.push_back(horizon);
  return t;
}

namespace {

void require_finite(const StateMatrix& x, double t, const char* who) {
  if (!x.allFinite()) {
    std::ostringstream msg;
    msg << who << ": state blow-up (non-finite values) at t=" << t;
    throw NumericalError(msg.str());
  }
}

void require_positive_step(double step) {
  if (!(step > 0.0)) throw InputError("step must be positive");
}

double scaled_rms(const StateMatrix& err, const StateMatrix& y0, const StateMatrix& y1,
                  double atol, double rtol) {
  double sum = 0.0;
  const auto count = static_cast<double>(err.size());
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double sc = atol + rtol * std::max(std::abs(y0.data()[i]), std::abs(y1.data()[i]));
    const double r = err.data()[i] / sc;
    sum += r * r;
  }
  return count > 0 ? std::sqrt(sum / count) : 0.0;
}

class Recorder {
 public:
  Recorder(Trajectory& traj, std::size_t every) : traj_(traj), every_(every) {}
  void accepted(double t, const StateMatrix& x, bool last) {
    ++traj_.step_count;
    if (last || traj_.step_count % every_ == 0) {
      traj_.times.push_back(t);
      traj_.states.push_back(x);
    }
  }

 private:
  Trajectory& traj_;
  std::size_t every_;
};

Trajectory integrate_fixed(const RhsFn& f, const StateMatrix& x0, const SolverConfig& cfg) {
  Trajectory traj;
  traj.times.push_back(0.0);
  traj.states.push_back(x0);
  Recorder rec(traj, cfg.record_every);
  const auto grid = fixed_step_grid(cfg.step, cfg.horizon);
  StateMatrix x = x0;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double h = grid[k + 1] - grid[k];
    x = cfg.method == Method::euler ? euler_step(f, x, grid[k], h) : rk4_step(f, x, grid[k], h);
    rec.accepted(grid[k + 1], x, k + 2 == grid.size());
  }
  return traj;
}

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
// Fifth-order minus embedded fourth-order weights.
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

constexpr double kSafety = 0.9;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 5.0;
constexpr double kBeta = 0.04;                   // PI memory exponent
constexpr double kAlpha = 0.2 - 0.75 * kBeta;    // proportional exponent

double initial_step(const RhsFn& f, const StateMatrix& y0, const StateMatrix& f0,
                    const SolverConfig& cfg) {
  auto rms = [&](const StateMatrix& v) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double sc = cfg.abs_tol + cfg.rel_tol * std::abs(y0.data()[i]);
      s += (v.data()[i] / sc) * (v.data()[i] / sc);
    }
    return v.size() > 0 ? std::sqrt(s / static_cast<double>(v.size())) : 0.0;
  };
  const double d0 = rms(y0), d1 = rms(f0);
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h0 = std::min(h0, cfg.horizon);
  const StateMatrix y1 = y0 + h0 * f0;
  const StateMatrix f1 = f(y1, h0);
  if (!f1.allFinite()) return h0 * 1e-3;
  const double d2 = rms(f1 - f0) / h0;
  const double dmax = std::max(d1, d2);
  const double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dmax, 0.2);
  return std::min({100.0 * h0, h1, cfg.horizon});
}

Trajectory integrate_dopri5(const RhsFn& f, const StateMatrix& x0, const SolverConfig& cfg) {
  Trajectory traj;
  traj.times.push_back(0.0);
  traj.states.push_back(x0);
  if (cfg.horizon <= 0.0) return traj;
  Recorder rec(traj, cfg.record_every);

  const double T = cfg.horizon;
  double t = 0.0;
  StateMatrix y = x0;
  StateMatrix k1 = f(y, t);
  require_finite(k1, t, "dopri5");
  double h = initial_step(f, y, k1, cfg);
  double err_prev = 1e-4;

  while (true) {
    bool last = false;
    if (t + h >= T * (1.0 - 1e-14) || t + h >= T) {
      h = T - t;
      last = true;
    }
    if (h <= 1e-14 * std::max(1.0, std::abs(t))) {
      std::ostringstream msg;
      msg << "dopri5: step size underflow at t=" << t << " (stiffness or state blow-up)";
      throw NumericalError(msg.str());
    }
    const StateMatrix k2 = f(y + h * (a21 * k1), t + c2 * h);
    const StateMatrix k3 = f(y + h * (a31 * k1 + a32 * k2), t + c3 * h);
    const StateMatrix k4 = f(y + h * (a41 * k1 + a42 * k2 + a43 * k3), t + c4 * h);
    const StateMatrix k5 = f(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4), t + c5 * h);
    const StateMatrix k6 = f(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5), t + h);
    const StateMatrix y_new = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    StateMatrix k7 = y_new.allFinite() ? f(y_new, t + h) : y_new;
    const StateMatrix err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double e = scaled_rms(err, y, y_new, cfg.abs_tol, cfg.rel_tol);
    if (!std::isfinite(e) || !k7.allFinite()) e = std::numeric_limits<double>::infinity();

    if (e <= 1.0) {
      t = last ? T : t + h;
      y = y_new;
      k1 = std::move(k7);
      traj.max_accepted_error = std::max(traj.max_accepted_error, e);
      rec.accepted(t, y, last);
      if (last) break;
      if (traj.step_count >= cfg.max_steps) {
        throw NumericalError("dopri5: max_steps exceeded at t=" + std::to_string(t));
      }
      double factor = kSafety * std::pow(std::max(e, 1e-10), -kAlpha) * std::pow(err_prev, kBeta);
      factor = std::clamp(factor, kMinFactor, kMaxFactor);
      err_prev = std::max(e, 1e-4);
      h *= factor;
    } else {
      ++traj.rejected_steps;
      const double factor =
          std::isfinite(e) ? std::max(kMinFactor, kSafety * std::pow(e, -kAlpha)) : kMinFactor;
      h *= std::min(factor, 1.0);
    }
  }
  return traj;
}

}  // namespace

StateMatrix euler_step(const RhsFn& f, const StateMatrix& x, double t, double step) {
  require_positive_step(step);
  StateMatrix out = x + step * f(x, t);
  require_finite(out, t + step, "euler");
  return out;
}

StateMatrix rk4_step(const RhsFn& f, const StateMatrix& x, double t, double step,
                     std::array<StateMatrix, 4>* stage_inputs) {
  require_positive_step(step);
  const double half = 0.5 * step;
  const StateMatrix k1 = f(x, t);
  const StateMatrix y2 = x + half * k1;
  const StateMatrix k2 = f(y2, t + half);
  const StateMatrix y3 = x + half * k2;
  const StateMatrix k3 = f(y3, t + half);
  const StateMatrix y4 = x + step * k3;
  const StateMatrix k4 = f(y4, t + step);
  StateMatrix out = x + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  require_finite(out, t + step, "rk4");
  if (stage_inputs != nullptr) *stage_inputs = {x, y2, y3, y4};
  return out;
}

Trajectory integrate(const RhsFn& f, const StateMatrix& x0, const SolverConfig& cfg) {
  cfg.validate();
  require_finite(x0, 0.0, "integrate");
  return cfg.fixed_step() ? integrate_fixed(f, x0, cfg) : integrate_dopri5(f, x0, cfg);
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
  std::ostringstream out;
  const auto d = traj.states.empty() ? 0 : traj.states.front().cols();
  out << "time,node";
  for (Eigen::Index c = 0; c < d; ++c) out << ",f" << c;
  out << '\n';
  for (std::size_t r = 0; r < traj.times.size(); ++r) {
    const auto& x = traj.states[r];
    const auto t = io::format_double(traj.times[r]);
    for (Eigen::Index u = 0; u < x.rows(); ++u) {
      out << t << ',' << u;
      for (Eigen::Index c = 0; c < d; ++c) out << ',' << io::format_double(x(u, c));
      out << '\n';
    }
  }
  io::write_file_atomic(path, out.str());
}

Trajectory read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("time,node", 0) != 0) {
    throw InputError(path.string() + ": expected header time,node,f0,...");
  }
  const auto d = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',') - 1);
  Trajectory traj;
  std::vector<std::vector<double>> rows;
  double current = std::numeric_limits<double>::quiet_NaN();
  auto flush = [&] {
    if (rows.empty()) return;
    StateMatrix x(static_cast<Eigen::Index>(rows.size()), d);
    for (std::size_t u = 0; u < rows.size(); ++u) {
      for (Eigen::Index c = 0; c < d; ++c) x(static_cast<Eigen::Index>(u), c) = rows[u][static_cast<std::size_t>(c)];
    }
    traj.times.push_back(current);
    traj.states.push_back(std::move(x));
    rows.clear();
  };
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> cells;
    while (std::getline(ss, cell, ',')) {
      try {
        cells.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw InputError(path.string() + ": bad number '" + cell + "'");
      }
    }
    if (static_cast<Eigen::Index>(cells.size()) != d + 2) {
      throw InputError(path.string() + ": row width mismatch");
    }
    if (cells[0] != current) {
      flush();
      if (!traj.times.empty() && !(cells[0] > traj.times.back())) {
        throw InputError(path.string() + ": times must be strictly increasing");
      }
      current = cells[0];
    }
    if (cells[1] != static_cast<double>(rows.size())) {
      throw InputError(path.string() + ": nodes must be listed 0..n-1 within each time");
    }
    rows.emplace_back(cells.begin() + 2, cells.end());
  }
  flush();
  if (traj.states.empty()) throw InputError(path.string() + ": empty trajectory");
  for (const auto& x : traj.states) {
    if (x.rows() != traj.states.front().rows()) throw InputError(path.string() + ": ragged trajectory");
  }
  traj.step_count = traj.states.size() - 1;
  return traj;
}

}  // namespace grade
