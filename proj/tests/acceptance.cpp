// One PASS/FAIL line per acceptance criterion. Exit status is nonzero when
// any criterion fails.

#include "grade/csbm.hpp"
#include "grade/diagnostics.hpp"
#include "grade/dynamics.hpp"
#include "grade/solvers.hpp"
#include "grade/training.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

using namespace grade;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

double elapsed_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Energy ratio E(X(T))/E(X(0)); NaN on blow-up.
double energy_ratio(const DynamicsConfig& cfg, const Dataset& ds, const SolverConfig& s, std::string& failure) {
  try {
    const GradeSystem system(cfg, ds.graph);
    const Trajectory traj = integrate(system, ds.features, s);
    return dirichlet_energy(ds.graph, traj.final_state()) / dirichlet_energy(ds.graph, ds.features);
  } catch (const NumericalError& e) {
    failure = e.what();
    return std::nan("");
  }
}

Outcome oversmoothing_contrast() {
  const auto start = std::chrono::steady_clock::now();
  SolverConfig s;  // euler, step 1, horizon 40: one step per layer
  DynamicsConfig diffusion;
  diffusion.activation = Activation::identity;
  diffusion.aggregation_on = false;
  DynamicsConfig grade_cfg;
  grade_cfg.activation = Activation::tanh;
  grade_cfg.kernel.kind = KernelKind::log;
  grade_cfg.kernel.singularity_floor = 1e-6;
  grade_cfg.kernel.normalize_rows = false;

  double diff_sum = 0.0, grade_sum = 0.0;
  std::string failure;
  int blowups = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Dataset ds = csbm_generate(CsbmConfig{}, seed);
    diff_sum += energy_ratio(diffusion, ds, s, failure);
    const double g = energy_ratio(grade_cfg, ds, s, failure);
    if (std::isnan(g)) ++blowups;
    grade_sum += g;
  }
  const double diff_mean = diff_sum / 5.0, grade_mean = grade_sum / 5.0;
  const double seconds = elapsed_since(start);
  const bool pass = diff_mean < 1e-6 && grade_mean > 1e-3 && seconds < 30.0;
  std::string detail = fmt("diffusion mean E(40)/E(0)=%.3e (<1e-6), GRADE log-kernel mean=%.3e (>1e-3), %.2fs",
                           diff_mean, grade_mean, seconds);
  if (blowups) detail += fmt("; GRADE blew up on %d/5 seeds (%s)", blowups, failure.c_str());
  return {pass, detail};
}

StateMatrix unit_spread_features(std::uint64_t seed, std::size_t n, std::size_t d) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  StateMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  x.rowwise() -= x.colwise().minCoeff();
  return x / feature_spread(x);
}

Outcome non_smoothing_theorem() {
  const Graph g = path_graph(10);
  DynamicsConfig grade_cfg;
  grade_cfg.activation = Activation::tanh;
  grade_cfg.kernel.kind = KernelKind::log;
  DynamicsConfig diffusion = grade_cfg;
  diffusion.aggregation_on = false;
  SolverConfig s;
  s.method = Method::rk4;
  s.step = 0.01;
  s.horizon = 40.0;
  s.record_every = 10;
  SolverConfig long_run = s;
  long_run.horizon = 400.0;
  long_run.record_every = 100;

  bool pass = true;
  std::ostringstream detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const StateMatrix x0 = unit_spread_features(seed, 10, 2);
    detail << "seed " << seed << ": ";
    try {
      const Trajectory t = integrate(GradeSystem(grade_cfg, g), x0, s);
      double lowest = INFINITY;
      for (const auto& x : t.states) lowest = std::min(lowest, feature_spread(x));
      pass = pass && lowest >= 0.05;
      detail << fmt("GRADE min spread %.3g", lowest);
    } catch (const NumericalError& e) {
      pass = false;
      detail << "GRADE blow-up (" << e.what() << ")";
    }
    const Trajectory d = integrate(GradeSystem(diffusion, g), x0, long_run);
    double reached = INFINITY;
    for (std::size_t i = 0; i < d.states.size() && !std::isfinite(reached); ++i) {
      if (feature_spread(d.states[i]) < 1e-4) reached = d.times[i];
    }
    pass = pass && std::isfinite(reached);
    detail << fmt(", diffusion spread<1e-4 at t=%.0f; ", reached);
  }
  return {pass, detail.str() + "(need GRADE spread >= 0.05 for t <= 40)"};
}

Outcome gradient_exactness() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) worst = std::max(worst, grad_check(seed, 1e-5).max_rel_error);
  const double seconds = elapsed_since(start);
  return {worst <= 1e-5 && seconds < 10.0,
          fmt("max relative error %.3e over 20 instances (<=1e-5), %.2fs (<10s)", worst, seconds)};
}

Outcome solver_order() {
  // P2, identity activation, diffusion only: x1 - x0 decays like exp(-2t).
  DynamicsConfig cfg;
  cfg.activation = Activation::identity;
  cfg.aggregation_on = false;
  const GradeSystem system(cfg, path_graph(2));
  StateMatrix x0(2, 1);
  x0 << 0.0, 1.0;
  const double horizon = 2.0;
  const double exact = std::exp(-2.0 * horizon);
  auto error = [&](const SolverConfig& s) {
    const StateMatrix x = integrate(system, x0, s).final_state();
    return std::max(std::abs(x(1, 0) - x(0, 0) - exact), std::abs(x(0, 0) + x(1, 0) - 1.0));
  };
  auto slope = [&](Method m) {
    const std::vector<double> steps{0.2, 0.1, 0.05, 0.025};
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (double h : steps) {
      SolverConfig s;
      s.method = m;
      s.step = h;
      s.horizon = horizon;
      const double lx = std::log(h), ly = std::log(error(s));
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
    }
    const double k = static_cast<double>(steps.size());
    return (k * sxy - sx * sy) / (k * sxx - sx * sx);
  };
  const double euler = slope(Method::euler), rk4 = slope(Method::rk4);
  SolverConfig adaptive;
  adaptive.method = Method::dopri5;
  adaptive.horizon = horizon;
  adaptive.rel_tol = 1e-8;
  adaptive.abs_tol = 1e-10;
  const double dopri = error(adaptive);
  const bool pass = euler >= 0.9 && euler <= 1.1 && rk4 >= 3.7 && rk4 <= 4.3 && dopri < 1e-7;
  return {pass, fmt("euler slope %.3f [0.9,1.1], rk4 slope %.3f [3.7,4.3], dopri5 error %.2e (<1e-7)", euler, rk4, dopri)};
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(2024);
  double worst_abs = 0.0, worst_rel = 0.0;
  const KernelKind kinds[] = {KernelKind::log, KernelKind::power, KernelKind::gaussian, KernelKind::attention};
  const Activation acts[] = {Activation::identity, Activation::tanh, Activation::softplus, Activation::relu};
  for (int i = 0; i < 50; ++i) {
    const auto n = std::uniform_int_distribution<std::size_t>(2, 12)(rng);
    const auto d = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
    const Graph g = test::random_connected_graph(rng(), n, i % 2 == 1);
    const StateMatrix x = test::random_state(rng(), n, d);
    DynamicsConfig cfg;
    cfg.activation = acts[i % 4];
    cfg.kernel.kind = kinds[i % 4];
    cfg.kernel.delta = 0.5 * (i % 3);
    cfg.kernel.bandwidth = 0.7;
    cfg.kernel.normalize_rows = (i / 4) % 2 == 1 && cfg.kernel.kind != KernelKind::log;
    if ((i / 8) % 2 == 1) cfg.attention = ProjectionParams{test::random_state(rng(), 2, d, 0.5), 2.0};
    if (cfg.kernel.kind == KernelKind::attention && i % 3 == 0) {
      cfg.kernel.theta = ProjectionParams{test::random_state(rng(), 3, d, 0.5), 1.5};
    }
    const Eigen::MatrixXd w = test::dense_weights(g);
    const EdgeMatrix a = diffusion_adjacency(cfg, g, x);
    const EdgeMatrix k = kernel_matrix(cfg.kernel, x, g);
    const Eigen::MatrixXd got_d = diffusion_term(cfg, a, x), want_d = oracle::diffusion(cfg, w, x);
    const Eigen::MatrixXd got_a = aggregation_term(cfg, g, k, x), want_a = oracle::aggregation(cfg, w, x);
    for (const auto& [got, want] : {std::pair{got_d, want_d}, std::pair{got_a, want_a}}) {
      for (Eigen::Index j = 0; j < got.size(); ++j) {
        const double diff = std::abs(got.data()[j] - want.data()[j]);
        worst_abs = std::max(worst_abs, diff);
        worst_rel = std::max(worst_rel, diff / std::max(1.0, std::abs(want.data()[j])));
      }
    }
  }
  return {worst_rel <= 1e-12,
          fmt("max |node - dense| %.2e, scaled by max(1,|dense|) %.2e (<=1e-12) over 50 graphs", worst_abs, worst_rel)};
}

Outcome degenerate_grand() {
  std::mt19937_64 rng(77);
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    const auto n = std::uniform_int_distribution<std::size_t>(3, 12)(rng);
    Dataset ds;
    ds.graph = test::random_connected_graph(rng(), n, i % 2 == 0);
    ds.features = test::random_state(rng(), n, 3);
    ds.labels.assign(n, 0);
    ds.labels[0] = 1;
    ds.train_mask.assign(n, true);
    ds.val_mask.assign(n, false);
    ds.test_mask.assign(n, false);
    TrainConfig cfg;
    cfg.dynamics.activation = Activation::identity;
    cfg.dynamics.aggregation_on = false;
    cfg.solver.method = i % 2 ? Method::rk4 : Method::euler;
    cfg.solver.step = 0.3;
    cfg.solver.horizon = 2.0;
    cfg.hidden_dim = 4;
    cfg.init_scale = 1.0;
    cfg.seed = rng();
    ModelParams p = init_params(3, 2, cfg);
    p.enc_b.setConstant(0.25);
    p.dec_b.setConstant(-0.5);
    const Eigen::MatrixXd got = forward(p, ds, cfg).logits;
    const Eigen::MatrixXd want = oracle::grand_linear_logits(p, ds, cfg.solver);
    worst = std::max(worst, (got - want).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-10, fmt("max |forward - linear GRAND| %.2e (<=1e-10) over 10 instances", worst)};
}

Outcome toy_classification() {
  const auto start = std::chrono::steady_clock::now();
  std::vector<double> model, baseline;
  int diverged = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Dataset ds = csbm_generate(CsbmConfig{}, seed);
    TrainConfig cfg;
    cfg.seed = seed;
    try {
      model.push_back(train(ds, cfg).test_acc);
    } catch (const NumericalError&) {
      model.push_back(0.0);
      ++diverged;
    }
    baseline.push_back(logistic_baseline(ds, cfg.epochs, cfg.learning_rate, cfg.weight_decay));
  }
  const double m = median(model), b = median(baseline);
  std::string detail = fmt("median test accuracy %.3f (>=0.85), logistic baseline %.3f, %.1fs", m, b, elapsed_since(start));
  if (diverged) detail += fmt("; %d/10 runs diverged (scored 0)", diverged);
  return {m >= 0.85 && m >= b, detail};
}

Outcome metastability_dwell() {
  const Graph g = two_cliques(5);
  DynamicsConfig cfg;
  cfg.activation = Activation::tanh;
  cfg.kernel.kind = KernelKind::gaussian;
  cfg.kernel.bandwidth = 0.1;  // 0.1 × the inter-clique distance of 1
  SolverConfig s;
  s.method = Method::rk4;
  s.step = 0.01;
  s.horizon = 40.0;
  s.record_every = 10;

  bool pass = true;
  std::ostringstream detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.01);
    StateMatrix x0(10, 2);
    for (Eigen::Index u = 0; u < 10; ++u) {
      x0(u, 0) = (u >= 5 ? 1.0 : 0.0) + noise(rng);
      x0(u, 1) = noise(rng);
    }
    const double eps = default_cluster_eps(x0);
    detail << "seed " << seed << ": ";
    try {
      const ClusterProfile p = metastability_profile(integrate(GradeSystem(cfg, g), x0, s), eps);
      const auto& first = p.dwell_intervals.front();
      const bool ok = first.count == 2 && first.duration() >= 20.0;
      pass = pass && ok;
      detail << fmt("first dwell count=%zu for %.1f", first.count, first.duration());
      if (p.dwell_intervals.size() > 1) detail << fmt(" then %zu", p.dwell_intervals[1].count);
      detail << "; ";
    } catch (const NumericalError& e) {
      pass = false;
      detail << "blow-up (" << e.what() << "); ";
    }
  }
  return {pass, detail.str() + "(need count 2 for >= 20 of T=40)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"1 over-smoothing contrast", oversmoothing_contrast},
      {"2 non-smoothing on P10", non_smoothing_theorem},
      {"3 gradient exactness", gradient_exactness},
      {"4 solver order", solver_order},
      {"5 oracle equivalence", oracle_equivalence},
      {"6 degenerate GRAND", degenerate_grand},
      {"7 toy classification", toy_classification},
      {"8 metastability dwell", metastability_dwell},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s criterion %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
