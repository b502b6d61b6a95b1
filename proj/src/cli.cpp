#include "grade/cli.hpp"

#include "grade/csbm.hpp"
#include "grade/dataset_io.hpp"
#include "grade/diagnostics.hpp"
#include "grade/dynamics.hpp"
#include "grade/solvers.hpp"
#include "grade/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>

namespace grade::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
}

// A config file is either a command config or a run manifest, whose resolved
// config replays the run.
json load_config(const std::string& path, const std::string& command) {
  json j = read_json_file(path);
  if (!j.is_object()) throw InputError(path + ": config must be a JSON object");
  if (j.contains("command") && j.contains("config")) {
    if (j.at("command") != command) {
      throw InputError(path + ": manifest is for '" + j.at("command").get<std::string>() + "', not '" + command + "'");
    }
    return j.at("config");
  }
  return j;
}

void reject_unknown(const json& j, const std::vector<std::string>& known, const std::string& what) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw InputError("unknown " + what + " field '" + key + "'");
    }
  }
}

template <class T>
T get_field(const json& j, const char* key, T fallback) {
  try {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
  } catch (const json::exception& e) {
    throw InputError(std::string("invalid value for '") + key + "': " + e.what());
  }
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config,
                    const json& seed, const json& inputs, const json& outputs, double seconds) {
  const json manifest{{"command", command},  {"config", config},   {"seed", seed},
                      {"inputs", inputs},    {"outputs", outputs}, {"version", kVersion},
                      {"wall_clock_seconds", seconds}};
  io::write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

void write_json(const fs::path& path, const json& j) { io::write_file_atomic(path, j.dump(2) + "\n"); }

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Overrides for the dynamics config. Unset flags leave the config-file value.
struct DynamicsFlags {
  std::optional<std::string> activation, adjacency, kernel;
  std::optional<double> delta, bandwidth, floor, attention_scale;
  std::optional<bool> normalize_rows, diffusion, aggregation;

  void add(CLI::App* app) {
    app->add_option("--activation", activation, "identity|tanh|softplus|relu");
    app->add_option("--adjacency", adjacency, "static|attention");
    app->add_option("--kernel", kernel, "log|power|gaussian|attention");
    app->add_option("--delta", delta, "power kernel exponent offset");
    app->add_option("--bandwidth", bandwidth, "gaussian kernel bandwidth");
    app->add_option("--floor", floor, "kernel singularity floor");
    app->add_option("--attention-scale", attention_scale, "attention score scale");
    app->add_option("--normalize-rows", normalize_rows, "row-normalize the kernel (true|false)");
    app->add_option("--diffusion", diffusion, "enable the diffusion term (true|false)");
    app->add_option("--aggregation", aggregation, "enable the aggregation term (true|false)");
  }

  void apply(DynamicsConfig& c) const {
    if (activation) c.activation = activation_from_string(*activation);
    if (adjacency) {
      if (*adjacency == "static") {
        c.attention.reset();
      } else if (*adjacency == "attention") {
        if (!c.attention) c.attention = ProjectionParams{Eigen::MatrixXd(0, 0), 1.0};
      } else {
        throw InputError("--adjacency must be static or attention");
      }
    }
    if (attention_scale) {
      if (!c.attention) throw InputError("--attention-scale needs attention adjacency");
      c.attention->scale = *attention_scale;
    }
    if (kernel) c.kernel.kind = kernel_kind_from_string(*kernel);
    if (delta) c.kernel.delta = *delta;
    if (bandwidth) c.kernel.bandwidth = *bandwidth;
    if (floor) c.kernel.singularity_floor = *floor;
    if (normalize_rows) c.kernel.normalize_rows = *normalize_rows;
    if (diffusion) c.diffusion_on = *diffusion;
    if (aggregation) c.aggregation_on = *aggregation;
    c.validate();
  }
};

struct SolverFlags {
  std::optional<std::string> method;
  std::optional<double> step, horizon, rel_tol, abs_tol;
  std::optional<std::size_t> max_steps, record_every;

  void add(CLI::App* app) {
    app->add_option("--method", method, "euler|rk4|dopri5");
    app->add_option("--step", step, "fixed step size");
    app->add_option("--horizon", horizon, "final time T");
    app->add_option("--rel-tol", rel_tol, "dopri5 relative tolerance");
    app->add_option("--abs-tol", abs_tol, "dopri5 absolute tolerance");
    app->add_option("--max-steps", max_steps, "step budget");
    app->add_option("--record-every", record_every, "keep every k-th accepted step");
  }

  void apply(SolverConfig& c) const {
    if (method) c.method = method_from_string(*method);
    if (step) c.step = *step;
    if (horizon) c.horizon = *horizon;
    if (rel_tol) c.rel_tol = *rel_tol;
    if (abs_tol) c.abs_tol = *abs_tol;
    if (max_steps) c.max_steps = *max_steps;
    if (record_every) c.record_every = *record_every;
    c.validate();
  }
};

// ---- generate ---------------------------------------------------------------

json csbm_to_json(const CsbmConfig& c) {
  return {{"n", c.n},
          {"classes", c.classes},
          {"p_intra", c.p_intra},
          {"p_inter", c.p_inter},
          {"feat_dim", c.feat_dim},
          {"class_mean_separation", c.class_mean_separation},
          {"noise_std", c.noise_std},
          {"train_fraction", c.train_fraction},
          {"val_fraction", c.val_fraction}};
}

CsbmConfig csbm_from_json(const json& j) {
  reject_unknown(j, {"n", "classes", "p_intra", "p_inter", "feat_dim", "class_mean_separation", "noise_std",
                     "train_fraction", "val_fraction"},
                 "csbm");
  CsbmConfig c;
  c.n = get_field(j, "n", c.n);
  c.classes = get_field(j, "classes", c.classes);
  c.p_intra = get_field(j, "p_intra", c.p_intra);
  c.p_inter = get_field(j, "p_inter", c.p_inter);
  c.feat_dim = get_field(j, "feat_dim", c.feat_dim);
  c.class_mean_separation = get_field(j, "class_mean_separation", c.class_mean_separation);
  c.noise_std = get_field(j, "noise_std", c.noise_std);
  c.train_fraction = get_field(j, "train_fraction", c.train_fraction);
  c.val_fraction = get_field(j, "val_fraction", c.val_fraction);
  return c;
}

struct GenerateArgs {
  std::optional<std::string> config;
  std::string out;
  std::optional<std::size_t> n, feat_dim;
  std::optional<double> p_intra, p_inter, separation, noise, train_fraction, val_fraction;
  std::optional<std::uint64_t> seed;
};

int run_generate(const GenerateArgs& a, std::ostream& out) {
  const Stopwatch clock;
  CsbmConfig cfg;
  std::uint64_t seed = 0;
  if (a.config) {
    const json j = load_config(*a.config, "generate");
    if (j.contains("csbm") || j.contains("seed")) {
      reject_unknown(j, {"csbm", "seed"}, "generate");
      if (j.contains("csbm")) cfg = csbm_from_json(j.at("csbm"));
      seed = get_field(j, "seed", seed);
    } else {
      cfg = csbm_from_json(j);
    }
  }
  if (a.n) cfg.n = *a.n;
  if (a.feat_dim) cfg.feat_dim = *a.feat_dim;
  if (a.p_intra) cfg.p_intra = *a.p_intra;
  if (a.p_inter) cfg.p_inter = *a.p_inter;
  if (a.separation) cfg.class_mean_separation = *a.separation;
  if (a.noise) cfg.noise_std = *a.noise;
  if (a.train_fraction) cfg.train_fraction = *a.train_fraction;
  if (a.val_fraction) cfg.val_fraction = *a.val_fraction;
  if (a.seed) seed = *a.seed;
  cfg.validate();

  const Dataset ds = csbm_generate(cfg, seed);
  const fs::path dir(a.out);
  io::write_dataset(dir, ds);
  const json resolved{{"csbm", csbm_to_json(cfg)}, {"seed", seed}};
  write_manifest(dir, "generate", resolved, seed, json::object(),
                 {"graph.txt", "features.csv", "labels.csv", "masks.csv"}, clock.seconds());
  out << "generated " << ds.size() << " nodes, " << ds.graph.edge_count() << " edges -> " << dir.string() << "\n";
  return kExitOk;
}

// ---- simulate / energy -------------------------------------------------------

struct RunConfig {
  std::string dataset;
  DynamicsConfig dynamics;
  SolverConfig solver;
  std::optional<std::string> trajectory;  // energy only
  std::optional<double> eps;
  double energy_floor = kDefaultEnergyFloor;
  double spread_floor = kDefaultSpreadFloor;

  json to_json(bool energy) const {
    json j{{"dataset", dataset}, {"dynamics", dynamics}, {"solver", solver},
           {"eps", eps ? json(*eps) : json(nullptr)}};
    if (energy) {
      j["trajectory"] = trajectory ? json(*trajectory) : json(nullptr);
      j["energy_floor"] = energy_floor;
      j["spread_floor"] = spread_floor;
    }
    return j;
  }
};

RunConfig run_config_from_json(const json& j, bool energy) {
  RunConfig c;
  const bool structured = j.contains("dynamics") || j.contains("solver") || j.contains("dataset");
  if (!structured) {
    c.dynamics = j.get<DynamicsConfig>();
    return c;
  }
  std::vector<std::string> known{"dataset", "dynamics", "solver", "eps"};
  if (energy) known.insert(known.end(), {"trajectory", "energy_floor", "spread_floor"});
  reject_unknown(j, known, energy ? "energy" : "simulate");
  c.dataset = get_field(j, "dataset", c.dataset);
  if (j.contains("dynamics")) c.dynamics = j.at("dynamics").get<DynamicsConfig>();
  if (j.contains("solver")) c.solver = j.at("solver").get<SolverConfig>();
  if (j.contains("eps") && !j.at("eps").is_null()) c.eps = get_field(j, "eps", 0.0);
  if (energy) {
    if (j.contains("trajectory") && !j.at("trajectory").is_null()) c.trajectory = get_field(j, "trajectory", std::string());
    c.energy_floor = get_field(j, "energy_floor", c.energy_floor);
    c.spread_floor = get_field(j, "spread_floor", c.spread_floor);
  }
  return c;
}

struct RunArgs {
  std::optional<std::string> config, dataset, trajectory;
  std::string out;
  std::optional<double> eps, energy_floor, spread_floor;
  DynamicsFlags dyn;
  SolverFlags solver;
};

RunConfig resolve_run(const RunArgs& a, const std::string& command) {
  const bool energy = command == "energy";
  RunConfig c = a.config ? run_config_from_json(load_config(*a.config, command), energy) : RunConfig{};
  if (a.dataset) c.dataset = *a.dataset;
  if (a.trajectory) c.trajectory = *a.trajectory;
  if (a.eps) c.eps = *a.eps;
  if (a.energy_floor) c.energy_floor = *a.energy_floor;
  if (a.spread_floor) c.spread_floor = *a.spread_floor;
  a.dyn.apply(c.dynamics);
  a.solver.apply(c.solver);
  if (c.dataset.empty()) throw InputError(command + ": --dataset is required");
  if (c.eps && !(*c.eps > 0.0)) throw InputError("--eps must be positive");
  return c;
}

Trajectory simulate_dataset(RunConfig& c, const Dataset& ds) {
  const auto d = static_cast<std::size_t>(ds.features.cols());
  c.dynamics = resolve_projections(c.dynamics, d);
  c.dynamics.validate(d);
  const GradeSystem system(c.dynamics, ds.graph);
  return integrate(system, ds.features, c.solver);
}

int run_simulate(const RunArgs& a, std::ostream& out) {
  const Stopwatch clock;
  RunConfig c = resolve_run(a, "simulate");
  const Dataset ds = io::read_dataset(c.dataset);
  const Trajectory traj = simulate_dataset(c, ds);
  const double eps = c.eps.value_or(default_cluster_eps(traj.states.front()));
  const EnergyReport r = energy_report(traj, ds.graph, eps);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_trajectory_csv(dir / "trajectory.csv", traj);
  write_json(dir / "summary.json", {{"times", r.times},
                                    {"energy", r.energy},
                                    {"spread", r.spread},
                                    {"cluster_count", r.clusters},
                                    {"eps", eps},
                                    {"steps", traj.step_count},
                                    {"rejected_steps", traj.rejected_steps}});
  write_manifest(dir, "simulate", c.to_json(false), nullptr, {{"dataset", c.dataset}},
                 {"trajectory.csv", "summary.json"}, clock.seconds());
  out << "simulated " << traj.step_count << " steps to t=" << traj.final_time() << ", " << traj.times.size()
      << " records, final energy " << r.energy.back() << "\n";
  return kExitOk;
}

int run_energy(const RunArgs& a, std::ostream& out) {
  const Stopwatch clock;
  RunConfig c = resolve_run(a, "energy");
  const Dataset ds = io::read_dataset(c.dataset);
  Trajectory traj;
  if (c.trajectory) {
    traj = read_trajectory_csv(*c.trajectory);
    if (static_cast<std::size_t>(traj.states.front().rows()) != ds.size()) {
      throw InputError("trajectory node count does not match the dataset graph");
    }
  } else {
    traj = simulate_dataset(c, ds);
  }
  const double eps = c.eps.value_or(default_cluster_eps(traj.states.front()));
  const EnergyReport r = energy_report(traj, ds.graph, eps, c.energy_floor, c.spread_floor);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_energy_csv(dir / "energy.csv", r);
  write_json(dir / "energy_summary.json", energy_summary_json(r));
  json inputs{{"dataset", c.dataset}};
  if (c.trajectory) inputs["trajectory"] = *c.trajectory;
  write_manifest(dir, "energy", c.to_json(true), nullptr, inputs, {"energy.csv", "energy_summary.json"},
                 clock.seconds());
  out << "verdict " << to_string(r.verdict) << ": final energy " << r.energy.back() << ", spread "
      << r.spread.back() << ", clusters " << r.clusters.back() << "\n";
  return kExitOk;
}

// ---- grad-check --------------------------------------------------------------

struct GradCheckArgs {
  std::optional<std::string> config, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> count;
  std::optional<double> h, tolerance;
};

int run_grad_check(const GradCheckArgs& a, std::ostream& out) {
  const Stopwatch clock;
  std::uint64_t seed = 1;
  std::size_t count = 1;
  double h = 1e-5, tolerance = 1e-5;
  if (a.config) {
    const json j = load_config(*a.config, "grad-check");
    reject_unknown(j, {"seed", "count", "h", "tolerance"}, "grad-check");
    seed = get_field(j, "seed", seed);
    count = get_field(j, "count", count);
    h = get_field(j, "h", h);
    tolerance = get_field(j, "tolerance", tolerance);
  }
  if (a.seed) seed = *a.seed;
  if (a.count) count = *a.count;
  if (a.h) h = *a.h;
  if (a.tolerance) tolerance = *a.tolerance;
  if (count == 0 || !(h > 0.0) || !(tolerance > 0.0)) throw InputError("grad-check: count, h and tolerance must be positive");

  json reports = json::array();
  double worst = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const auto r = grad_check(seed + i, h);
    worst = std::max(worst, r.max_rel_error);
    out << "seed " << r.seed << ": n=" << r.nodes << " steps=" << r.steps << " params=" << r.parameters
        << " kernel=" << r.kernel << " adjacency=" << r.adjacency << " activation=" << r.activation
        << " max_rel_error=" << std::scientific << std::setprecision(3) << r.max_rel_error
        << std::defaultfloat << std::setprecision(6) << "\n";
    reports.push_back({{"seed", r.seed},          {"max_rel_error", r.max_rel_error}, {"loss", r.loss},
                       {"parameters", r.parameters}, {"nodes", r.nodes},              {"steps", r.steps},
                       {"kernel", r.kernel},         {"adjacency", r.adjacency},      {"activation", r.activation}});
  }
  const bool pass = worst <= tolerance;
  out << "max relative error " << std::scientific << std::setprecision(3) << worst << std::defaultfloat
      << std::setprecision(6) << (pass ? " <= " : " > ") << tolerance << ": " << (pass ? "PASS" : "FAIL") << "\n";
  if (a.out) {
    const fs::path dir(*a.out);
    fs::create_directories(dir);
    write_json(dir / "grad_check.json", {{"max_rel_error", worst}, {"tolerance", tolerance}, {"pass", pass},
                                         {"instances", reports}});
    write_manifest(dir, "grad-check", {{"seed", seed}, {"count", count}, {"h", h}, {"tolerance", tolerance}}, seed,
                   json::object(), {"grad_check.json"}, clock.seconds());
  }
  return pass ? kExitOk : kExitNumerical;
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
  std::optional<std::string> config, dataset;
  std::string out;
  std::optional<std::size_t> epochs, hidden;
  std::optional<double> lr, weight_decay;
  std::optional<std::uint64_t> seed;
  DynamicsFlags dyn;
  SolverFlags solver;
};

int run_train(const TrainArgs& a, std::ostream& out) {
  const Stopwatch clock;
  TrainConfig cfg;
  std::string dataset;
  if (a.config) {
    const json j = load_config(*a.config, "train");
    if (j.contains("train") || j.contains("dataset")) {
      reject_unknown(j, {"train", "dataset"}, "train");
      if (j.contains("train")) cfg = j.at("train").get<TrainConfig>();
      dataset = get_field(j, "dataset", dataset);
    } else {
      cfg = j.get<TrainConfig>();
    }
  }
  if (a.dataset) dataset = *a.dataset;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.hidden) cfg.hidden_dim = *a.hidden;
  if (a.lr) cfg.learning_rate = *a.lr;
  if (a.weight_decay) cfg.weight_decay = *a.weight_decay;
  if (a.seed) cfg.seed = *a.seed;
  a.dyn.apply(cfg.dynamics);
  a.solver.apply(cfg.solver);
  cfg.dynamics = resolve_projections(cfg.dynamics, cfg.hidden_dim);
  cfg.validate();
  if (dataset.empty()) throw InputError("train: --dataset is required");

  const Dataset ds = io::read_dataset(dataset);
  const TrainResult result = train(ds, cfg);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  json checkpoint = checkpoint_json(result.params, cfg);
  checkpoint["best_epoch"] = result.best_epoch;
  write_json(dir / "checkpoint.json", checkpoint);
  write_metrics_csv(dir / "metrics.csv", result.metrics);
  write_manifest(dir, "train", {{"dataset", dataset}, {"train", cfg}}, cfg.seed, {{"dataset", dataset}},
                 {"checkpoint.json", "metrics.csv"}, clock.seconds());
  out << "best epoch " << result.best_epoch << ": val_acc " << result.best_val_acc << ", test_acc "
      << result.test_acc << "\n";
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Graph aggregation-diffusion dynamics", "grade"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "sample a two-class cSBM dataset");
  generate->add_option("--config", gen.config, "JSON config or manifest");
  generate->add_option("--out", gen.out, "output dataset directory")->required();
  generate->add_option("--n", gen.n, "node count");
  generate->add_option("--feat-dim", gen.feat_dim, "feature dimension");
  generate->add_option("--p-intra", gen.p_intra, "within-class edge probability");
  generate->add_option("--p-inter", gen.p_inter, "across-class edge probability");
  generate->add_option("--separation", gen.separation, "distance between class means per coordinate");
  generate->add_option("--noise", gen.noise, "feature noise standard deviation");
  generate->add_option("--train-fraction", gen.train_fraction, "fraction of nodes in the train mask");
  generate->add_option("--val-fraction", gen.val_fraction, "fraction of nodes in the validation mask");
  generate->add_option("--seed", gen.seed, "random seed");

  RunArgs sim;
  auto* simulate = app.add_subcommand("simulate", "integrate the dynamics on a dataset");
  simulate->add_option("--config", sim.config, "JSON config or manifest");
  simulate->add_option("--dataset", sim.dataset, "dataset directory");
  simulate->add_option("--out", sim.out, "output directory")->required();
  simulate->add_option("--eps", sim.eps, "cluster distance threshold");
  sim.dyn.add(simulate);
  sim.solver.add(simulate);

  RunArgs en;
  auto* energy = app.add_subcommand("energy", "Dirichlet energy, spread and cluster diagnostics");
  energy->add_option("--config", en.config, "JSON config or manifest");
  energy->add_option("--dataset", en.dataset, "dataset directory (supplies the graph)");
  energy->add_option("--trajectory", en.trajectory, "trajectory CSV; omitted means simulate first");
  energy->add_option("--out", en.out, "output directory")->required();
  energy->add_option("--eps", en.eps, "cluster distance threshold");
  energy->add_option("--energy-floor", en.energy_floor, "verdict energy floor");
  energy->add_option("--spread-floor", en.spread_floor, "verdict spread floor");
  en.dyn.add(energy);
  en.solver.add(energy);

  GradCheckArgs gc;
  auto* gradcheck = app.add_subcommand("grad-check", "compare backprop against finite differences");
  gradcheck->add_option("--config", gc.config, "JSON config or manifest");
  gradcheck->add_option("--seed", gc.seed, "first instance seed");
  gradcheck->add_option("--count", gc.count, "number of instances");
  gradcheck->add_option("--fd-step", gc.h, "central difference step");
  gradcheck->add_option("--tolerance", gc.tolerance, "pass threshold on max relative error");
  gradcheck->add_option("--out", gc.out, "optional output directory");

  TrainArgs tr;
  auto* trainer = app.add_subcommand("train", "fit the classifier by gradient descent");
  trainer->add_option("--config", tr.config, "JSON config or manifest");
  trainer->add_option("--dataset", tr.dataset, "dataset directory");
  trainer->add_option("--out", tr.out, "output directory")->required();
  trainer->add_option("--epochs", tr.epochs, "gradient steps");
  trainer->add_option("--hidden", tr.hidden, "hidden dimension");
  trainer->add_option("--lr", tr.lr, "learning rate");
  trainer->add_option("--weight-decay", tr.weight_decay, "L2 coefficient");
  trainer->add_option("--seed", tr.seed, "initialization seed");
  tr.dyn.add(trainer);
  tr.solver.add(trainer);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (generate->parsed()) return run_generate(gen, out);
    if (simulate->parsed()) return run_simulate(sim, out);
    if (energy->parsed()) return run_energy(en, out);
    if (gradcheck->parsed()) return run_grad_check(gc, out);
    if (trainer->parsed()) return run_train(tr, out);
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace grade::cli
