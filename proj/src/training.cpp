#include "grade/training.hpp"

#include "grade/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace grade {

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index cols_if_empty = 0) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  const auto cols = rows.empty() ? cols_if_empty : static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (static_cast<Eigen::Index>(rows[r].size()) != cols) throw InputError("ragged matrix in JSON");
    for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
  }
  return m;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.begin(), v.end()}; }

template <class M>
void append(Eigen::VectorXd& out, Eigen::Index& at, const M& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[at++] = m(r, c);
  }
}

template <class M>
void extract(const Eigen::VectorXd& in, Eigen::Index& at, M& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = in[at++];
  }
}

void check_shapes(const ModelParams& p, const Dataset& ds, const DynamicsConfig& dyn) {
  const auto h = p.enc_w.cols();
  if (p.enc_w.rows() != ds.features.cols()) throw InputError("encoder rows must equal the feature dimension");
  if (p.enc_b.size() != h || p.dec_w.rows() != h) throw InputError("hidden dimension mismatch");
  if (p.dec_b.size() != p.dec_w.cols()) throw InputError("decoder bias size mismatch");
  if (p.dec_w.cols() < ds.num_classes()) throw InputError("decoder has fewer outputs than classes");
  if (uses_projection(dyn)) {
    if (!p.theta) throw InputError("attention dynamics need a projection in the model parameters");
    p.theta->validate(static_cast<std::size_t>(h));
  }
}

StateMatrix encode(const ModelParams& p, const StateMatrix& f) {
  StateMatrix x = f * p.enc_w;
  x.rowwise() += p.enc_b.transpose();
  return x;
}

StateMatrix decode(const ModelParams& p, const StateMatrix& x) {
  StateMatrix z = x * p.dec_w;
  z.rowwise() += p.dec_b.transpose();
  return z;
}

std::size_t mask_count(const std::vector<bool>& mask) {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

// Softmax minus one-hot, divided by the mask size, on masked rows.
StateMatrix loss_gradient(const StateMatrix& logits, const std::vector<int>& labels,
                          const std::vector<bool>& mask) {
  const double m = static_cast<double>(mask_count(mask));
  StateMatrix dz = StateMatrix::Zero(logits.rows(), logits.cols());
  for (Eigen::Index u = 0; u < logits.rows(); ++u) {
    if (!mask[static_cast<std::size_t>(u)]) continue;
    const double top = logits.row(u).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(u).array() - top).exp().matrix();
    dz.row(u) = e / e.sum();
    dz(u, labels[static_cast<std::size_t>(u)]) -= 1.0;
    dz.row(u) /= m;
  }
  return dz;
}

void accumulate_theta(ModelParams& grad, const RhsVjp& v) {
  if (!grad.theta) return;
  if (v.dtheta_adjacency.size() > 0) grad.theta->theta += v.dtheta_adjacency;
  if (v.dtheta_kernel.size() > 0) grad.theta->theta += v.dtheta_kernel;
}

void require_finite_grad(const StateMatrix& g, std::size_t step) {
  if (!g.allFinite()) {
    throw NumericalError("non-finite gradient arose in the backward pass of step " + std::to_string(step));
  }
}

}  // namespace

std::size_t ModelParams::size() const {
  return static_cast<std::size_t>(enc_w.size() + enc_b.size() + dec_w.size() + dec_b.size() +
                                  (theta ? theta->theta.size() : 0));
}

Eigen::VectorXd ModelParams::flatten() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(size()));
  Eigen::Index at = 0;
  append(out, at, enc_w);
  append(out, at, enc_b);
  append(out, at, dec_w);
  append(out, at, dec_b);
  if (theta) append(out, at, theta->theta);
  return out;
}

ModelParams ModelParams::unflatten(const Eigen::VectorXd& v) const {
  if (static_cast<std::size_t>(v.size()) != size()) throw InputError("parameter vector has the wrong length");
  ModelParams out = *this;
  Eigen::Index at = 0;
  extract(v, at, out.enc_w);
  extract(v, at, out.enc_b);
  extract(v, at, out.dec_w);
  extract(v, at, out.dec_b);
  if (out.theta) extract(v, at, out.theta->theta);
  return out;
}

ModelParams ModelParams::zeros_like() const {
  return unflatten(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size())));
}

void to_json(nlohmann::json& j, const ModelParams& p) {
  j = {{"encoder", {{"weight", matrix_to_json(p.enc_w)}, {"bias", to_std(p.enc_b)}}},
       {"decoder", {{"weight", matrix_to_json(p.dec_w)}, {"bias", to_std(p.dec_b)}}},
       {"theta", nullptr}};
  if (p.theta) j["theta"] = {{"theta", matrix_to_json(p.theta->theta)}, {"scale", p.theta->scale}};
}

void from_json(const nlohmann::json& j, ModelParams& p) {
  try {
    ModelParams out;
    out.enc_b = vector_from_json(j.at("encoder").at("bias"));
    out.enc_w = matrix_from_json(j.at("encoder").at("weight"), out.enc_b.size());
    out.dec_b = vector_from_json(j.at("decoder").at("bias"));
    out.dec_w = matrix_from_json(j.at("decoder").at("weight"), out.dec_b.size());
    if (j.contains("theta") && !j.at("theta").is_null()) {
      out.theta = ProjectionParams{matrix_from_json(j.at("theta").at("theta")), j.at("theta").at("scale").get<double>()};
    }
    p = std::move(out);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("invalid model parameters: ") + e.what());
  }
}

DynamicsConfig TrainConfig::default_training_dynamics() {
  DynamicsConfig d;
  d.activation = Activation::tanh;
  d.kernel.kind = KernelKind::gaussian;
  d.kernel.bandwidth = 1.0;
  d.kernel.normalize_rows = true;
  return d;
}

SolverConfig TrainConfig::default_training_solver() {
  SolverConfig s;
  s.method = Method::euler;
  s.step = 0.1;
  s.horizon = 0.3;
  return s;
}

void TrainConfig::validate() const {
  dynamics.validate();
  solver.validate();
  if (!solver.fixed_step()) throw InputError("training requires a fixed-step solver (euler or rk4)");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw InputError("learning_rate must be >= 0");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw InputError("weight_decay must be >= 0");
  if (hidden_dim == 0) throw InputError("hidden_dim must be >= 1");
  if (!std::isfinite(loss_scale)) throw InputError("loss_scale must be finite");
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) throw InputError("init_scale must be >= 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"dynamics", c.dynamics},         {"solver", c.solver},   {"learning_rate", c.learning_rate},
       {"epochs", c.epochs},             {"weight_decay", c.weight_decay},
       {"seed", c.seed},                 {"hidden_dim", c.hidden_dim},
       {"init_scale", c.init_scale},     {"loss_scale", c.loss_scale}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw InputError("train config must be a JSON object");
  static const std::vector<std::string> known{"dynamics", "solver",     "learning_rate", "epochs",
                                              "weight_decay", "seed", "hidden_dim",    "init_scale", "loss_scale"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw InputError("unknown train field '" + key + "'");
    }
  }
  TrainConfig out;
  try {
    if (j.contains("dynamics")) out.dynamics = j.at("dynamics").get<DynamicsConfig>();
    if (j.contains("solver")) out.solver = j.at("solver").get<SolverConfig>();
    out.learning_rate = j.value("learning_rate", out.learning_rate);
    out.epochs = j.value("epochs", out.epochs);
    out.weight_decay = j.value("weight_decay", out.weight_decay);
    out.seed = j.value("seed", out.seed);
    out.hidden_dim = j.value("hidden_dim", out.hidden_dim);
    out.init_scale = j.value("init_scale", out.init_scale);
    out.loss_scale = j.value("loss_scale", out.loss_scale);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("invalid train config: ") + e.what());
  }
  out.validate();
  c = out;
}

bool uses_projection(const DynamicsConfig& cfg) {
  return (cfg.diffusion_on && cfg.attention) ||
         (cfg.aggregation_on && cfg.kernel.kind == KernelKind::attention);
}

ModelParams init_params(std::size_t d_in, std::size_t num_classes, const TrainConfig& cfg) {
  if (d_in == 0 || num_classes == 0) throw InputError("init_params: empty input or output dimension");
  std::mt19937_64 rng(cfg.seed);
  const auto h = static_cast<Eigen::Index>(cfg.hidden_dim);
  auto gaussian = [&](Eigen::Index rows, Eigen::Index cols, double std) {
    std::normal_distribution<double> dist(0.0, std);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
    }
    return m;
  };
  ModelParams p;
  p.enc_w = gaussian(static_cast<Eigen::Index>(d_in), h, cfg.init_scale / std::sqrt(static_cast<double>(d_in)));
  p.enc_b = Eigen::VectorXd::Zero(h);
  p.dec_w = gaussian(h, static_cast<Eigen::Index>(num_classes), 1.0 / std::sqrt(static_cast<double>(h)));
  p.dec_b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_classes));
  if (uses_projection(cfg.dynamics)) {
    const auto& given = cfg.dynamics.attention ? cfg.dynamics.attention : cfg.dynamics.kernel.theta;
    p.theta = given && given->theta.size() > 0 ? *given : ProjectionParams::identity(cfg.hidden_dim);
  }
  return p;
}

DynamicsConfig bind_params(const DynamicsConfig& cfg, const ModelParams& p) {
  DynamicsConfig out = cfg;
  if (!uses_projection(cfg)) return out;
  if (!p.theta) throw InputError("attention dynamics need a projection in the model parameters");
  if (out.attention) out.attention = *p.theta;
  if (out.kernel.kind == KernelKind::attention) out.kernel.theta = *p.theta;
  return out;
}

ForwardResult forward(const ModelParams& p, const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  check_shapes(p, ds, cfg.dynamics);
  const GradeSystem system(bind_params(cfg.dynamics, p), ds.graph);
  ForwardResult out;
  out.traj = integrate(system, encode(p, ds.features), cfg.solver);
  out.logits = decode(p, out.traj.final_state());
  return out;
}

double loss(const StateMatrix& logits, const std::vector<int>& labels, const std::vector<bool>& mask) {
  if (labels.size() != static_cast<std::size_t>(logits.rows()) || mask.size() != labels.size()) {
    throw InputError("loss: logits, labels and mask disagree in length");
  }
  const std::size_t m = mask_count(mask);
  if (m == 0) throw InputError("loss: mask selects no nodes");
  double total = 0.0;
  for (Eigen::Index u = 0; u < logits.rows(); ++u) {
    if (!mask[static_cast<std::size_t>(u)]) continue;
    const int y = labels[static_cast<std::size_t>(u)];
    if (y < 0 || y >= logits.cols()) throw InputError("loss: label out of range");
    const double top = logits.row(u).maxCoeff();
    const double lse = top + std::log((logits.row(u).array() - top).exp().sum());
    total += lse - logits(u, y);
  }
  return total / static_cast<double>(m);
}

double accuracy(const StateMatrix& logits, const std::vector<int>& labels, const std::vector<bool>& mask) {
  std::size_t hit = 0, seen = 0;
  for (Eigen::Index u = 0; u < logits.rows(); ++u) {
    if (!mask[static_cast<std::size_t>(u)]) continue;
    Eigen::Index best = 0;
    logits.row(u).maxCoeff(&best);
    hit += best == labels[static_cast<std::size_t>(u)] ? 1 : 0;
    ++seen;
  }
  return seen == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(seen);
}

double training_loss(const ModelParams& p, const Dataset& ds, const TrainConfig& cfg) {
  return cfg.loss_scale * loss(forward(p, ds, cfg).logits, ds.labels, ds.train_mask);
}

LossAndGrad loss_and_grad(const ModelParams& p, const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  check_shapes(p, ds, cfg.dynamics);
  const DynamicsConfig dyn = bind_params(cfg.dynamics, p);
  const GradeSystem system(dyn, ds.graph);
  const auto grid = fixed_step_grid(cfg.solver.step, cfg.solver.horizon);
  const bool rk4 = cfg.solver.method == Method::rk4;

  // Forward sweep retaining every point at which f is evaluated.
  std::vector<StateMatrix> states{encode(p, ds.features)};
  std::vector<std::array<StateMatrix, 4>> stages;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double h = grid[k + 1] - grid[k];
    if (rk4) {
      stages.emplace_back();
      states.push_back(rk4_step(system, states.back(), grid[k], h, &stages.back()));
    } else {
      states.push_back(euler_step(system, states.back(), grid[k], h));
    }
  }
  const StateMatrix logits = decode(p, states.back());
  LossAndGrad out{cfg.loss_scale * loss(logits, ds.labels, ds.train_mask), p.zeros_like()};
  if (!std::isfinite(out.loss)) throw NumericalError("loss is not finite");

  const StateMatrix dz = cfg.loss_scale * loss_gradient(logits, ds.labels, ds.train_mask);
  out.grad.dec_w = states.back().transpose() * dz;
  out.grad.dec_b = dz.colwise().sum().transpose();
  StateMatrix gx = dz * p.dec_w.transpose();

  auto vjp = [&](const StateMatrix& at, const StateMatrix& upstream) {
    RhsVjp v = rhs_vjp(dyn, ds.graph, at, upstream);
    accumulate_theta(out.grad, v);
    return std::move(v.dx);
  };
  for (std::size_t k = grid.size() - 1; k-- > 0;) {
    const double h = grid[k + 1] - grid[k];
    if (rk4) {
      const auto& y = stages[k];
      StateMatrix gk3 = (h / 3.0) * gx, gk2 = gk3, gk1 = (h / 6.0) * gx;
      StateMatrix gy = vjp(y[3], (h / 6.0) * gx);
      StateMatrix acc = gx + gy;
      gk3 += h * gy;
      gy = vjp(y[2], gk3);
      acc += gy;
      gk2 += (h / 2.0) * gy;
      gy = vjp(y[1], gk2);
      acc += gy;
      gk1 += (h / 2.0) * gy;
      acc += vjp(y[0], gk1);
      gx = std::move(acc);
    } else {
      gx += vjp(states[k], h * gx);
    }
    require_finite_grad(gx, k);
  }
  out.grad.enc_w = ds.features.transpose() * gx;
  out.grad.enc_b = gx.colwise().sum().transpose();
  return out;
}

ModelParams finite_difference_grad(const ModelParams& p, const Dataset& ds, const TrainConfig& cfg,
                                   double h) {
  if (!(h > 0.0)) throw InputError("finite difference step must be positive");
  const Eigen::VectorXd base = p.flatten();
  Eigen::VectorXd grad(base.size());
  for (Eigen::Index i = 0; i < base.size(); ++i) {
    Eigen::VectorXd plus = base, minus = base;
    plus[i] += h;
    minus[i] -= h;
    grad[i] = (training_loss(p.unflatten(plus), ds, cfg) - training_loss(p.unflatten(minus), ds, cfg)) / (2.0 * h);
  }
  return p.unflatten(grad);
}

double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double abs_floor) {
  if (a.size() != b.size()) throw InputError("max_relative_error: length mismatch");
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double scale = std::max(std::abs(a[i]), std::abs(b[i]));
    const double diff = std::abs(a[i] - b[i]);
    worst = std::max(worst, scale < abs_floor ? diff : diff / scale);
  }
  return worst;
}

namespace {

bool near_singularity(const GradCheckInstance& inst, double h) {
  const auto kind = inst.cfg.dynamics.kernel.kind;
  if (!inst.cfg.dynamics.aggregation_on || (kind != KernelKind::log && kind != KernelKind::power)) return false;
  const double limit = inst.cfg.dynamics.kernel.singularity_floor + 10.0 * h;
  const auto traj = forward(inst.params, inst.ds, inst.cfg).traj;
  for (const auto& x : traj.states) {
    for (const auto& e : inst.ds.graph.edges()) {
      if ((x.row(static_cast<Eigen::Index>(e.u)) - x.row(static_cast<Eigen::Index>(e.v))).norm() < limit) return true;
    }
  }
  return false;
}

GradCheckInstance draw_instance(std::mt19937_64& rng) {
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto coin = [&](double p) { return std::bernoulli_distribution(p)(rng); };
  auto gaussian = [&](Eigen::Index r, Eigen::Index c, double std) {
    std::normal_distribution<double> dist(0.0, std);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = dist(rng);
    }
    return m;
  };

  GradCheckInstance inst;
  const auto n = static_cast<std::size_t>(uniform_int(3, 8));
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId v = 1; v < n; ++v) edges.emplace_back(static_cast<NodeId>(uniform_int(0, static_cast<int>(v) - 1)), v);
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v = u + 1; v < n; ++v) {
      const bool present = std::find(edges.begin(), edges.end(), std::pair{u, v}) != edges.end();
      if (!present && coin(0.3)) edges.emplace_back(u, v);
    }
  }
  std::vector<double> weights;
  const bool weighted = coin(0.5);
  for (std::size_t i = 0; i < edges.size(); ++i) weights.push_back(weighted ? uniform(0.5, 1.5) : 1.0);

  const auto d_in = uniform_int(1, 3);
  const auto hidden = uniform_int(1, 3);
  const auto classes = uniform_int(2, 3);
  inst.ds.graph = Graph::from_edge_list(n, edges, std::span<const double>(weights));
  inst.ds.features = gaussian(static_cast<Eigen::Index>(n), d_in, 1.0);
  inst.ds.train_mask.assign(n, false);
  inst.ds.val_mask.assign(n, false);
  inst.ds.test_mask.assign(n, false);
  for (NodeId u = 0; u < n; ++u) {
    inst.ds.labels.push_back(uniform_int(0, classes - 1));
    (coin(0.7) ? inst.ds.train_mask : inst.ds.val_mask)[u] = true;
  }
  inst.ds.train_mask[0] = true;
  inst.ds.val_mask[0] = false;

  auto& cfg = inst.cfg;
  cfg.hidden_dim = static_cast<std::size_t>(hidden);
  const Activation acts[] = {Activation::identity, Activation::tanh, Activation::softplus};
  cfg.dynamics.activation = acts[uniform_int(0, 2)];
  const KernelKind kinds[] = {KernelKind::log, KernelKind::power, KernelKind::gaussian, KernelKind::attention};
  cfg.dynamics.kernel = KernelSpec{};
  cfg.dynamics.kernel.kind = kinds[uniform_int(0, 3)];
  cfg.dynamics.kernel.delta = uniform(0.0, 1.0);
  cfg.dynamics.kernel.bandwidth = uniform(0.5, 2.0);
  cfg.dynamics.kernel.normalize_rows = coin(0.5);
  const int terms = uniform_int(0, 3);  // 0: diffusion only, 1: aggregation only, else both
  cfg.dynamics.diffusion_on = terms != 1;
  cfg.dynamics.aggregation_on = terms != 0;
  cfg.dynamics.attention.reset();

  const auto k = uniform_int(1, 3);
  const ProjectionParams proj{gaussian(k, hidden, 0.5), static_cast<double>(k)};
  if (coin(0.5)) cfg.dynamics.attention = proj;
  if (cfg.dynamics.kernel.kind == KernelKind::attention) cfg.dynamics.kernel.theta = proj;

  const auto steps = uniform_int(1, 5);
  cfg.solver.method = Method::euler;
  cfg.solver.step = uniform(0.05, 0.3);
  cfg.solver.horizon = cfg.solver.step * steps;

  inst.params.enc_w = gaussian(d_in, hidden, 0.7);
  inst.params.enc_b = gaussian(hidden, 1, 0.3);
  inst.params.dec_w = gaussian(hidden, classes, 1.0);
  inst.params.dec_b = gaussian(classes, 1, 0.3);
  if (uses_projection(cfg.dynamics)) inst.params.theta = proj;
  return inst;
}

}  // namespace

GradCheckInstance random_grad_check_instance(std::uint64_t seed, double h) {
  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    GradCheckInstance inst = draw_instance(rng);
    try {
      if (!near_singularity(inst, h)) return inst;
    } catch (const NumericalError&) {
      // blow-up during the draw; redraw
    }
  }
  throw NumericalError("could not draw a well-posed gradient check instance");
}

GradCheckReport grad_check(std::uint64_t seed, double h) {
  const auto inst = random_grad_check_instance(seed, h);
  const auto analytic = loss_and_grad(inst.params, inst.ds, inst.cfg);
  const auto numeric = finite_difference_grad(inst.params, inst.ds, inst.cfg, h);
  const auto& dyn = inst.cfg.dynamics;
  return {seed,
          max_relative_error(analytic.grad.flatten(), numeric.flatten()),
          analytic.loss,
          inst.params.size(),
          inst.ds.size(),
          fixed_step_grid(inst.cfg.solver.step, inst.cfg.solver.horizon).size() - 1,
          dyn.aggregation_on ? to_string(dyn.kernel.kind) : "none",
          !dyn.diffusion_on ? "none" : dyn.attention ? "attention" : "static_row_normalized",
          to_string(dyn.activation)};
}

TrainResult train(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  ds.validate();
  if (mask_count(ds.train_mask) == 0 || mask_count(ds.val_mask) == 0) {
    throw InputError("training needs nonempty train and validation masks");
  }
  ModelParams p = init_params(static_cast<std::size_t>(ds.features.cols()),
                              static_cast<std::size_t>(ds.num_classes()), cfg);
  TrainResult result;
  result.best_val_acc = -1.0;
  for (std::size_t epoch = 0; epoch <= cfg.epochs; ++epoch) {
    const auto fwd = forward(p, ds, cfg);
    const double l = cfg.loss_scale * loss(fwd.logits, ds.labels, ds.train_mask);
    if (!std::isfinite(l)) throw NumericalError("training diverged at epoch " + std::to_string(epoch));
    const EpochMetrics m{epoch, l, accuracy(fwd.logits, ds.labels, ds.val_mask),
                         accuracy(fwd.logits, ds.labels, ds.test_mask)};
    result.metrics.push_back(m);
    if (m.val_acc > result.best_val_acc) {
      result.best_val_acc = m.val_acc;
      result.best_epoch = epoch;
      result.test_acc = m.test_acc;
      result.params = p;
    }
    if (epoch == cfg.epochs || cfg.learning_rate == 0.0) {
      if (cfg.learning_rate == 0.0) {
        for (std::size_t e = epoch + 1; e <= cfg.epochs; ++e) result.metrics.push_back({e, m.loss, m.val_acc, m.test_acc});
      }
      break;
    }
    const auto lg = loss_and_grad(p, ds, cfg);
    const Eigen::VectorXd w = p.flatten();
    p = p.unflatten(w - cfg.learning_rate * (lg.grad.flatten() + cfg.weight_decay * w));
  }
  return result;
}

double logistic_baseline(const Dataset& ds, std::size_t epochs, double learning_rate, double weight_decay) {
  ds.validate();
  const auto d = ds.features.cols();
  const auto c = static_cast<Eigen::Index>(ds.num_classes());
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, c);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(c);
  double best_val = -1.0, test_at_best = 0.0;
  for (std::size_t epoch = 0; epoch <= epochs; ++epoch) {
    StateMatrix z = ds.features * w;
    z.rowwise() += b.transpose();
    const double val = accuracy(z, ds.labels, ds.val_mask);
    if (val > best_val) {
      best_val = val;
      test_at_best = accuracy(z, ds.labels, ds.test_mask);
    }
    if (epoch == epochs) break;
    const StateMatrix dz = loss_gradient(z, ds.labels, ds.train_mask);
    w -= learning_rate * (ds.features.transpose() * dz + weight_decay * w);
    b -= learning_rate * (dz.colwise().sum().transpose() + weight_decay * b);
  }
  return test_at_best;
}

nlohmann::json checkpoint_json(const ModelParams& p, const TrainConfig& cfg) {
  nlohmann::json params = p;
  return {{"encoder", params["encoder"]},
          {"decoder", params["decoder"]},
          {"theta", params["theta"]},
          {"dynamics_config", cfg.dynamics},
          {"solver_config", cfg.solver},
          {"train_config", cfg}};
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& m) {
  std::ostringstream out;
  out << "epoch,loss,val_acc,test_acc\n";
  for (const auto& r : m) {
    out << r.epoch << ',' << io::format_double(r.loss) << ',' << io::format_double(r.val_acc) << ','
        << io::format_double(r.test_acc) << '\n';
  }
  io::write_file_atomic(path, out.str());
}

}  // namespace grade
