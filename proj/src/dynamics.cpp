#include "grade/dynamics.hpp"

#include "grade/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace grade {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::softplus: return "softplus";
    case Activation::relu: return "relu";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "tanh") return Activation::tanh;
  if (s == "softplus") return Activation::softplus;
  if (s == "relu") return Activation::relu;
  throw InputError("unknown activation '" + s + "'");
}

double activate(Activation a, double x) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::tanh: return std::tanh(x);
    case Activation::softplus: return x > 30.0 ? x : std::log1p(std::exp(x));
    case Activation::relu: return x > 0.0 ? x : 0.0;
  }
  return x;
}

double activate_derivative(Activation a, double x) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::softplus: return 1.0 / (1.0 + std::exp(-x));
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

StateMatrix activate(Activation a, const StateMatrix& x) {
  if (a == Activation::identity) return x;
  return x.unaryExpr([a](double v) { return activate(a, v); });
}

void DynamicsConfig::validate() const {
  if (!diffusion_on && !aggregation_on) {
    throw InputError("dynamics config must enable diffusion, aggregation, or both");
  }
  kernel.validate();
}

void DynamicsConfig::validate(std::size_t state_dim) const {
  validate();
  if (attention) attention->validate(state_dim);
  if (kernel.kind == KernelKind::attention && kernel.theta) kernel.theta->validate(state_dim);
}

DynamicsConfig resolve_projections(DynamicsConfig cfg, std::size_t state_dim) {
  if (cfg.attention && cfg.attention->theta.size() == 0) {
    cfg.attention = ProjectionParams::identity(state_dim);
  }
  return cfg;
}

namespace {

nlohmann::json projection_to_json(const ProjectionParams& p) {
  std::vector<std::vector<double>> rows;
  for (Eigen::Index r = 0; r < p.theta.rows(); ++r) {
    rows.emplace_back(p.theta.row(r).begin(), p.theta.row(r).end());
  }
  return {{"theta", rows}, {"scale", p.scale}};
}

ProjectionParams projection_from_json(const nlohmann::json& j) {
  const auto rows = j.at("theta").get<std::vector<std::vector<double>>>();
  ProjectionParams p;
  const auto cols = rows.empty() ? 0 : rows.front().size();
  p.theta.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw InputError("ragged attention theta");
    for (std::size_t c = 0; c < cols; ++c) {
      p.theta(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  p.scale = j.value("scale", static_cast<double>(rows.size()));
  return p;
}

}  // namespace

void to_json(nlohmann::json& j, const DynamicsConfig& c) {
  j = nlohmann::json{{"activation", to_string(c.activation)},
                     {"adjacency_mode", c.attention ? "attention" : "static_row_normalized"},
                     {"kernel", c.kernel},
                     {"diffusion_on", c.diffusion_on},
                     {"aggregation_on", c.aggregation_on}};
  if (c.attention && c.attention->theta.size() > 0) j["attention"] = projection_to_json(*c.attention);
}

void from_json(const nlohmann::json& j, DynamicsConfig& c) {
  if (!j.is_object()) throw InputError("dynamics config must be a JSON object");
  static const std::vector<std::string> known{"activation", "adjacency_mode", "attention",
                                              "kernel", "diffusion_on", "aggregation_on"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw InputError("unknown dynamics field '" + key + "'");
    }
  }
  DynamicsConfig out;
  try {
    if (j.contains("activation")) out.activation = activation_from_string(j.at("activation").get<std::string>());
    const auto mode = j.value("adjacency_mode", std::string("static_row_normalized"));
    if (mode == "attention") {
      // An empty projection is resolved to the identity once the state
      // dimension is known (see resolve_projections).
      out.attention = j.contains("attention") ? projection_from_json(j.at("attention"))
                                              : ProjectionParams{Eigen::MatrixXd(0, 0), 1.0};
    } else if (mode != "static_row_normalized") {
      throw InputError("unknown adjacency_mode '" + mode + "'");
    }
    if (j.contains("kernel")) out.kernel = j.at("kernel").get<KernelSpec>();
    out.diffusion_on = j.value("diffusion_on", out.diffusion_on);
    out.aggregation_on = j.value("aggregation_on", out.aggregation_on);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("invalid dynamics config: ") + e.what());
  }
  out.validate();
  c = std::move(out);
}

EdgeMatrix attention_adjacency(const StateMatrix& x, const ProjectionParams& p, const Graph& g) {
  for (NodeId u = 0; u < g.size(); ++u) {
    if (g.degree(u) == 0) {
      throw InputError("node " + std::to_string(u) + " has no neighbors; attention undefined");
    }
  }
  return attention_weights(x, p, g);
}

StateMatrix diffusion_term(const DynamicsConfig& cfg, const EdgeMatrix& a, const StateMatrix& x) {
  if (a.rows() != static_cast<std::size_t>(x.rows())) {
    throw InputError("adjacency has " + std::to_string(a.rows()) + " rows, state has " +
                     std::to_string(x.rows()));
  }
  const StateMatrix s = activate(cfg.activation, x);
  StateMatrix out(x.rows(), x.cols());
  parallel_for(a.rows(), [&](std::size_t u) {
    auto row = out.row(static_cast<Eigen::Index>(u));
    row.setZero();
    for (auto k = a.row_begin(u); k < a.row_end(u); ++k) {
      row += a[k] * s.row(static_cast<Eigen::Index>(a.col(k)));
    }
    row -= s.row(static_cast<Eigen::Index>(u));
  });
  return out;
}

namespace {

// (KX)_v = sum_k kappa_vk x_k
StateMatrix kernel_times_state(const EdgeMatrix& k, const StateMatrix& x) {
  StateMatrix p = StateMatrix::Zero(x.rows(), x.cols());
  for (NodeId v = 0; v < k.rows(); ++v) {
    auto row = p.row(static_cast<Eigen::Index>(v));
    for (auto s = k.row_begin(v); s < k.row_end(v); ++s) {
      row += k[s] * x.row(static_cast<Eigen::Index>(k.col(s)));
    }
  }
  return p;
}

// B_u = sum_v w_uv [(KX)_v - (KX)_u]
StateMatrix aggregation_bracket(const Graph& g, const StateMatrix& p) {
  StateMatrix b(p.rows(), p.cols());
  parallel_for(g.size(), [&](std::size_t u) {
    const auto ui = static_cast<Eigen::Index>(u);
    auto row = b.row(ui);
    row.setZero();
    auto nb = g.neighbors(u);
    auto w = g.neighbor_weights(u);
    for (std::size_t i = 0; i < nb.size(); ++i) {
      row += w[i] * (p.row(static_cast<Eigen::Index>(nb[i])) - p.row(ui));
    }
  });
  return b;
}

void check_state(const Graph& g, const StateMatrix& x) {
  if (static_cast<std::size_t>(x.rows()) != g.size()) {
    throw InputError("state has " + std::to_string(x.rows()) + " rows but graph has " +
                     std::to_string(g.size()) + " nodes");
  }
  if (!x.allFinite()) throw NumericalError("state contains non-finite values");
}

ProjectionParams kernel_projection(const KernelSpec& spec, Eigen::Index d) {
  return spec.theta ? *spec.theta : ProjectionParams::identity(static_cast<std::size_t>(d));
}

StateMatrix rhs_impl(const DynamicsConfig& cfg, const Graph& g, const StateMatrix& x,
                     const EdgeMatrix* static_a) {
  cfg.validate();
  check_state(g, x);
  StateMatrix out = StateMatrix::Zero(x.rows(), x.cols());
  if (cfg.diffusion_on) {
    if (static_a != nullptr) {
      out += diffusion_term(cfg, *static_a, x);
    } else {
      out += diffusion_term(cfg, diffusion_adjacency(cfg, g, x), x);
    }
  }
  if (cfg.aggregation_on) {
    out += aggregation_term(cfg, g, kernel_matrix(cfg.kernel, x, g), x);
  }
  return out;
}

// Backpropagates dL/dA through the row softmax of bilinear scores.
void softmax_vjp(const StateMatrix& x, const ProjectionParams& p, const Graph& g,
                 const EdgeMatrix& a, const std::vector<double>& da, StateMatrix& dx,
                 Eigen::MatrixXd& dtheta) {
  const StateMatrix q = x * p.theta.transpose();
  StateMatrix dq = StateMatrix::Zero(q.rows(), q.cols());
  for (NodeId u = 0; u < g.size(); ++u) {
    const auto ui = static_cast<Eigen::Index>(u);
    double inner = 0.0;
    for (auto s = g.row_begin(u); s < g.row_end(u); ++s) inner += a[s] * da[s];
    for (auto s = g.row_begin(u); s < g.row_end(u); ++s) {
      const double dscore = a[s] * (da[s] - inner) / p.scale;
      const auto vi = static_cast<Eigen::Index>(a.col(s));
      dq.row(ui) += dscore * q.row(vi);
      dq.row(vi) += dscore * q.row(ui);
    }
  }
  dx += dq * p.theta;
  dtheta += dq.transpose() * x;
}

}  // namespace

StateMatrix aggregation_term(const DynamicsConfig& /*cfg*/, const Graph& g, const EdgeMatrix& k,
                             const StateMatrix& x) {
  if (!k.supported_on(g)) throw InputError("kernel matrix is not supported on the graph's edges");
  if (static_cast<std::size_t>(x.rows()) != g.size()) {
    throw InputError("state rows do not match graph size");
  }
  const StateMatrix b = aggregation_bracket(g, kernel_times_state(k, x));
  return x.cwiseProduct(b);
}

EdgeMatrix diffusion_adjacency(const DynamicsConfig& cfg, const Graph& g, const StateMatrix& x) {
  if (cfg.attention) return attention_adjacency(x, *cfg.attention, g);
  return row_normalized_adjacency(g);
}

StateMatrix rhs(const DynamicsConfig& cfg, const Graph& g, const StateMatrix& x, double /*t*/) {
  return rhs_impl(cfg, g, x, nullptr);
}

RhsVjp rhs_vjp(const DynamicsConfig& cfg, const Graph& g, const StateMatrix& x,
               const StateMatrix& upstream) {
  cfg.validate();
  check_state(g, x);
  if (upstream.rows() != x.rows() || upstream.cols() != x.cols()) {
    throw InputError("upstream gradient shape does not match state");
  }
  RhsVjp out;
  out.dx = StateMatrix::Zero(x.rows(), x.cols());
  if (cfg.attention) out.dtheta_adjacency = Eigen::MatrixXd::Zero(cfg.attention->theta.rows(), cfg.attention->theta.cols());
  if (cfg.kernel.kind == KernelKind::attention && cfg.kernel.theta) {
    out.dtheta_kernel = Eigen::MatrixXd::Zero(cfg.kernel.theta->theta.rows(), cfg.kernel.theta->theta.cols());
  }
  const StateMatrix& grad = upstream;

  if (cfg.diffusion_on) {
    const EdgeMatrix a = diffusion_adjacency(cfg, g, x);
    const StateMatrix s = activate(cfg.activation, x);
    StateMatrix ds = -grad;
    std::vector<double> da(a.values().size(), 0.0);
    for (NodeId u = 0; u < g.size(); ++u) {
      const auto ui = static_cast<Eigen::Index>(u);
      for (auto k = a.row_begin(u); k < a.row_end(u); ++k) {
        const auto vi = static_cast<Eigen::Index>(a.col(k));
        ds.row(vi) += a[k] * grad.row(ui);
        da[k] = grad.row(ui).dot(s.row(vi));
      }
    }
    out.dx += ds.cwiseProduct(x.unaryExpr([&](double v) { return activate_derivative(cfg.activation, v); }));
    if (cfg.attention) softmax_vjp(x, *cfg.attention, g, a, da, out.dx, out.dtheta_adjacency);
  }

  if (cfg.aggregation_on) {
    KernelSpec raw_spec = cfg.kernel;
    raw_spec.normalize_rows = false;
    const EdgeMatrix raw = kernel_matrix(raw_spec, x, g);
    const EdgeMatrix k = cfg.kernel.normalize_rows ? row_normalize(raw) : raw;
    const StateMatrix p = kernel_times_state(k, x);
    const StateMatrix b = aggregation_bracket(g, p);

    out.dx += grad.cwiseProduct(b);
    const StateMatrix h = grad.cwiseProduct(x);
    // B_u = sum_v w_uv P_v - d_u P_u, so dP_v = sum_u w_uv H_u - d_v H_v.
    StateMatrix dp(h.rows(), h.cols());
    for (NodeId v = 0; v < g.size(); ++v) {
      const auto vi = static_cast<Eigen::Index>(v);
      auto row = dp.row(vi);
      row.setZero();
      auto nb = g.neighbors(v);
      auto w = g.neighbor_weights(v);
      for (std::size_t i = 0; i < nb.size(); ++i) {
        row += w[i] * (h.row(static_cast<Eigen::Index>(nb[i])) - h.row(vi));
      }
    }
    std::vector<double> dk(k.values().size());
    for (NodeId v = 0; v < g.size(); ++v) {
      const auto vi = static_cast<Eigen::Index>(v);
      for (auto s = k.row_begin(v); s < k.row_end(v); ++s) {
        const auto ki = static_cast<Eigen::Index>(k.col(s));
        out.dx.row(ki) += k[s] * dp.row(vi);
        dk[s] = dp.row(vi).dot(x.row(ki));
      }
    }
    if (cfg.kernel.normalize_rows) {
      for (NodeId v = 0; v < g.size(); ++v) {
        const double total = raw.row_sum(v);
        if (total == 0.0) {
          for (auto s = k.row_begin(v); s < k.row_end(v); ++s) dk[s] = 0.0;
          continue;
        }
        double inner = 0.0;
        for (auto s = k.row_begin(v); s < k.row_end(v); ++s) inner += dk[s] * k[s];
        for (auto s = k.row_begin(v); s < k.row_end(v); ++s) dk[s] = (dk[s] - inner) / total;
      }
    }
    if (cfg.kernel.kind == KernelKind::attention) {
      Eigen::MatrixXd scratch;
      Eigen::MatrixXd& dtheta = cfg.kernel.theta ? out.dtheta_kernel : scratch;
      const auto proj = kernel_projection(cfg.kernel, x.cols());
      if (!cfg.kernel.theta) scratch = Eigen::MatrixXd::Zero(proj.theta.rows(), proj.theta.cols());
      softmax_vjp(x, proj, g, raw, dk, out.dx, dtheta);
    } else {
      std::vector<double> z(static_cast<std::size_t>(x.cols())), dz(z.size());
      for (NodeId v = 0; v < g.size(); ++v) {
        const auto vi = static_cast<Eigen::Index>(v);
        for (auto s = raw.row_begin(v); s < raw.row_end(v); ++s) {
          const auto ki = static_cast<Eigen::Index>(raw.col(s));
          for (Eigen::Index c = 0; c < x.cols(); ++c) z[static_cast<std::size_t>(c)] = x(vi, c) - x(ki, c);
          kernel_scalar_grad(cfg.kernel, z, dz);
          for (Eigen::Index c = 0; c < x.cols(); ++c) {
            const double gz = dk[s] * dz[static_cast<std::size_t>(c)];
            out.dx(vi, c) += gz;
            out.dx(ki, c) -= gz;
          }
        }
      }
    }
  }
  return out;
}

GradeSystem::GradeSystem(DynamicsConfig cfg, Graph g) : cfg_(std::move(cfg)), g_(std::move(g)) {
  cfg_.validate();
  if (cfg_.diffusion_on && !cfg_.attention) static_adjacency_ = row_normalized_adjacency(g_);
}

StateMatrix GradeSystem::operator()(const StateMatrix& x, double /*t*/) const {
  return rhs_impl(cfg_, g_, x, static_adjacency_ ? &*static_adjacency_ : nullptr);
}

}  // namespace grade
