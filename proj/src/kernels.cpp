#include "grade/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace grade {

ProjectionParams ProjectionParams::identity(std::size_t d) {
  const auto k = static_cast<Eigen::Index>(d);
  return {Eigen::MatrixXd::Identity(k, k), static_cast<double>(d)};
}

void ProjectionParams::validate(std::size_t state_dim) const {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw InputError("attention scale must be positive");
  }
  if (static_cast<std::size_t>(theta.cols()) != state_dim) {
    throw InputError("attention projection has " + std::to_string(theta.cols()) +
                     " columns but state dimension is " + std::to_string(state_dim));
  }
  if (!theta.allFinite()) throw InputError("attention projection has non-finite entries");
}

EdgeMatrix attention_weights(const StateMatrix& x, const ProjectionParams& p, const Graph& g) {
  p.validate(static_cast<std::size_t>(x.cols()));
  if (static_cast<std::size_t>(x.rows()) != g.size()) {
    throw InputError("state rows do not match graph size");
  }
  const StateMatrix q = x * p.theta.transpose();
  EdgeMatrix a(g);
  std::vector<double> scores;
  for (NodeId u = 0; u < g.size(); ++u) {
    const auto b = g.row_begin(u), e = g.row_end(u);
    if (b == e) continue;
    scores.resize(e - b);
    double top = -std::numeric_limits<double>::infinity();
    for (auto s = b; s < e; ++s) {
      const auto v = static_cast<Eigen::Index>(a.col(s));
      scores[s - b] = q.row(static_cast<Eigen::Index>(u)).dot(q.row(v)) / p.scale;
      top = std::max(top, scores[s - b]);
    }
    if (!std::isfinite(top)) throw NumericalError("non-finite attention score at node " + std::to_string(u));
    double total = 0.0;
    for (auto s = b; s < e; ++s) {
      a[s] = std::exp(scores[s - b] - top);
      total += a[s];
    }
    for (auto s = b; s < e; ++s) a[s] /= total;
  }
  return a;
}

std::string to_string(KernelKind k) {
  switch (k) {
    case KernelKind::log: return "log";
    case KernelKind::power: return "power";
    case KernelKind::gaussian: return "gaussian";
    case KernelKind::attention: return "attention";
  }
  return "unknown";
}

KernelKind kernel_kind_from_string(const std::string& s) {
  if (s == "log") return KernelKind::log;
  if (s == "power") return KernelKind::power;
  if (s == "gaussian") return KernelKind::gaussian;
  if (s == "attention") return KernelKind::attention;
  throw InputError("unknown kernel kind '" + s + "'");
}

void KernelSpec::validate() const {
  if (!(singularity_floor > 0.0)) throw InputError("singularity_floor must be positive");
  if (kind == KernelKind::power && !(delta >= 0.0)) throw InputError("power kernel delta must be >= 0");
  if (kind == KernelKind::gaussian && !(bandwidth > 0.0)) {
    throw InputError("gaussian bandwidth must be positive");
  }
}

void to_json(nlohmann::json& j, const KernelSpec& k) {
  j = nlohmann::json{{"kind", to_string(k.kind)},
                     {"delta", k.delta},
                     {"bandwidth", k.bandwidth},
                     {"normalize_rows", k.normalize_rows},
                     {"singularity_floor", k.singularity_floor}};
  if (k.theta) {
    std::vector<std::vector<double>> rows;
    for (Eigen::Index r = 0; r < k.theta->theta.rows(); ++r) {
      rows.emplace_back(k.theta->theta.row(r).begin(), k.theta->theta.row(r).end());
    }
    j["theta"] = {{"theta", rows}, {"scale", k.theta->scale}};
  }
}

void from_json(const nlohmann::json& j, KernelSpec& k) {
  KernelSpec out;
  if (!j.is_object()) throw InputError("kernel spec must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    static const std::vector<std::string> known{"kind", "delta", "bandwidth", "normalize_rows",
                                                "singularity_floor", "theta"};
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw InputError("unknown kernel field '" + key + "'");
    }
  }
  try {
    if (j.contains("kind")) out.kind = kernel_kind_from_string(j.at("kind").get<std::string>());
    out.delta = j.value("delta", out.delta);
    out.bandwidth = j.value("bandwidth", out.bandwidth);
    out.normalize_rows = j.value("normalize_rows", out.normalize_rows);
    out.singularity_floor = j.value("singularity_floor", out.singularity_floor);
    if (j.contains("theta")) {
      const auto& t = j.at("theta");
      const auto rows = t.at("theta").get<std::vector<std::vector<double>>>();
      ProjectionParams p;
      const auto cols = rows.empty() ? 0 : rows.front().size();
      p.theta.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != cols) throw InputError("ragged theta matrix");
        for (std::size_t c = 0; c < cols; ++c) {
          p.theta(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
      }
      p.scale = t.value("scale", static_cast<double>(rows.size()));
      out.theta = std::move(p);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("invalid kernel spec: ") + e.what());
  }
  out.validate();
  k = std::move(out);
}

namespace {

double norm_of(std::span<const double> z) {
  double s = 0.0;
  for (double c : z) {
    if (!std::isfinite(c)) throw NumericalError("kernel evaluated at non-finite difference");
    s += c * c;
  }
  return std::sqrt(s);
}

}  // namespace

double kernel_scalar(const KernelSpec& spec, std::span<const double> z) {
  const double r = norm_of(z);
  switch (spec.kind) {
    case KernelKind::log: return std::log(std::max(r, spec.singularity_floor));
    case KernelKind::power: return std::pow(std::max(r, spec.singularity_floor), -2.0 - spec.delta);
    case KernelKind::gaussian: return std::exp(-r * r / (2.0 * spec.bandwidth * spec.bandwidth));
    case KernelKind::attention: break;
  }
  throw InputError("attention kernel has no scalar form; use kernel_matrix");
}

double kernel_scalar_grad(const KernelSpec& spec, std::span<const double> z, std::span<double> grad) {
  const double r = norm_of(z);
  const double value = kernel_scalar(spec, z);
  double radial = 0.0;  // (d kappa / d r) / r
  switch (spec.kind) {
    case KernelKind::log:
      if (r > spec.singularity_floor) radial = 1.0 / (r * r);
      break;
    case KernelKind::power:
      if (r > spec.singularity_floor) radial = -(2.0 + spec.delta) * value / (r * r);
      break;
    case KernelKind::gaussian:
      radial = -value / (spec.bandwidth * spec.bandwidth);
      break;
    case KernelKind::attention: break;
  }
  for (std::size_t i = 0; i < z.size(); ++i) grad[i] = radial * z[i];
  return value;
}

EdgeMatrix kernel_matrix(const KernelSpec& spec, const StateMatrix& x, const Graph& g) {
  spec.validate();
  if (static_cast<std::size_t>(x.rows()) != g.size()) {
    throw InputError("state has " + std::to_string(x.rows()) + " rows but graph has " +
                     std::to_string(g.size()) + " nodes");
  }
  EdgeMatrix k(g);
  if (spec.kind == KernelKind::attention) {
    k = attention_weights(x, spec.theta ? *spec.theta
                                        : ProjectionParams::identity(static_cast<std::size_t>(x.cols())),
                          g);
  } else {
    std::vector<double> z(static_cast<std::size_t>(x.cols()));
    for (NodeId u = 0; u < g.size(); ++u) {
      for (auto s = g.row_begin(u); s < g.row_end(u); ++s) {
        const auto ui = static_cast<Eigen::Index>(u), vi = static_cast<Eigen::Index>(k.col(s));
        for (Eigen::Index c = 0; c < x.cols(); ++c) z[static_cast<std::size_t>(c)] = x(ui, c) - x(vi, c);
        k[s] = kernel_scalar(spec, z);
      }
    }
  }
  if (spec.normalize_rows) k = row_normalize(std::move(k));
  return k;
}

EdgeMatrix row_normalize(EdgeMatrix k) {
  for (NodeId u = 0; u < k.rows(); ++u) {
    const double total = k.row_sum(u);
    if (!std::isfinite(total) || total < 0.0) {
      throw NumericalError("kernel row " + std::to_string(u) + " has sum " + std::to_string(total) +
                           "; cannot normalize");
    }
    if (total == 0.0) continue;
    for (auto s = k.row_begin(u); s < k.row_end(u); ++s) k[s] /= total;
  }
  return k;
}

}  // namespace grade
