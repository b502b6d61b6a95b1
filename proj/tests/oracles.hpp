#pragma once

// Independent dense reference implementations. They share no code with the
// library beyond the Graph accessors used to read weights.

#include "grade/dynamics.hpp"
#include "grade/training.hpp"

#include "test_util.hpp"

#include <cmath>

namespace grade::oracle {

inline double activation(Activation a, double x) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::tanh: return std::tanh(x);
    case Activation::softplus: return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    case Activation::relu: return x > 0 ? x : 0.0;
  }
  return x;
}

// Dense softmax over the support of w of (Θx_u)·(Θx_v)/scale.
inline Eigen::MatrixXd attention(const Eigen::MatrixXd& w, const Eigen::MatrixXd& x, const ProjectionParams& p) {
  const Eigen::MatrixXd q = x * p.theta.transpose();
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index u = 0; u < n; ++u) {
    double top = -INFINITY;
    for (Eigen::Index v = 0; v < n; ++v) {
      if (w(u, v) != 0.0) top = std::max(top, q.row(u).dot(q.row(v)) / p.scale);
    }
    double total = 0.0;
    for (Eigen::Index v = 0; v < n; ++v) {
      if (w(u, v) != 0.0) total += a(u, v) = std::exp(q.row(u).dot(q.row(v)) / p.scale - top);
    }
    if (total > 0.0) a.row(u) /= total;
  }
  return a;
}

inline Eigen::MatrixXd row_normalized(const Eigen::MatrixXd& w) {
  Eigen::MatrixXd a = w;
  for (Eigen::Index u = 0; u < w.rows(); ++u) a.row(u) /= w.row(u).sum();
  return a;
}

inline Eigen::MatrixXd kernel(const KernelSpec& spec, const Eigen::MatrixXd& w, const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  if (spec.kind == KernelKind::attention) {
    k = attention(w, x, spec.theta ? *spec.theta : ProjectionParams::identity(static_cast<std::size_t>(x.cols())));
  } else {
    for (Eigen::Index u = 0; u < n; ++u) {
      for (Eigen::Index v = 0; v < n; ++v) {
        if (w(u, v) == 0.0) continue;
        const double r = (x.row(u) - x.row(v)).norm();
        const double clamped = std::max(r, spec.singularity_floor);
        switch (spec.kind) {
          case KernelKind::log: k(u, v) = std::log(clamped); break;
          case KernelKind::power: k(u, v) = std::pow(clamped, -2.0 - spec.delta); break;
          case KernelKind::gaussian: k(u, v) = std::exp(-r * r / (2.0 * spec.bandwidth * spec.bandwidth)); break;
          case KernelKind::attention: break;
        }
      }
    }
  }
  if (spec.normalize_rows) {
    for (Eigen::Index u = 0; u < n; ++u) {
      const double s = k.row(u).sum();
      if (s != 0.0) k.row(u) /= s;
    }
  }
  return k;
}

inline Eigen::MatrixXd diffusion_adjacency(const DynamicsConfig& cfg, const Eigen::MatrixXd& w, const Eigen::MatrixXd& x) {
  return cfg.attention ? attention(w, x, *cfg.attention) : row_normalized(w);
}

// (A - I) σ(X), dense.
inline Eigen::MatrixXd diffusion(const DynamicsConfig& cfg, const Eigen::MatrixXd& w, const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd s = x.unaryExpr([&](double v) { return activation(cfg.activation, v); });
  const Eigen::MatrixXd a = diffusion_adjacency(cfg, w, x);
  return a * s - s;
}

// Triple loop over (u, v, k) of w_uv x_u ⊙ (κ_vk x_k - κ_uk x_k).
inline Eigen::MatrixXd aggregation(const DynamicsConfig& cfg, const Eigen::MatrixXd& w, const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd k = kernel(cfg.kernel, w, x);
  const Eigen::Index n = x.rows(), d = x.cols();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, d);
  for (Eigen::Index u = 0; u < n; ++u) {
    for (Eigen::Index v = 0; v < n; ++v) {
      if (w(u, v) == 0.0) continue;
      for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index c = 0; c < d; ++c) {
          out(u, c) += w(u, v) * x(u, c) * (k(v, j) * x(j, c) - k(u, j) * x(j, c));
        }
      }
    }
  }
  return out;
}

inline Eigen::MatrixXd rhs(const DynamicsConfig& cfg, const Graph& g, const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd w = test::dense_weights(g);
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(x.rows(), x.cols());
  if (cfg.diffusion_on) f += diffusion(cfg, w, x);
  if (cfg.aggregation_on) f += aggregation(cfg, w, x);
  return f;
}

// Linear GRAND: X_{k+1} = P(h(A - I)) X_k with the static row-normalized A,
// P(z) = 1 + z for Euler and the degree-4 Taylor polynomial for RK4.
inline Eigen::MatrixXd grand_linear_final_state(const Graph& g, const Eigen::MatrixXd& x0, const SolverConfig& s) {
  const Eigen::Index n = x0.rows();
  const Eigen::MatrixXd l = row_normalized(test::dense_weights(g)) - Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd x = x0;
  double t = 0.0;
  const auto steps = static_cast<long>(std::ceil(s.horizon / s.step * (1.0 - 1e-12)));
  for (long k = 0; k < steps; ++k) {
    const double next = k + 1 == steps ? s.horizon : static_cast<double>(k + 1) * s.step;
    const Eigen::MatrixXd z = (next - t) * l;
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) + z;
    if (s.method == Method::rk4) m += z * z / 2.0 + z * z * z / 6.0 + z * z * z * z / 24.0;
    x = m * x;
    t = next;
  }
  return x;
}

inline Eigen::MatrixXd grand_linear_logits(const ModelParams& p, const Dataset& ds, const SolverConfig& s) {
  Eigen::MatrixXd x0 = Eigen::MatrixXd(ds.features) * p.enc_w;
  x0.rowwise() += p.enc_b.transpose();
  Eigen::MatrixXd z = grand_linear_final_state(ds.graph, x0, s) * p.dec_w;
  z.rowwise() += p.dec_b.transpose();
  return z;
}

}  // namespace grade::oracle
