#pragma once

#include "grade/graph.hpp"
#include "grade/kernels.hpp"
#include "grade/types.hpp"

#include <json.hpp>

#include <optional>
#include <string>

namespace grade {

enum class Activation { identity, tanh, softplus, relu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

double activate(Activation a, double x);
double activate_derivative(Activation a, double x);
StateMatrix activate(Activation a, const StateMatrix& x);

// The aggregation-diffusion right-hand side
//   dx_u/dt = sum_v A_uv sigma(x_v) - sigma(x_u)
//           + sum_v w_uv x_u ⊙ [(KX)_v - (KX)_u],   (KX)_v = sum_k kappa_vk x_k
// with A the row-normalized adjacency, or attention weights when
// `attention` is set.
struct DynamicsConfig {
  Activation activation = Activation::tanh;
  std::optional<ProjectionParams> attention;  // nullopt: static row-normalized adjacency
  KernelSpec kernel;
  bool diffusion_on = true;
  bool aggregation_on = true;

  void validate() const;
  // Validates projection shapes against a state dimension as well.
  void validate(std::size_t state_dim) const;
};

// Fills an attention projection loaded without explicit weights with the
// identity of the state dimension.
DynamicsConfig resolve_projections(DynamicsConfig cfg, std::size_t state_dim);

void to_json(nlohmann::json& j, const DynamicsConfig& c);
void from_json(const nlohmann::json& j, DynamicsConfig& c);

// Softmax over N(u) of (Θx_u)·(Θx_v)/scale. Throws InputError if a node has
// no neighbors.
EdgeMatrix attention_adjacency(const StateMatrix& x, const ProjectionParams& p, const Graph& g);

// (A - I) sigma(X), evaluated row by row.
StateMatrix diffusion_term(const DynamicsConfig& cfg, const EdgeMatrix& a, const StateMatrix& x);

// Node form of the kernel-driven aggregation. Throws InputError when K is
// not supported on g.
StateMatrix aggregation_term(const DynamicsConfig& cfg, const Graph& g, const EdgeMatrix& k,
                             const StateMatrix& x);

// Adjacency used by the diffusion term at state x.
EdgeMatrix diffusion_adjacency(const DynamicsConfig& cfg, const Graph& g, const StateMatrix& x);

// Full right-hand side. Autonomous: t is accepted for solver symmetry only.
StateMatrix rhs(const DynamicsConfig& cfg, const Graph& g, const StateMatrix& x, double t = 0.0);

// Reverse-mode product of the right-hand side: given upstream G = dL/df,
// returns dL/dX and the gradients for the attention projections used by the
// adjacency and the kernel (zero-sized when unused).
struct RhsVjp {
  StateMatrix dx;
  Eigen::MatrixXd dtheta_adjacency;
  Eigen::MatrixXd dtheta_kernel;
};
RhsVjp rhs_vjp(const DynamicsConfig& cfg, const Graph& g, const StateMatrix& x,
               const StateMatrix& upstream);

// Right-hand side bound to a graph, caching the static adjacency.
class GradeSystem {
 public:
  GradeSystem(DynamicsConfig cfg, Graph g);

  StateMatrix operator()(const StateMatrix& x, double t) const;

  const DynamicsConfig& config() const { return cfg_; }
  const Graph& graph() const { return g_; }

 private:
  DynamicsConfig cfg_;
  Graph g_;
  std::optional<EdgeMatrix> static_adjacency_;
};

}  // namespace grade
