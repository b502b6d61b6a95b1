#pragma once

#include "grade/graph.hpp"
#include "grade/types.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <string>

namespace grade {

// Bilinear attention projection: score(u,v) = (Θx_u)·(Θx_v) / scale.
struct ProjectionParams {
  Eigen::MatrixXd theta;  // k × d
  double scale = 1.0;

  // Θ = I_d, scale = d.
  static ProjectionParams identity(std::size_t d);
  void validate(std::size_t state_dim) const;
};

// Row-wise softmax over N(u) of the bilinear scores, computed with
// max-subtraction. Rows of isolated nodes stay empty.
EdgeMatrix attention_weights(const StateMatrix& x, const ProjectionParams& p, const Graph& g);

enum class KernelKind { log, power, gaussian, attention };

std::string to_string(KernelKind k);
KernelKind kernel_kind_from_string(const std::string& s);

struct KernelSpec {
  KernelKind kind = KernelKind::gaussian;
  double delta = 0.0;       // power: exponent -2-delta
  double bandwidth = 1.0;   // gaussian
  std::optional<ProjectionParams> theta;  // attention
  bool normalize_rows = false;
  double singularity_floor = 1e-6;

  void validate() const;
};

void to_json(nlohmann::json& j, const KernelSpec& k);
void from_json(const nlohmann::json& j, KernelSpec& k);

// Radial kernel value at difference z. Norms below the singularity floor
// are clamped to it. Throws InputError for the attention kind and
// NumericalError for non-finite z.
double kernel_scalar(const KernelSpec& spec, std::span<const double> z);

// Value and gradient d kappa / d z of a radial kernel. The gradient is zero
// inside the clamped ball.
double kernel_scalar_grad(const KernelSpec& spec, std::span<const double> z, std::span<double> grad);

// kappa_uv on every edge; attention kind uses spec.theta (identity when absent).
EdgeMatrix kernel_matrix(const KernelSpec& spec, const StateMatrix& x, const Graph& g);

// Rescales rows with nonzero sum to sum 1; all-zero rows stay zero. Throws
// NumericalError for a negative or non-finite row sum.
EdgeMatrix row_normalize(EdgeMatrix k);

}  // namespace grade
