#pragma once

#include "grade/csbm.hpp"
#include "grade/dynamics.hpp"
#include "grade/solvers.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace grade {

// Encoder X(0) = F W_e + b_e, decoder Z = X(T) W_d + b_d, and the projection
// shared by the attention adjacency and the attention kernel.
struct ModelParams {
  Eigen::MatrixXd enc_w;  // d_in × h
  Eigen::VectorXd enc_b;  // h
  Eigen::MatrixXd dec_w;  // h × C
  Eigen::VectorXd dec_b;  // C
  std::optional<ProjectionParams> theta;

  // Order: enc_w, enc_b, dec_w, dec_b, theta (row-major within matrices).
  std::size_t size() const;
  Eigen::VectorXd flatten() const;
  // Same shapes as *this, filled from v.
  ModelParams unflatten(const Eigen::VectorXd& v) const;
  // Same shapes, all entries zero; the projection scale is kept.
  ModelParams zeros_like() const;
};

void to_json(nlohmann::json& j, const ModelParams& p);
void from_json(const nlohmann::json& j, ModelParams& p);

struct TrainConfig {
  DynamicsConfig dynamics = default_training_dynamics();
  SolverConfig solver = default_training_solver();
  double learning_rate = 0.1;
  std::size_t epochs = 200;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  std::size_t hidden_dim = 8;
  // Encoder weights start at N(0, init_scale^2 / d_in). The aggregation
  // drift grows with degree times state magnitude, so small encodings keep
  // dense graphs away from finite-time blow-up.
  double init_scale = 0.1;
  double loss_scale = 1.0;

  // Throws InputError unless the solver is fixed-step and the rest is sane.
  void validate() const;

  static DynamicsConfig default_training_dynamics();
  static SolverConfig default_training_solver();
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// True when cfg routes a projection through the attention adjacency or the
// attention kernel.
bool uses_projection(const DynamicsConfig& cfg);

// Seeded Gaussian init scaled by fan-in; zero biases; identity projection
// when one is needed.
ModelParams init_params(std::size_t d_in, std::size_t num_classes, const TrainConfig& cfg);

// Copy of cfg with the model projection installed wherever attention is used.
DynamicsConfig bind_params(const DynamicsConfig& cfg, const ModelParams& p);

struct ForwardResult {
  StateMatrix logits;
  Trajectory traj;
};

// encode -> integrate -> decode. Throws NumericalError on blow-up.
ForwardResult forward(const ModelParams& p, const Dataset& ds, const TrainConfig& cfg);

// Mean cross-entropy over the masked nodes, computed with log-sum-exp.
double loss(const StateMatrix& logits, const std::vector<int>& labels, const std::vector<bool>& mask);

double accuracy(const StateMatrix& logits, const std::vector<int>& labels, const std::vector<bool>& mask);

struct LossAndGrad {
  double loss;
  ModelParams grad;
};

// loss_scale times the training-mask loss, and its exact gradient through
// the unrolled fixed-step integrator. Throws NumericalError naming the step
// at which a gradient became non-finite.
LossAndGrad loss_and_grad(const ModelParams& p, const Dataset& ds, const TrainConfig& cfg);

// loss_scale times the training-mask loss, forward only.
double training_loss(const ModelParams& p, const Dataset& ds, const TrainConfig& cfg);

// Central differences of training_loss, one parameter at a time.
ModelParams finite_difference_grad(const ModelParams& p, const Dataset& ds, const TrainConfig& cfg,
                                   double h);

// Max over entries of |a-b| / max(|a|,|b|); entries where both magnitudes
// are below abs_floor contribute |a-b|.
double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double abs_floor = 1e-8);

struct GradCheckInstance {
  Dataset ds;
  ModelParams params;
  TrainConfig cfg;
};

// Random instance with n <= 8, state dim <= 3 and at most 5 Euler steps.
// Draws whose trajectories bring an edge within 10h of the kernel
// singularity floor are rejected and redrawn.
GradCheckInstance random_grad_check_instance(std::uint64_t seed, double h = 1e-5);

struct GradCheckReport {
  std::uint64_t seed;
  double max_rel_error;
  double loss;
  std::size_t parameters;
  std::size_t nodes;
  std::size_t steps;
  std::string kernel;
  std::string adjacency;
  std::string activation;
};

GradCheckReport grad_check(std::uint64_t seed, double h = 1e-5);

struct EpochMetrics {
  std::size_t epoch;
  double loss;
  double val_acc;
  double test_acc;
};

struct TrainResult {
  ModelParams params;  // parameters of the best validation epoch
  std::vector<EpochMetrics> metrics;
  std::size_t best_epoch = 0;
  double best_val_acc = 0.0;
  double test_acc = 0.0;  // test accuracy of the returned parameters
};

// Full-batch gradient descent with weight decay. metrics[e] describes the
// parameters after e updates, so epochs updates give epochs+1 rows. Ties on
// validation accuracy keep the earliest epoch. Throws NumericalError if the
// loss diverges.
TrainResult train(const Dataset& ds, const TrainConfig& cfg);

// Multinomial logistic regression on raw features, trained like train() but
// without graph or dynamics. Returns test accuracy at the best validation
// epoch.
double logistic_baseline(const Dataset& ds, std::size_t epochs, double learning_rate,
                         double weight_decay);

// {encoder, decoder, theta, dynamics_config, solver_config, train_config}.
nlohmann::json checkpoint_json(const ModelParams& p, const TrainConfig& cfg);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& m);

}  // namespace grade
