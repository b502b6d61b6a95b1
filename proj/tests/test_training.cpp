#include "grade/training.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace grade;

namespace {

Dataset small_dataset(std::uint64_t seed, std::size_t n, std::size_t d, int classes) {
  Dataset ds;
  ds.graph = test::random_connected_graph(seed, n, true);
  ds.features = test::random_state(seed + 1, n, d);
  for (std::size_t u = 0; u < n; ++u) ds.labels.push_back(static_cast<int>(u % static_cast<std::size_t>(classes)));
  ds.train_mask.assign(n, true);
  ds.val_mask.assign(n, false);
  ds.test_mask.assign(n, false);
  return ds;
}

TrainConfig diffusion_config(Method m, double step, double horizon) {
  TrainConfig cfg;
  cfg.dynamics.activation = Activation::identity;
  cfg.dynamics.aggregation_on = false;
  cfg.solver.method = m;
  cfg.solver.step = step;
  cfg.solver.horizon = horizon;
  return cfg;
}

std::vector<bool> all(std::size_t n) { return std::vector<bool>(n, true); }

}  // namespace

TEST_CASE("zero encoder keeps the zero state and outputs the decoder bias") {
  const Dataset ds = small_dataset(1, 6, 3, 2);
  TrainConfig cfg;
  ModelParams p = init_params(3, 2, cfg);
  p.enc_w.setZero();
  p.dec_b << 0.3, -0.2;
  const StateMatrix z = forward(p, ds, cfg).logits;
  for (Eigen::Index u = 0; u < z.rows(); ++u) {
    CHECK(z(u, 0) == 0.3);
    CHECK(z(u, 1) == -0.2);
  }
}

TEST_CASE("zero horizon decodes the encoding") {
  const Dataset ds = small_dataset(2, 5, 2, 3);
  TrainConfig cfg;
  cfg.solver.horizon = 0.0;
  cfg.init_scale = 1.0;
  const ModelParams p = init_params(2, 3, cfg);
  Eigen::MatrixXd want = (Eigen::MatrixXd(ds.features) * p.enc_w).rowwise() + p.enc_b.transpose();
  want = (want * p.dec_w).rowwise() + p.dec_b.transpose();
  CHECK((forward(p, ds, cfg).logits - want).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("two Euler steps of diffusion on P2 by hand") {
  Dataset ds;
  ds.graph = path_graph(2);
  ds.features.resize(2, 1);
  ds.features << 1.0, 0.0;
  ds.labels = {0, 1};
  ds.train_mask = all(2);
  ds.val_mask = ds.test_mask = {false, false};
  const TrainConfig cfg = diffusion_config(Method::euler, 0.25, 0.5);
  ModelParams p = init_params(1, 2, cfg);
  p.enc_w.setZero();
  p.enc_w(0, 0) = 1.0;
  p.dec_w.setZero();
  p.dec_w(0, 0) = 1.0;
  p.dec_b.setZero();
  // M = I + h(A - I) = [[.75, .25], [.25, .75]]; M^2 e_0 = [.625, .375].
  const StateMatrix z = forward(p, ds, cfg).logits;
  CHECK(z(0, 0) == doctest::Approx(0.625));
  CHECK(z(1, 0) == doctest::Approx(0.375));
}

TEST_CASE("cross-entropy values") {
  const std::vector<int> labels{0, 1};
  CHECK(loss(StateMatrix::Zero(2, 2), labels, all(2)) == doctest::Approx(std::log(2.0)));

  StateMatrix z(2, 2);
  z << 1000.0, 0.0, 1000.0, 0.0;
  CHECK(loss(z, {0, 0}, all(2)) == doctest::Approx(0.0));
  CHECK(loss(z, {1, 1}, all(2)) == doctest::Approx(1000.0));
  CHECK(loss(z, labels, {true, false}) == doctest::Approx(0.0));

  StateMatrix r(1, 3);
  r << 0.5, -1.0, 2.0;
  const double lse = std::log(std::exp(0.5) + std::exp(-1.0) + std::exp(2.0));
  CHECK(loss(r, {2}, {true}) == doctest::Approx(lse - 2.0));

  CHECK_THROWS_AS(loss(z, labels, {false, false}), InputError);
  CHECK(accuracy(z, labels, all(2)) == 0.5);
}

TEST_CASE("an absent class only collects softmax mass") {
  // Zero decoder: uniform probabilities, so dZ for class 2 is (1/3)/m on every row.
  Dataset ds = small_dataset(3, 6, 2, 2);
  TrainConfig cfg;
  ModelParams p = init_params(2, 3, cfg);
  p.dec_w.setZero();
  const LossAndGrad lg = loss_and_grad(p, ds, cfg);
  CHECK(lg.grad.dec_b(2) == doctest::Approx(1.0 / 3.0));
  CHECK(lg.grad.dec_b(0) + lg.grad.dec_b(1) + lg.grad.dec_b(2) == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("loss_scale scales loss and gradient") {
  const Dataset ds = small_dataset(4, 7, 2, 2);
  TrainConfig cfg;
  const ModelParams p = init_params(2, 2, cfg);
  const LossAndGrad base = loss_and_grad(p, ds, cfg);
  cfg.loss_scale = 2.0;
  const LossAndGrad doubled = loss_and_grad(p, ds, cfg);
  CHECK(doubled.loss == doctest::Approx(2.0 * base.loss));
  CHECK((doubled.grad.flatten() - 2.0 * base.grad.flatten()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("finite differences converge quadratically toward the adjoint gradient") {
  const GradCheckInstance inst = random_grad_check_instance(11);
  const Eigen::VectorXd exact = loss_and_grad(inst.params, inst.ds, inst.cfg).grad.flatten();
  const double coarse = (finite_difference_grad(inst.params, inst.ds, inst.cfg, 1e-2).flatten() - exact).norm();
  const double fine = (finite_difference_grad(inst.params, inst.ds, inst.cfg, 5e-3).flatten() - exact).norm();
  // Central differences: halving h quarters the truncation error.
  CHECK(fine / coarse == doctest::Approx(0.25).epsilon(0.1));
}

TEST_CASE("RK4 adjoint gradient matches finite differences") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    GradCheckInstance inst = random_grad_check_instance(seed);
    inst.cfg.solver.method = Method::rk4;
    const Eigen::VectorXd exact = loss_and_grad(inst.params, inst.ds, inst.cfg).grad.flatten();
    // RK4 stages can sit closer to the power-kernel singularity than the
    // Euler states the draw was screened on, so the difference step is finer.
    const Eigen::VectorXd fd = finite_difference_grad(inst.params, inst.ds, inst.cfg, 1e-6).flatten();
    CHECK(max_relative_error(exact, fd) < 1e-5);
  }
}

TEST_CASE("Euler adjoint gradient matches finite differences") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) CHECK(grad_check(seed).max_rel_error <= 1e-5);
}

TEST_CASE("parameter flatten round-trip and JSON") {
  TrainConfig cfg;
  cfg.dynamics.attention = ProjectionParams::identity(8);
  cfg.init_scale = 1.0;
  const ModelParams p = init_params(3, 2, cfg);
  REQUIRE(p.theta.has_value());
  CHECK(p.size() == 3 * 8 + 8 + 8 * 2 + 2 + 64);
  const ModelParams q = p.unflatten(p.flatten());
  CHECK(q.flatten() == p.flatten());
  const ModelParams r = nlohmann::json(p).get<ModelParams>();
  CHECK(r.flatten() == p.flatten());
  CHECK_THROWS_AS(p.unflatten(Eigen::VectorXd::Zero(3)), InputError);
}

TEST_CASE("training needs a fixed-step solver") {
  TrainConfig cfg;
  cfg.solver.method = Method::dopri5;
  CHECK_THROWS_AS(cfg.validate(), InputError);
}

TEST_CASE("zero learning rate gives flat metrics") {
  const Dataset ds = csbm_generate(CsbmConfig{}, 3);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 5;
  const TrainResult r = train(ds, cfg);
  REQUIRE(r.metrics.size() == 6);
  for (const auto& m : r.metrics) {
    CHECK(m.loss == r.metrics[0].loss);
    CHECK(m.val_acc == r.metrics[0].val_acc);
  }
  CHECK(r.best_epoch == 0);
}

TEST_CASE("separated communities are learned to full accuracy") {
  CsbmConfig data;
  data.n = 40;
  data.p_inter = 0.0;
  data.class_mean_separation = 4.0;
  data.noise_std = 0.5;
  const Dataset ds = csbm_generate(data, 8);
  TrainConfig cfg;
  cfg.epochs = 50;
  const TrainResult r = train(ds, cfg);
  CHECK(r.test_acc == 1.0);
  CHECK(r.metrics.back().loss < r.metrics.front().loss);

  const TrainResult again = train(ds, cfg);
  CHECK(again.params.flatten() == r.params.flatten());
  CHECK(again.metrics.back().loss == r.metrics.back().loss);
}

TEST_CASE("forward is permutation equivariant") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const std::size_t n = 7;
    const Dataset ds = small_dataset(seed + 20, n, 2, 2);
    std::vector<NodeId> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(seed));
    Dataset pds = ds;
    std::vector<std::pair<NodeId, NodeId>> edges;
    std::vector<double> weights;
    for (const auto& e : ds.graph.edges()) {
      edges.emplace_back(perm[e.u], perm[e.v]);
      weights.push_back(e.weight);
    }
    pds.graph = Graph::from_edge_list(n, edges, std::span<const double>(weights));
    for (NodeId u = 0; u < n; ++u) {
      pds.features.row(static_cast<Eigen::Index>(perm[u])) = ds.features.row(static_cast<Eigen::Index>(u));
      pds.labels[perm[u]] = ds.labels[u];
    }
    TrainConfig cfg;
    cfg.init_scale = 1.0;
    cfg.seed = seed;
    if (seed % 2) cfg.dynamics.attention = ProjectionParams::identity(cfg.hidden_dim);
    const ModelParams p = init_params(2, 2, cfg);
    const StateMatrix z = forward(p, ds, cfg).logits, pz = forward(p, pds, cfg).logits;
    for (NodeId u = 0; u < n; ++u) {
      CHECK((pz.row(static_cast<Eigen::Index>(perm[u])) - z.row(static_cast<Eigen::Index>(u))).cwiseAbs().maxCoeff() <
            1e-12);
    }
  }
}

TEST_CASE("diffusion-only identity dynamics equal linear GRAND") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Dataset ds = small_dataset(seed + 40, 9, 3, 2);
    TrainConfig cfg = diffusion_config(seed % 2 ? Method::rk4 : Method::euler, 0.35, 2.0);
    cfg.init_scale = 1.0;
    cfg.seed = seed;
    const ModelParams p = init_params(3, 2, cfg);
    const Eigen::MatrixXd want = oracle::grand_linear_logits(p, ds, cfg.solver);
    CHECK((forward(p, ds, cfg).logits - want).cwiseAbs().maxCoeff() < 1e-10);
  }
}
