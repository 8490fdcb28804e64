#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "safebid/ddpg.hpp"
#include "safebid/errors.hpp"
#include "safebid/verify.hpp"

using namespace safebid;
using namespace safebid::ddpg;

namespace {

DdpgConfig small_config() {
  DdpgConfig c;
  c.hidden1 = 8;
  c.hidden2 = 8;
  c.batch_size = 4;
  c.buffer_capacity = 16;
  return c;
}

Experience make_exp(double p, double d, std::uint8_t u, double k, double r, double p2, double d2) {
  Experience e;
  e.s = {p, d};
  e.s_next = {p2, d2};
  e.a = {u, k};
  e.r = r;
  return e;
}

std::vector<Experience> random_batch(Rng& rng, std::size_t n) {
  std::uniform_real_distribution<double> U(0, 1);
  std::uniform_real_distribution<double> K(1, 2);
  std::uniform_real_distribution<double> R(-100, 200);
  std::vector<Experience> b;
  for (std::size_t i = 0; i < n; ++i) {
    b.push_back(make_exp(U(rng), U(rng), U(rng) < 0.5 ? 0 : 1, K(rng), R(rng), U(rng), U(rng)));
  }
  return b;
}

double critic_value(const MlpParams& c, double p, double d, double u, double k) {
  Eigen::Vector4d x(p, d, u, k);
  return nn::mlp_forward(c, x)(0);
}

CriticModel constant_critic(double value) {
  return [value](const Eigen::MatrixXd& s, const Eigen::MatrixXd&) {
    CriticEval e;
    e.q = Eigen::RowVectorXd::Constant(s.cols(), value);
    e.dq_da = Eigen::MatrixXd::Zero(2, s.cols());
    return e;
  };
}

}  // namespace

TEST_CASE("bid head is clipped into [1, k_max]") {
  AgentBrain b(small_config(), 2.0);
  Rng rng(1);
  b.actor.layers.back().b(0) = 5.0;
  CHECK(select_action(b, {0.5, 0.5}, false, 0.0, rng).k == 2.0);
  b.actor.layers.back().b(0) = 0.3;
  CHECK(select_action(b, {0.5, 0.5}, false, 0.0, rng).k == 1.0);
  b.actor.layers.back().b(0) = 1.4;
  CHECK(select_action(b, {0.5, 0.5}, false, 0.0, rng).k == 1.4);
}

TEST_CASE("greedy maintenance thresholds the logistic head") {
  AgentBrain b(small_config(), 2.0);
  Rng rng(2);
  b.actor.layers.back().b(1) = 0.2;
  CHECK(select_action(b, {0.1, 0.9}, false, 0.0, rng).u == 1);
  b.actor.layers.back().b(1) = -0.2;
  CHECK(select_action(b, {0.1, 0.9}, false, 0.0, rng).u == 0);
}

TEST_CASE("exploration stays in range and samples maintenance") {
  AgentBrain b(small_config(), 2.0);
  Rng rng(3);
  b.actor.layers.back().b(0) = 1.5;
  int ups = 0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    const Action a = select_action(b, {0.3, 0.3}, true, 0.5, rng);
    CHECK(a.k >= 1.0);
    CHECK(a.k <= 2.0);
    ups += a.u;
  }
  // p = sigmoid(0) = 1/2
  CHECK(std::abs(ups - n / 2) <= 3 * std::sqrt(n * 0.25));
}

TEST_CASE("sigmoid is stable") {
  CHECK(sigmoid(0) == 0.5);
  CHECK(sigmoid(800) == 1.0);
  CHECK(sigmoid(-800) == 0.0);
  CHECK(sigmoid(2.0) == doctest::Approx(1 / (1 + std::exp(-2.0))).epsilon(1e-15));
}

TEST_CASE("critic target against a hand computation") {
  Rng rng(4);
  DdpgConfig cfg = small_config();
  AgentBrain b(cfg, 2.0, rng);
  for (auto& l : b.target_critic.layers) {
    l.w = Eigen::MatrixXd::Random(l.w.rows(), l.w.cols());
  }
  const Experience e = make_exp(0.4, 0.7, 1, 1.6, 50.0, 0.2, 0.9);
  const Eigen::VectorXd mu = nn::mlp_forward(b.target_actor, Eigen::Vector2d(0.2, 0.9));
  const double k2 = std::clamp(mu(0), 1.0, 2.0);
  const double u2 = 1.0 / (1.0 + std::exp(-mu(1)));
  const double y = cfg.reward_scale * 50.0 + cfg.gamma * critic_value(b.target_critic, 0.2, 0.9, u2, k2);
  const double q = critic_value(b.critic, 0.4, 0.7, 1, 1.6);
  const std::vector<Experience> batch{e};
  CHECK(critic_loss_gradients(b, batch).loss == doctest::Approx((q - y) * (q - y)).epsilon(1e-12));
}

TEST_CASE("critic with zero loss stays put") {
  AgentBrain b(small_config(), 2.0);
  const std::vector<Experience> batch{make_exp(0.1, 0.2, 0, 1.0, 0.0, 0.3, 0.4)};
  const MlpParams before = b.critic;
  CHECK(critic_update(b, batch) == 0.0);
  for (std::size_t k = 0; k < before.param_count(); ++k) CHECK(b.critic.param(k) == before.param(k));
}

TEST_CASE("zero discount regresses on the scaled reward") {
  DdpgConfig cfg = small_config();
  cfg.gamma = 0.0;
  AgentBrain b(cfg, 2.0);
  Rng rng(5);
  const auto batch = random_batch(rng, 6);
  double want = 0.0;
  for (const auto& e : batch) want += std::pow(cfg.reward_scale * e.r, 2);
  CHECK(critic_loss_gradients(b, batch).loss == doctest::Approx(want / 6).epsilon(1e-12));
}

TEST_CASE("a small critic step lowers the loss") {
  Rng rng(6);
  DdpgConfig cfg = small_config();
  cfg.critic_lr = 1e-4;
  int lower = 0;
  for (int c = 0; c < 20; ++c) {
    AgentBrain b(cfg, 2.0, rng);
    const auto batch = random_batch(rng, 8);
    const double before = critic_update(b, batch);
    const double after = critic_loss_gradients(b, batch).loss;
    lower += after < before;
  }
  CHECK(lower == 20);
}

TEST_CASE("analytic gradients match finite differences") {
  const verify::SuiteResult c = verify::critic_gradient_check(30, 7);
  const verify::SuiteResult a = verify::actor_gradient_check(30, 7);
  CHECK(c.passed());
  CHECK(a.passed());
  CHECK(c.worst <= verify::kGradTol);
  CHECK(a.worst <= verify::kGradTol);
}

TEST_CASE("a constant critic leaves the actor unchanged") {
  Rng rng(8);
  AgentBrain b(small_config(), 2.0, rng);
  const MlpParams before = b.actor;
  const Eigen::MatrixXd states = Eigen::MatrixXd::Random(2, 5).cwiseAbs();
  const double loss = actor_update(b.actor, constant_critic(3.5), states, 2.0, 1.0, 0.1);
  CHECK(loss == doctest::Approx(-3.5).epsilon(1e-15));
  for (std::size_t k = 0; k < before.param_count(); ++k) CHECK(b.actor.param(k) == before.param(k));
}

TEST_CASE("actor loss is minus the mean critic value inside the bid range") {
  Rng rng(9);
  AgentBrain b(small_config(), 2.0, rng);
  const Eigen::MatrixXd states = Eigen::MatrixXd::Random(2, 6).cwiseAbs();
  const CriticModel critic = mlp_critic(b.critic);
  const Eigen::MatrixXd mu = nn::mlp_forward_batch(b.actor, states);
  double mean = 0.0;
  for (Eigen::Index j = 0; j < states.cols(); ++j) {
    REQUIRE(mu(0, j) > 1.0);
    REQUIRE(mu(0, j) < 2.0);
    mean += critic_value(b.critic, states(0, j), states(1, j), sigmoid(mu(1, j)), mu(0, j));
  }
  mean /= static_cast<double>(states.cols());
  CHECK(actor_loss_gradients(b.actor, critic, states, 2.0, 1.0).loss ==
        doctest::Approx(-mean).epsilon(1e-12));
}

TEST_CASE("actor climbs a quadratic critic to its peak") {
  // Q = -(k - 2)^2 with k_max = 3: the bid head should settle at 2.
  CriticModel critic = [](const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) {
    CriticEval e;
    e.q = -(a.row(1).array() - 2.0).square().matrix();
    e.dq_da = Eigen::MatrixXd::Zero(2, s.cols());
    e.dq_da.row(1) = (-2.0 * (a.row(1).array() - 2.0)).matrix();
    return e;
  };
  Rng rng(10);
  AgentBrain b(small_config(), 3.0, rng);
  const Eigen::MatrixXd states = Eigen::MatrixXd::Random(2, 16).cwiseAbs();
  for (int it = 0; it < 3000; ++it) actor_update(b.actor, critic, states, 3.0, 1.0, 0.01);
  const Eigen::MatrixXd mu = nn::mlp_forward_batch(b.actor, states);
  CHECK((mu.row(0).array() - 2.0).abs().maxCoeff() <= 1e-3);
}

TEST_CASE("bids outside the range are pulled back") {
  AgentBrain b(small_config(), 2.0);
  b.actor.layers.back().b(0) = 4.0;
  const Eigen::MatrixXd states = Eigen::MatrixXd::Constant(2, 3, 0.5);
  for (int it = 0; it < 500; ++it) actor_update(b.actor, constant_critic(0.0), states, 2.0, 1.0, 0.05);
  CHECK(b.actor.layers.back().b(0) <= 2.0 + 1e-6);
}

TEST_CASE("soft update of the targets") {
  DdpgConfig cfg = small_config();
  cfg.tau = 0.25;
  cfg.actor_tau = 1.0;
  Rng rng(11);
  AgentBrain b(cfg, 2.0, rng);
  for (auto& l : b.critic.layers) l.w.array() += 1.0;
  for (auto& l : b.actor.layers) l.w.array() += 1.0;
  const MlpParams critic_t = b.target_critic;
  const MlpParams actor_t = b.target_actor;
  soft_update_targets(b);
  for (std::size_t k = 0; k < critic_t.param_count(); ++k) {
    CHECK(b.target_critic.param(k) ==
          doctest::Approx(0.75 * b.critic.param(k) + 0.25 * critic_t.param(k)).epsilon(1e-15));
  }
  for (std::size_t k = 0; k < actor_t.param_count(); ++k) CHECK(b.target_actor.param(k) == actor_t.param(k));
}

TEST_CASE("target lags the behaviour network geometrically") {
  // Behaviour fixed at 1, target at 0: after n updates the target sits at 1 - tau^n.
  const double tau = 0.9;
  const int sizes[] = {1, 1};
  MlpParams behaviour = nn::make_mlp(sizes);
  behaviour.layers[0].w(0, 0) = 1.0;
  MlpParams target = nn::make_mlp(sizes);
  for (int n = 1; n <= 30; ++n) {
    target = nn::soft_update(behaviour, target, tau);
    CHECK(target.layers[0].w(0, 0) == doctest::Approx(1 - std::pow(tau, n)).epsilon(1e-13));
  }
}

TEST_CASE("replay buffer keeps the newest items") {
  ReplayBuffer buf(3);
  for (int i = 1; i <= 5; ++i) buf.push(make_exp(0, 0, 0, 1, i, 0, 0));
  CHECK(buf.size() == 3);
  CHECK(buf.pushed() == 5);
  CHECK(buf.at(0).r == 3);
  CHECK(buf.at(1).r == 4);
  CHECK(buf.at(2).r == 5);
  Rng rng(12);
  const auto s = buf.sample(3, rng);
  CHECK(s.size() == 3);
  for (const auto& e : s) CHECK((e.r >= 3 && e.r <= 5));
  ReplayBuffer small(10);
  small.push(make_exp(0, 0, 0, 1, 0, 0, 0));
  CHECK_THROWS_AS(small.sample(2, rng), InsufficientSamples);
  AgentBrain empty(small_config(), 2.0);
  CHECK_THROWS_AS(train_step(empty, rng), InsufficientSamples);
}

TEST_CASE("discount outside [0, 1) is rejected") {
  DdpgConfig cfg = small_config();
  cfg.gamma = 1.0;
  CHECK_THROWS_AS(AgentBrain(cfg, 2.0), ShapeMismatch);
}

TEST_CASE("training on a filled buffer keeps parameters finite") {
  Rng rng(13);
  AgentBrain b(small_config(), 2.0, rng);
  for (const auto& e : random_batch(rng, 16)) b.buffer.push(e);
  for (int i = 0; i < 50; ++i) {
    const TrainStats st = train_step(b, rng);
    CHECK(std::isfinite(st.critic_loss));
    CHECK(std::isfinite(st.actor_loss));
  }
  CHECK(nn::all_finite(b.actor));
  CHECK(nn::all_finite(b.critic));
}

TEST_CASE("checkpoint round trip") {
  Rng rng(14);
  DdpgConfig cfg = small_config();
  cfg.init = InitScheme::WidePositive;
  AgentBrain b(cfg, 2.0, rng);
  for (const auto& e : random_batch(rng, 7)) b.buffer.push(e);
  const auto dir = std::filesystem::temp_directory_path() / "safebid_test_ddpg";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "agent.ckpt").string();
  save_checkpoint(b, path);
  const AgentBrain c = load_checkpoint(path);
  CHECK(c.k_max == b.k_max);
  CHECK(c.cfg.gamma == b.cfg.gamma);
  CHECK(c.cfg.init == InitScheme::WidePositive);
  CHECK(c.buffer.capacity() == b.buffer.capacity());
  CHECK(c.buffer.size() == 0);
  const MlpParams* pairs[][2] = {{&b.actor, &c.actor},
                                 {&b.target_actor, &c.target_actor},
                                 {&b.critic, &c.critic},
                                 {&b.target_critic, &c.target_critic}};
  for (auto& p : pairs) {
    REQUIRE(p[0]->param_count() == p[1]->param_count());
    for (std::size_t k = 0; k < p[0]->param_count(); ++k) CHECK(p[0]->param(k) == p[1]->param(k));
  }
  // WidePositive draws every entry from [1, 3].
  for (std::size_t k = 0; k < c.critic.param_count(); ++k) {
    CHECK(c.critic.param(k) >= 1.0);
    CHECK(c.critic.param(k) <= 3.0);
  }

  const std::string bad = (dir / "bad.ckpt").string();
  std::ofstream(bad, std::ios::binary) << "NOTACKPT and some bytes";
  CHECK_THROWS_AS(load_checkpoint(bad), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint((dir / "missing.ckpt").string()), CheckpointError);
}
