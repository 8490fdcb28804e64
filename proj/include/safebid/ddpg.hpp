#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "safebid/mlp.hpp"

namespace safebid::ddpg {

using nn::MlpParams;
using nn::Rng;

enum class InitScheme {
  SmallUniform,  // U[-init_range, init_range]
  WidePositive,    // U[1, 3] on every weight and bias
};

struct DdpgConfig {
  int hidden1 = 64;
  int hidden2 = 64;
  double gamma = 0.95;
  double critic_lr = 1e-3;  // eta
  double actor_lr = 1e-3;   // eta^mu
  double tau = 0.99;        // critic target retention, see nn::soft_update
  double actor_tau = 0.99;
  std::size_t buffer_capacity = 10000;
  std::size_t batch_size = 100;  // N_s
  double sigma_start = 0.3;
  double sigma_end = 0.02;
  double reward_scale = 0.1;  // applied to rewards inside the critic target only
  InitScheme init = InitScheme::SmallUniform;
  double init_range = 0.1;
  double bound_penalty = 1.0;  // pulls the bid head back into [1, k_max] in the actor loss
};

// Market observation after normalisation: price over the highest possible
// offer, demand over total installed capacity.
struct Observation {
  double price = 0.0;
  double demand = 0.0;
};

struct Action {
  std::uint8_t u = 0;  // maintenance request
  double k = 1.0;      // bid multiplier
};

struct Experience {
  Observation s;
  Observation s_next;
  Action a;
  double r = 0.0;  // unscaled reward
};

// Bounded FIFO with uniform sampling with replacement.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(const Experience& e);
  // Throws InsufficientSamples if fewer than n items are stored.
  std::vector<Experience> sample(std::size_t n, Rng& rng) const;

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t pushed() const { return pushed_; }
  // Oldest first.
  Experience at(std::size_t i) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // index of the oldest item once full
  std::uint64_t pushed_ = 0;
  std::vector<Experience> items_;
};

// One learner: actor 2 -> h1 -> h2 -> 2 (bid head, maintenance logit) and
// critic 4 -> h1 -> h2 -> 1 over (price, demand, u, k), each with a target copy.
// Under SmallUniform the bid head's bias starts at the middle of [1, k_max].
struct AgentBrain {
  AgentBrain(const DdpgConfig& cfg, double k_max, Rng& init_rng);
  // All-zero networks of the configured shape.
  AgentBrain(const DdpgConfig& cfg, double k_max);

  DdpgConfig cfg;
  double k_max = 2.0;
  MlpParams actor;
  MlpParams target_actor;
  MlpParams critic;
  MlpParams target_critic;
  ReplayBuffer buffer;
};

inline constexpr int kStateSize = 2;
inline constexpr int kActionSize = 2;

double sigmoid(double z);

// Clipped bid in [1, k_max] from the bid head; maintenance from the logistic
// of the second head, sampled when exploring and thresholded at 0.5
// otherwise. Exploration adds N(0, sigma^2) to the bid head before clipping.
Action select_action(const AgentBrain& brain, const Observation& s, bool explore, double sigma,
                     Rng& rng);

// Critic value and its gradient with respect to the action rows (u, k), for
// states and actions given one sample per column.
struct CriticEval {
  Eigen::RowVectorXd q;
  Eigen::MatrixXd dq_da;  // 2 x batch
};
using CriticModel = std::function<CriticEval(const Eigen::MatrixXd& states,
                                             const Eigen::MatrixXd& actions)>;

CriticModel mlp_critic(const MlpParams& critic);

// Stacks (price, demand, u, k) columns.
Eigen::MatrixXd critic_input(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions);

// Loss value and parameter gradients, without taking a step.
struct LossGradients {
  double loss = 0.0;
  nn::MlpGradients grads;
};

LossGradients critic_loss_gradients(const AgentBrain& brain, std::span<const Experience> batch);
LossGradients actor_loss_gradients(const MlpParams& actor, const CriticModel& critic,
                                   const Eigen::MatrixXd& states, double k_max,
                                   double bound_penalty);

// Mean squared TD error against r*scale + gamma * Q'(s', mu'(s')), one
// gradient step on the behaviour critic. Returns the loss before the step.
// Throws InsufficientSamples on an empty batch.
double critic_update(AgentBrain& brain, std::span<const Experience> batch);

// Loss -mean Q(s, mu(s)) with the bid head clipped to [1, k_max] and the
// maintenance head as a probability, plus bound_penalty/2 times the squared
// distance of the raw bid head from [1, k_max] (the critic passes no
// gradient through the clip). One gradient step on the actor; returns the
// loss before the step.
double actor_update(MlpParams& actor, const CriticModel& critic, const Eigen::MatrixXd& states,
                    double k_max, double bound_penalty, double lr);
double actor_update(AgentBrain& brain, std::span<const Experience> batch);

void soft_update_targets(AgentBrain& brain);

struct TrainStats {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
};

// Samples N_s transitions and runs critic, actor and both target updates.
// Throws InsufficientSamples if the buffer holds fewer than N_s items.
TrainStats train_step(AgentBrain& brain, Rng& rng);

// Binary checkpoint of the four networks, hyperparameters and buffer
// counters (buffer contents are not stored). Layout in docs/checkpoint_format.md.
void save_checkpoint(const AgentBrain& brain, const std::string& path);
AgentBrain load_checkpoint(const std::string& path);

}  // namespace safebid::ddpg
