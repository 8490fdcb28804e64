#include "safebid/ddpg.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "safebid/errors.hpp"

namespace safebid::ddpg {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw InsufficientSamples("replay buffer capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(const Experience& e) {
  ++pushed_;
  if (items_.size() < capacity_) {
    items_.push_back(e);
    return;
  }
  items_[head_] = e;
  head_ = (head_ + 1) % capacity_;
}

Experience ReplayBuffer::at(std::size_t i) const {
  if (i >= items_.size()) throw InsufficientSamples("replay index out of range");
  return items_[(head_ + i) % items_.size()];
}

std::vector<Experience> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (items_.size() < n || items_.empty()) {
    throw InsufficientSamples(
        fmt::format("replay buffer holds {} transitions, {} requested", items_.size(), n));
  }
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<Experience> out;
  out.reserve(n);
  for (std::size_t j = 0; j < n; ++j) out.push_back(items_[pick(rng)]);
  return out;
}

AgentBrain::AgentBrain(const DdpgConfig& c, double kmax)
    : cfg(c),
      k_max(kmax),
      actor(nn::make_mlp(kStateSize, c.hidden1, c.hidden2, kActionSize)),
      target_actor(actor),
      critic(nn::make_mlp(kStateSize + kActionSize, c.hidden1, c.hidden2, 1)),
      target_critic(critic),
      buffer(c.buffer_capacity) {
  if (!(c.gamma >= 0.0 && c.gamma < 1.0)) {
    throw ShapeMismatch(fmt::format("discount {} outside [0, 1)", c.gamma));
  }
}

AgentBrain::AgentBrain(const DdpgConfig& c, double kmax, Rng& init_rng) : AgentBrain(c, kmax) {
  const bool wide = c.init == InitScheme::WidePositive;
  const double lo = wide ? 1.0 : -c.init_range;
  const double hi = wide ? 3.0 : c.init_range;
  nn::init_uniform(actor, lo, hi, init_rng);
  nn::init_uniform(critic, lo, hi, init_rng);
  if (!wide) actor.layers.back().b(0) += 0.5 * (1.0 + k_max);
  target_actor = actor;
  target_critic = critic;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Action select_action(const AgentBrain& brain, const Observation& s, bool explore, double sigma,
                     Rng& rng) {
  const Eigen::Vector2d x(s.price, s.demand);
  const Eigen::VectorXd out = nn::mlp_forward(brain.actor, x);
  double k = out(0);
  const double p = sigmoid(out(1));
  Action a;
  if (explore) {
    std::normal_distribution<double> noise(0.0, 1.0);
    k += sigma * noise(rng);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    a.u = coin(rng) < p ? 1 : 0;
  } else {
    a.u = p > 0.5 ? 1 : 0;
  }
  a.k = std::max(std::min(k, brain.k_max), 1.0);
  return a;
}

Eigen::MatrixXd critic_input(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) {
  if (states.rows() != kStateSize || actions.rows() != kActionSize ||
      states.cols() != actions.cols()) {
    throw ShapeMismatch("critic input needs 2 state rows and 2 action rows per sample");
  }
  Eigen::MatrixXd x(kStateSize + kActionSize, states.cols());
  x.topRows(kStateSize) = states;
  x.bottomRows(kActionSize) = actions;
  return x;
}

CriticModel mlp_critic(const MlpParams& critic) {
  return [&critic](const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) {
    const Eigen::MatrixXd x = critic_input(states, actions);
    const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(1, x.cols());
    nn::MlpGradients g = nn::mlp_gradients_batch(critic, x, ones);
    CriticEval ev;
    ev.q = nn::mlp_forward_batch(critic, x).row(0);
    ev.dq_da = g.input.bottomRows(kActionSize);
    return ev;
  };
}

namespace {

struct BatchMatrices {
  Eigen::MatrixXd s, s_next, a;
  Eigen::RowVectorXd r;
};

BatchMatrices to_matrices(std::span<const Experience> batch) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  BatchMatrices m{Eigen::MatrixXd(2, n), Eigen::MatrixXd(2, n), Eigen::MatrixXd(2, n),
                  Eigen::RowVectorXd(n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const Experience& e = batch[static_cast<std::size_t>(j)];
    m.s.col(j) << e.s.price, e.s.demand;
    m.s_next.col(j) << e.s_next.price, e.s_next.demand;
    m.a.col(j) << static_cast<double>(e.a.u), e.a.k;
    m.r(j) = e.r;
  }
  return m;
}

}  // namespace

LossGradients critic_loss_gradients(const AgentBrain& brain, std::span<const Experience> batch) {
  if (batch.empty()) throw InsufficientSamples("critic update needs a non-empty minibatch");
  const BatchMatrices m = to_matrices(batch);
  const auto n = static_cast<double>(batch.size());

  // Target action from the target actor, executed form: clipped bid and
  // maintenance probability.
  Eigen::MatrixXd next = nn::mlp_forward_batch(brain.target_actor, m.s_next);
  Eigen::MatrixXd next_action(2, next.cols());
  for (Eigen::Index j = 0; j < next.cols(); ++j) {
    next_action(0, j) = sigmoid(next(1, j));
    next_action(1, j) = std::max(std::min(next(0, j), brain.k_max), 1.0);
  }
  const Eigen::RowVectorXd q_next =
      nn::mlp_forward_batch(brain.target_critic, critic_input(m.s_next, next_action)).row(0);
  const Eigen::RowVectorXd y = brain.cfg.reward_scale * m.r + brain.cfg.gamma * q_next;

  const Eigen::MatrixXd x = critic_input(m.s, m.a);
  const Eigen::RowVectorXd q = nn::mlp_forward_batch(brain.critic, x).row(0);
  const Eigen::RowVectorXd diff = q - y;
  const Eigen::MatrixXd upstream = (2.0 / n) * diff;
  return LossGradients{diff.squaredNorm() / n, nn::mlp_gradients_batch(brain.critic, x, upstream)};
}

double critic_update(AgentBrain& brain, std::span<const Experience> batch) {
  const LossGradients lg = critic_loss_gradients(brain, batch);
  nn::apply_gradient(brain.critic, lg.grads, brain.cfg.critic_lr);
  return lg.loss;
}

LossGradients actor_loss_gradients(const MlpParams& actor, const CriticModel& critic,
                                   const Eigen::MatrixXd& states, double k_max,
                                   double bound_penalty) {
  if (states.cols() == 0) throw InsufficientSamples("actor update needs a non-empty minibatch");
  const double n = static_cast<double>(states.cols());
  const Eigen::MatrixXd out = nn::mlp_forward_batch(actor, states);

  Eigen::MatrixXd actions(2, out.cols());
  Eigen::RowVectorXd dp(out.cols());
  Eigen::RowVectorXd excess(out.cols());
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    const double p = sigmoid(out(1, j));
    const double k = std::max(std::min(out(0, j), k_max), 1.0);
    actions(0, j) = p;
    actions(1, j) = k;
    dp(j) = p * (1.0 - p);
    excess(j) = out(0, j) - k;
  }
  const CriticEval ev = critic(states, actions);

  Eigen::MatrixXd upstream(2, out.cols());
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    upstream(0, j) = (excess(j) == 0.0 ? -ev.dq_da(1, j) : bound_penalty * excess(j)) / n;
  }
  upstream.row(1) = -(ev.dq_da.row(0).cwiseProduct(dp)) / n;
  const double loss = -ev.q.mean() + 0.5 * bound_penalty * excess.squaredNorm() / n;
  return LossGradients{loss, nn::mlp_gradients_batch(actor, states, upstream)};
}

double actor_update(MlpParams& actor, const CriticModel& critic, const Eigen::MatrixXd& states,
                    double k_max, double bound_penalty, double lr) {
  const LossGradients lg = actor_loss_gradients(actor, critic, states, k_max, bound_penalty);
  nn::apply_gradient(actor, lg.grads, lr);
  return lg.loss;
}

double actor_update(AgentBrain& brain, std::span<const Experience> batch) {
  if (batch.empty()) throw InsufficientSamples("actor update needs a non-empty minibatch");
  const BatchMatrices m = to_matrices(batch);
  return actor_update(brain.actor, mlp_critic(brain.critic), m.s, brain.k_max,
                      brain.cfg.bound_penalty, brain.cfg.actor_lr);
}

void soft_update_targets(AgentBrain& brain) {
  brain.target_critic = nn::soft_update(brain.critic, brain.target_critic, brain.cfg.tau);
  brain.target_actor = nn::soft_update(brain.actor, brain.target_actor, brain.cfg.actor_tau);
}

TrainStats train_step(AgentBrain& brain, Rng& rng) {
  const std::vector<Experience> batch = brain.buffer.sample(brain.cfg.batch_size, rng);
  TrainStats st;
  st.critic_loss = critic_update(brain, batch);
  st.actor_loss = actor_update(brain, batch);
  soft_update_targets(brain);
  return st;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint layout is little-endian");

constexpr char kMagic[8] = {'S', 'B', 'D', 'D', 'P', 'G', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw CheckpointError("checkpoint truncated");
  return v;
}

void put_net(std::ofstream& os, const MlpParams& p) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(p.layers.size()));
  for (const nn::Layer& l : p.layers) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(l.w.rows()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(l.w.cols()));
    for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) put<double>(os, l.w(r, c));
    }
    for (Eigen::Index r = 0; r < l.b.size(); ++r) put<double>(os, l.b(r));
  }
}

MlpParams get_net(std::ifstream& is) {
  MlpParams p;
  const auto count = get<std::uint32_t>(is);
  if (count == 0 || count > 64) throw CheckpointError("implausible layer count");
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto rows = get<std::uint32_t>(is);
    const auto cols = get<std::uint32_t>(is);
    if (rows == 0 || cols == 0 || rows > 1u << 16 || cols > 1u << 16) {
      throw CheckpointError("implausible layer shape");
    }
    nn::Layer l{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
    for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) l.w(r, c) = get<double>(is);
    }
    for (Eigen::Index r = 0; r < l.b.size(); ++r) l.b(r) = get<double>(is);
    p.layers.push_back(std::move(l));
  }
  nn::check_shapes(p);
  return p;
}

}  // namespace

void save_checkpoint(const AgentBrain& brain, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open " + path + " for writing");
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kVersion);
  const DdpgConfig& c = brain.cfg;
  put<std::uint32_t>(os, static_cast<std::uint32_t>(c.hidden1));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(c.hidden2));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(c.init));
  for (double v : {c.gamma, c.critic_lr, c.actor_lr, c.tau, c.actor_tau, c.sigma_start, c.sigma_end,
                   c.reward_scale, c.init_range, c.bound_penalty, brain.k_max}) {
    put<double>(os, v);
  }
  put<std::uint64_t>(os, c.batch_size);
  put<std::uint64_t>(os, brain.buffer.capacity());
  put<std::uint64_t>(os, brain.buffer.size());
  put<std::uint64_t>(os, brain.buffer.pushed());
  put_net(os, brain.actor);
  put_net(os, brain.target_actor);
  put_net(os, brain.critic);
  put_net(os, brain.target_critic);
  if (!os) throw CheckpointError("write failed for " + path);
}

AgentBrain load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(path + " is not a DDPG checkpoint");
  }
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion) {
    throw CheckpointError(fmt::format("unsupported checkpoint version {}", version));
  }
  DdpgConfig c;
  c.hidden1 = static_cast<int>(get<std::uint32_t>(is));
  c.hidden2 = static_cast<int>(get<std::uint32_t>(is));
  c.init = static_cast<InitScheme>(get<std::uint32_t>(is));
  c.gamma = get<double>(is);
  c.critic_lr = get<double>(is);
  c.actor_lr = get<double>(is);
  c.tau = get<double>(is);
  c.actor_tau = get<double>(is);
  c.sigma_start = get<double>(is);
  c.sigma_end = get<double>(is);
  c.reward_scale = get<double>(is);
  c.init_range = get<double>(is);
  c.bound_penalty = get<double>(is);
  const double k_max = get<double>(is);
  c.batch_size = get<std::uint64_t>(is);
  c.buffer_capacity = get<std::uint64_t>(is);
  get<std::uint64_t>(is);  // stored transitions, informational
  get<std::uint64_t>(is);  // total pushed, informational

  AgentBrain brain(c, k_max);
  brain.actor = get_net(is);
  brain.target_actor = get_net(is);
  brain.critic = get_net(is);
  brain.target_critic = get_net(is);
  return brain;
}

}  // namespace safebid::ddpg
