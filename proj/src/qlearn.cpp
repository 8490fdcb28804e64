#include "safebid/qlearn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "safebid/errors.hpp"

namespace safebid::qlearn {

std::vector<double> Axis::interior_edges() const {
  if (bins < 2) throw BadBinning(fmt::format("need at least 2 bins, got {}", bins));
  if (!(hi > lo)) throw BadBinning(fmt::format("bin range [{}, {}] is empty", lo, hi));
  std::vector<double> e;
  for (int j = 1; j < bins; ++j) e.push_back(lo + (hi - lo) * j / bins);
  return e;
}

int Axis::bin(double v) const {
  const std::vector<double> e = interior_edges();
  if (std::isnan(v)) throw BadBinning("cannot bin NaN");
  return static_cast<int>(std::upper_bound(e.begin(), e.end(), v) - e.begin());
}

int discretize_state(double price, double demand, const Binning& b) {
  return b.price.bin(price) * b.demand.bins + b.demand.bin(demand);
}

int encode_action(const DiscreteAction& a, int levels) { return a.maint * levels + a.level; }

DiscreteAction decode_action(int a, int levels) {
  if (a < 0 || a >= 2 * levels) throw IndexOutOfRange(fmt::format("action {} out of range", a));
  return DiscreteAction{a % levels, static_cast<std::uint8_t>(a / levels)};
}

QTable::QTable(int states, int actions, double alpha, double gamma)
    : states_(states), actions_(actions), alpha_(alpha), gamma_(gamma) {
  if (states < 1 || actions < 1) throw IndexOutOfRange("table needs at least one state and action");
  q_.assign(static_cast<std::size_t>(states) * actions, 0.0);
  visits_.assign(q_.size(), 0);
}

void QTable::check(int s, int a) const {
  if (s < 0 || s >= states_ || a < 0 || a >= actions_) {
    throw IndexOutOfRange(
        fmt::format("(state {}, action {}) outside {}x{} table", s, a, states_, actions_));
  }
}

double& QTable::at(int s, int a) {
  check(s, a);
  return q_[static_cast<std::size_t>(s) * actions_ + a];
}

double QTable::at(int s, int a) const { return const_cast<QTable&>(*this).at(s, a); }

std::uint64_t QTable::visits(int s, int a) const {
  check(s, a);
  return visits_[static_cast<std::size_t>(s) * actions_ + a];
}

double QTable::max_value(int s) const { return at(s, argmax(s)); }

int QTable::argmax(int s) const {
  check(s, 0);
  const auto row = q_.begin() + static_cast<std::ptrdiff_t>(s) * actions_;
  return static_cast<int>(std::max_element(row, row + actions_) - row);
}

bool QTable::all_finite() const {
  return std::all_of(q_.begin(), q_.end(), [](double v) { return std::isfinite(v); });
}

void QTable::update(int s, int a, double r, int s_next) {
  check(s, a);
  check(s_next, 0);
  const double target = r + gamma_ * max_value(s_next);
  double& q = at(s, a);
  q = (1.0 - alpha_) * q + alpha_ * target;
  ++visits_[static_cast<std::size_t>(s) * actions_ + a];
}

void q_update(QTable& table, int s, int a, double r, int s_next) { table.update(s, a, r, s_next); }

int epsilon_greedy_action(const QTable& table, int s, double epsilon, Rng& rng) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < epsilon) {
    std::uniform_int_distribution<int> pick(0, table.actions() - 1);
    return pick(rng);
  }
  return table.argmax(s);
}

// Text layout:
//   safebid-qtable 1
//   states <S> actions <A> alpha <a> gamma <g>
//   S lines of A values, then S lines of A visit counts.
void QTable::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw CheckpointError("cannot open " + path + " for writing");
  os << "safebid-qtable 1\n";
  os << fmt::format("states {} actions {} alpha {} gamma {}\n", states_, actions_, alpha_, gamma_);
  for (int s = 0; s < states_; ++s) {
    for (int a = 0; a < actions_; ++a) {
      os << (a ? " " : "") << fmt::format("{}", q_[static_cast<std::size_t>(s) * actions_ + a]);
    }
    os << '\n';
  }
  for (int s = 0; s < states_; ++s) {
    for (int a = 0; a < actions_; ++a) {
      os << (a ? " " : "") << visits_[static_cast<std::size_t>(s) * actions_ + a];
    }
    os << '\n';
  }
  if (!os) throw CheckpointError("write failed for " + path);
}

QTable QTable::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw CheckpointError("cannot open " + path);
  std::string magic, key;
  int version = 0, states = 0, actions = 0;
  double alpha = 0, gamma = 0;
  is >> magic >> version;
  if (magic != "safebid-qtable" || version != 1) throw CheckpointError(path + " is not a Q table");
  auto expect = [&](const char* want) {
    is >> key;
    if (key != want) throw CheckpointError(fmt::format("expected '{}' in {}", want, path));
  };
  expect("states");
  is >> states;
  expect("actions");
  is >> actions;
  expect("alpha");
  is >> alpha;
  expect("gamma");
  is >> gamma;
  if (!is) throw CheckpointError("malformed Q table header in " + path);
  QTable t(states, actions, alpha, gamma);
  for (double& v : t.q_) {
    if (!(is >> v)) throw CheckpointError("Q table values truncated in " + path);
  }
  for (std::uint64_t& v : t.visits_) {
    if (!(is >> v)) throw CheckpointError("Q table visit counts truncated in " + path);
  }
  return t;
}

}  // namespace safebid::qlearn
