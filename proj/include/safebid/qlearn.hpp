#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace safebid::qlearn {

using Rng = std::mt19937_64;

// Uniform bins over [lo, hi]; values outside are clamped into the edge bins
// and a value exactly on an interior edge belongs to the upper bin.
struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  int bins = 10;

  std::vector<double> interior_edges() const;
  int bin(double v) const;  // throws BadBinning
};

struct Binning {
  Axis price;
  Axis demand;
  int states() const { return price.bins * demand.bins; }
};

// index = price_bin * demand.bins + demand_bin
int discretize_state(double price, double demand, const Binning& b);

struct QConfig {
  Binning binning;
  std::vector<double> bid_levels = {1.0, 1.25, 1.5, 1.75, 2.0};
  double alpha = 0.1;
  double gamma = 0.95;
  double epsilon_start = 0.3;
  double epsilon_end = 0.02;
};

// Discrete action a = maint * levels + level.
struct DiscreteAction {
  int level = 0;
  std::uint8_t maint = 0;
};
int encode_action(const DiscreteAction& a, int levels);
DiscreteAction decode_action(int a, int levels);

class QTable {
 public:
  QTable(int states, int actions, double alpha, double gamma);

  int states() const { return states_; }
  int actions() const { return actions_; }
  double alpha() const { return alpha_; }
  double gamma() const { return gamma_; }

  double& at(int s, int a);
  double at(int s, int a) const;
  std::uint64_t visits(int s, int a) const;
  double max_value(int s) const;
  int argmax(int s) const;  // lowest index among ties
  bool all_finite() const;

  // Q(s,a) <- (1-alpha) Q(s,a) + alpha (r + gamma max_a' Q(s',a')).
  // Throws IndexOutOfRange.
  void update(int s, int a, double r, int s_next);

  void save(const std::string& path) const;
  static QTable load(const std::string& path);

 private:
  void check(int s, int a) const;

  int states_;
  int actions_;
  double alpha_;
  double gamma_;
  std::vector<double> q_;
  std::vector<std::uint64_t> visits_;
};

void q_update(QTable& table, int s, int a, double r, int s_next);

// With probability epsilon a uniform action, otherwise the greedy one.
int epsilon_greedy_action(const QTable& table, int s, double epsilon, Rng& rng);

}  // namespace safebid::qlearn
