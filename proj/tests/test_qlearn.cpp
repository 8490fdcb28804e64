#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "safebid/errors.hpp"
#include "safebid/qlearn.hpp"

using namespace safebid;
using namespace safebid::qlearn;

TEST_CASE("binning examples") {
  const Axis a{0.0, 1.0, 10};
  CHECK(a.bin(0.0) == 0);
  CHECK(a.bin(0.05) == 0);
  CHECK(a.bin(0.1) == 1);  // on an edge: upper bin
  CHECK(a.bin(0.999) == 9);
  CHECK(a.bin(1.0) == 9);
  CHECK(a.bin(-3.0) == 0);
  CHECK(a.bin(7.0) == 9);
  CHECK(a.interior_edges().size() == 9);
  CHECK_THROWS_AS(a.bin(std::nan("")), BadBinning);
  CHECK_THROWS_AS((Axis{0.0, 1.0, 1}.interior_edges()), BadBinning);
  CHECK_THROWS_AS((Axis{1.0, 1.0, 4}.interior_edges()), BadBinning);
}

TEST_CASE("state index layout") {
  Binning b;
  b.price = {0, 1, 4};
  b.demand = {0, 1, 5};
  CHECK(b.states() == 20);
  CHECK(discretize_state(0.0, 0.0, b) == 0);
  CHECK(discretize_state(0.3, 0.5, b) == 1 * 5 + 2);
  CHECK(discretize_state(1.0, 1.0, b) == 19);
}

TEST_CASE("action encoding round trip") {
  for (int levels : {1, 3, 5}) {
    for (int a = 0; a < 2 * levels; ++a) {
      const DiscreteAction d = decode_action(a, levels);
      CHECK(d.level < levels);
      CHECK(encode_action(d, levels) == a);
    }
    CHECK_THROWS_AS(decode_action(2 * levels, levels), IndexOutOfRange);
    CHECK_THROWS_AS(decode_action(-1, levels), IndexOutOfRange);
  }
  CHECK(decode_action(7, 5).maint == 1);
  CHECK(decode_action(7, 5).level == 2);
}

TEST_CASE("single update arithmetic") {
  QTable q(2, 2, 0.5, 0.9);
  q.at(1, 0) = 4.0;
  q.at(1, 1) = 10.0;
  q_update(q, 0, 1, 2.0, 1);
  // 0.5 * 0 + 0.5 * (2 + 0.9 * 10)
  CHECK(q.at(0, 1) == doctest::Approx(5.5).epsilon(1e-15));
  CHECK(q.visits(0, 1) == 1);
  CHECK(q.visits(0, 0) == 0);
  CHECK_THROWS_AS(q.update(2, 0, 0.0, 0), IndexOutOfRange);
  CHECK_THROWS_AS(q.update(0, 2, 0.0, 0), IndexOutOfRange);
}

TEST_CASE("two-state chain converges to the value-iteration fixed point") {
  // Deterministic MDP: action 0 stays, action 1 moves to the other state.
  // Rewards r(s, a) below.
  const double r[2][2] = {{1.0, 0.0}, {2.0, -1.0}};
  const double gamma = 0.9;
  double v[2][2] = {{0, 0}, {0, 0}};
  for (int it = 0; it < 2000; ++it) {
    double next[2][2];
    for (int s = 0; s < 2; ++s) {
      for (int a = 0; a < 2; ++a) {
        const int s2 = a == 0 ? s : 1 - s;
        next[s][a] = r[s][a] + gamma * std::max(v[s2][0], v[s2][1]);
      }
    }
    std::copy(&next[0][0], &next[0][0] + 4, &v[0][0]);
  }
  QTable q(2, 2, 0.5, gamma);
  for (int sweep = 0; sweep < 3000; ++sweep) {
    for (int s = 0; s < 2; ++s) {
      for (int a = 0; a < 2; ++a) q.update(s, a, r[s][a], a == 0 ? s : 1 - s);
    }
  }
  for (int s = 0; s < 2; ++s) {
    for (int a = 0; a < 2; ++a) CHECK(std::abs(q.at(s, a) - v[s][a]) <= 1e-6);
  }
}

TEST_CASE("fully random policy is uniform") {
  QTable q(1, 10, 0.1, 0.9);
  q.at(0, 3) = 100.0;
  Rng rng(71);
  const int n = 20000;
  std::vector<int> count(10, 0);
  for (int i = 0; i < n; ++i) ++count[static_cast<std::size_t>(epsilon_greedy_action(q, 0, 1.0, rng))];
  const double mean = n / 10.0;
  const double sd = std::sqrt(n * 0.1 * 0.9);
  for (int c : count) CHECK(std::abs(c - mean) <= 3 * sd);
}

TEST_CASE("greedy policy and ties") {
  QTable q(1, 4, 0.1, 0.9);
  Rng rng(72);
  CHECK(q.argmax(0) == 0);
  q.at(0, 2) = 1.0;
  q.at(0, 3) = 1.0;
  CHECK(q.argmax(0) == 2);
  CHECK(q.max_value(0) == 1.0);
  for (int i = 0; i < 100; ++i) CHECK(epsilon_greedy_action(q, 0, 0.0, rng) == 2);
}

TEST_CASE("values stay inside the reward bound") {
  // Every value is a convex blend of bounded targets, so |Q| <= R/(1-gamma).
  const double gamma = 0.95, bound = 50.0;
  QTable q(5, 4, 0.3, gamma);
  Rng rng(73);
  std::uniform_int_distribution<int> S(0, 4), A(0, 3);
  std::uniform_real_distribution<double> R(-bound, bound);
  for (int i = 0; i < 100000; ++i) q.update(S(rng), A(rng), R(rng), S(rng));
  for (int s = 0; s < 5; ++s) {
    for (int a = 0; a < 4; ++a) CHECK(std::abs(q.at(s, a)) <= bound / (1 - gamma) + 1e-9);
  }
  CHECK(q.all_finite());
}

TEST_CASE("table round trip") {
  QTable q(3, 4, 0.2, 0.8);
  Rng rng(74);
  std::uniform_real_distribution<double> R(-1e3, 1e3);
  for (int i = 0; i < 200; ++i) q.update(i % 3, i % 4, R(rng), (i + 1) % 3);
  const auto path = (std::filesystem::temp_directory_path() / "safebid_test_qtable.txt").string();
  q.save(path);
  const QTable r = QTable::load(path);
  CHECK(r.states() == 3);
  CHECK(r.actions() == 4);
  CHECK(r.alpha() == 0.2);
  CHECK(r.gamma() == 0.8);
  for (int s = 0; s < 3; ++s) {
    for (int a = 0; a < 4; ++a) {
      CHECK(r.at(s, a) == q.at(s, a));
      CHECK(r.visits(s, a) == q.visits(s, a));
    }
  }
}
