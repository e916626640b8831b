#include <cmath>
#include <set>
#include <stdexcept>

#include "doctest.h"
#include "ipdq/policy.hpp"
#include "ipdq/serialize.hpp"

using namespace ipdq;

namespace {

QTable table_from_profile(const PolicyProfile& p) {
  QTable q;
  for (State s : kStates) {
    q(s, p.at(s)) = 1.0;
    q(s, other(p.at(s))) = 0.0;
  }
  return q;
}

}  // namespace

TEST_CASE("epsilon_greedy is greedy at epsilon 0") {
  QTable q;
  q(kDD, Action::D) = 5.0;
  q(kDD, Action::C) = 4.0;
  RandomStream rng(1);
  for (int i = 0; i < 100; ++i) CHECK(epsilon_greedy(q, kDD, 0.0, rng) == Action::D);
}

TEST_CASE("epsilon_greedy explores at rate epsilon") {
  QTable q;
  q(kDD, Action::D) = 4.0;
  q(kDD, Action::C) = 5.0;
  RandomStream rng(42);
  const int n = 100000;
  int c = 0;
  for (int i = 0; i < n; ++i) c += epsilon_greedy(q, kDD, 0.1, rng) == Action::C;
  CHECK(std::abs(static_cast<double>(c) / n - 0.9) < 0.01);

  RandomStream rng2(7);
  int explored = 0;
  for (int i = 0; i < n; ++i) explored += epsilon_greedy_draw(q, kCC, 0.25, rng2).explored;
  CHECK(std::abs(static_cast<double>(explored) / n - 0.25) < 0.01);
}

TEST_CASE("ties go to D") {
  QTable q;
  RandomStream rng(3);
  for (State s : kStates) CHECK(epsilon_greedy(q, s, 0.0, rng) == Action::D);
  CHECK(classify(q).kind() == PolicyKind::AlwaysDefect);
}

TEST_CASE("epsilon outside [0, 1/2] is rejected") {
  QTable q;
  RandomStream rng(3);
  CHECK_THROWS_AS(epsilon_greedy(q, kDD, 0.51, rng), std::domain_error);
  CHECK_THROWS_AS(epsilon_greedy(q, kDD, -0.01, rng), std::domain_error);
  CHECK_NOTHROW(epsilon_greedy(q, kDD, 0.5, rng));
}

TEST_CASE("epsilon 0 matches argmax on random tables") {
  RandomStream gen(11);
  RandomStream rng(12);
  for (int i = 0; i < 10000; ++i) {
    QTable q;
    for (State s : kStates)
      for (Action a : kActions) q(s, a) = gen.uniform() * 10.0 - 5.0;
    for (State s : kStates) {
      const Action expect = q(s, Action::C) > q(s, Action::D) ? Action::C : Action::D;
      CHECK(epsilon_greedy(q, s, 0.0, rng) == expect);
    }
  }
}

TEST_CASE("classify names the table's greedy strategies") {
  QTable q;
  for (State s : kStates) {
    q(s, Action::D) = 1.0;
    q(s, Action::C) = 0.0;
  }
  CHECK(classify(q).kind() == PolicyKind::AlwaysDefect);
  CHECK(classify(q).name() == "always_defect");

  q(kDD, Action::C) = 2.0;
  CHECK(classify(q).kind() == PolicyKind::LoseShift);
  CHECK(classify(q).name() == "lose_shift");

  q(kCC, Action::C) = 2.0;
  CHECK(classify(q).kind() == PolicyKind::Pavlov);
  CHECK(classify(q).name() == "pavlov");

  q(kDD, Action::C) = 0.0;
  CHECK(classify(q).kind() == PolicyKind::GrimTrigger);

  const PolicyProfile tft = PolicyProfile::tit_for_tat();
  CHECK(tft.at(kDD) == Action::D);
  CHECK(tft.at(kCC) == Action::C);
  CHECK(tft.at(kCD) == Action::D);
  CHECK(tft.at(kDC) == Action::C);
  CHECK(tft.name() == "other:0101");
}

TEST_CASE("classify inverts table_from_profile on all 16 profiles") {
  std::set<std::string> names;
  for (unsigned b = 0; b < 16; ++b) {
    const PolicyProfile p = PolicyProfile::from_bits(static_cast<std::uint8_t>(b));
    CHECK(classify(table_from_profile(p)) == p);
    CHECK(profile_from_name(p.name()) == p);
    names.insert(p.name());
  }
  CHECK(names.size() == 16);
}

TEST_CASE("is_cooperative counts Pavlov and lose-shift only") {
  CHECK(is_cooperative(PolicyKind::Pavlov));
  CHECK(is_cooperative(PolicyKind::LoseShift));
  CHECK_FALSE(is_cooperative(PolicyKind::AlwaysDefect));
  CHECK_FALSE(is_cooperative(PolicyKind::GrimTrigger));
  CHECK_FALSE(is_cooperative(PolicyKind::Other));
}

TEST_CASE("random streams are reproducible and distinct") {
  RandomStream a(5, 0), b(5, 0), c(5, 1), d(6, 0);
  bool differs_c = false, differs_d = false;
  for (int i = 0; i < 64; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs_c |= x != c.next_u64();
    differs_d |= x != d.next_u64();
  }
  CHECK(differs_c);
  CHECK(differs_d);
  CHECK(a.counter() == 64);

  RandomStream u(9);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double x = u.uniform();
    lo = std::min(lo, x);
    hi = std::max(hi, x);
    sum += x;
  }
  CHECK(lo >= 0.0);
  CHECK(hi < 1.0);
  CHECK(std::abs(sum / 100000 - 0.5) < 0.01);
}

TEST_CASE("Q-table JSON round trip") {
  QTable q;
  q(kDD, Action::C) = 6.0;
  q(kCD, Action::D) = -1.25;
  const nlohmann::json j = qtable_to_json(q);
  CHECK(j.at("DD").at("C") == 6.0);
  CHECK(j.at("CD").at("D") == -1.25);
  CHECK(qtable_from_json(j) == q);
}

TEST_CASE("cooperate probability follows the greedy action") {
  QTable q;
  q(kCC, Action::C) = 1.0;
  CHECK(cooperate_probability(q, kCC, 0.1) == doctest::Approx(0.9));
  CHECK(cooperate_probability(q, kDD, 0.1) == doctest::Approx(0.1));
}
