#ifndef IPDQ_POLICY_HPP
#define IPDQ_POLICY_HPP

#include <array>
#include <cstdint>
#include <string>

#include "ipdq/game.hpp"

namespace ipdq {

// The single Q-table shared by both players in self-play: 4 states x 2 actions.
class QTable {
 public:
  QTable() = default;

  double& operator()(State s, Action a) { return q_[index(s)][index(a)]; }
  double operator()(State s, Action a) const { return q_[index(s)][index(a)]; }

  // Ties resolve to D.
  Action greedy(State s) const;
  double max_value(State s) const;

  bool all_finite() const;
  double max_abs_diff(const QTable& other) const;

  // Entries in (state, action) order DD:C, DD:D, CC:C, CC:D, CD:C, CD:D, DC:C, DC:D,
  // the column order of the trajectory CSV.
  std::array<double, 8> flat() const;

  friend bool operator==(const QTable&, const QTable&) = default;

 private:
  std::array<std::array<double, 2>, 4> q_{};
};

// Named memory-one strategies of the greedy policy.
enum class PolicyKind : std::uint8_t { AlwaysDefect, LoseShift, GrimTrigger, Pavlov, Other };

// A deterministic memory-one policy: the greedy action in each state (canonical
// order DD, CC, CD, DC) together with the exploration rate of its epsilon-greedy form.
struct PolicyProfile {
  std::array<Action, 4> greedy_action{Action::D, Action::D, Action::D, Action::D};
  double epsilon = 0.0;

  Action at(State s) const { return greedy_action[index(s)]; }

  // Bit i set iff the profile cooperates in kStates[i].
  std::uint8_t bits() const;
  static PolicyProfile from_bits(std::uint8_t bits, double epsilon = 0.0);

  PolicyKind kind() const;
  // "always_defect", "lose_shift", "grim_trigger", "pavlov" or "other:<CD-bits>"
  // where the bit string lists 1 (cooperate) / 0 (defect) in canonical state order.
  std::string name() const;

  static PolicyProfile always_defect(double epsilon = 0.0);
  static PolicyProfile lose_shift(double epsilon = 0.0);
  static PolicyProfile grim_trigger(double epsilon = 0.0);
  static PolicyProfile pavlov(double epsilon = 0.0);
  static PolicyProfile tit_for_tat(double epsilon = 0.0);

  friend bool operator==(const PolicyProfile&, const PolicyProfile&) = default;
};

std::string to_string(PolicyKind kind);
PolicyProfile profile_from_name(const std::string& name);

// Greedy profile of q with ties broken toward D.
PolicyProfile classify(const QTable& q, double epsilon = 0.0);
bool is_cooperative(PolicyKind kind);

// Counter-based random stream: the n-th draw is a pure function of
// (seed, stream, n), so a run is reproducible regardless of scheduling.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  std::uint64_t uniform_index(std::uint64_t n);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

struct ActionDraw {
  Action action;
  bool explored;  // true iff the non-greedy branch was taken
};

// Greedy action with probability 1 - epsilon, the other action otherwise.
// Throws std::domain_error unless 0 <= epsilon <= 1/2.
ActionDraw epsilon_greedy_draw(const QTable& q, State s, double epsilon, RandomStream& rng);
Action epsilon_greedy(const QTable& q, State s, double epsilon, RandomStream& rng);

// Probability of cooperating in state s under the epsilon-greedy policy of q.
double cooperate_probability(const QTable& q, State s, double epsilon);

}  // namespace ipdq

#endif  // IPDQ_POLICY_HPP
