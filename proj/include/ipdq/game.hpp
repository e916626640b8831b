#ifndef IPDQ_GAME_HPP
#define IPDQ_GAME_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace ipdq {

// D orders before C; every loop over actions and every tie-break uses this order.
enum class Action : std::uint8_t { D = 0, C = 1 };

inline constexpr std::array<Action, 2> kActions = {Action::D, Action::C};

constexpr Action other(Action a) { return a == Action::D ? Action::C : Action::D; }
constexpr std::size_t index(Action a) { return static_cast<std::size_t>(a); }

char to_char(Action a);
Action action_from_char(char c);

// Joint action of the previous round, seen from the acting player: own move first.
struct State {
  Action own_prev = Action::D;
  Action opp_prev = Action::D;

  friend constexpr bool operator==(const State&, const State&) = default;
};

inline constexpr State kDD{Action::D, Action::D};
inline constexpr State kCC{Action::C, Action::C};
inline constexpr State kCD{Action::C, Action::D};
inline constexpr State kDC{Action::D, Action::C};

// Canonical listing order (DD, CC, CD, DC) used for tables, profiles and output.
inline constexpr std::array<State, 4> kStates = {kDD, kCC, kCD, kDC};

constexpr std::size_t index(State s) {
  if (s.own_prev == s.opp_prev) return s.own_prev == Action::D ? 0 : 1;
  return s.own_prev == Action::C ? 2 : 3;
}

constexpr State swap(State s) { return State{s.opp_prev, s.own_prev}; }
constexpr State next_state(Action a1, Action a2) { return State{a1, a2}; }

std::string to_string(State s);
State state_from_string(std::string_view name);

// Symmetric 2x2 stage game. reward(a1, a2) is the row player's payoff; the
// column player receives reward(a2, a1).
class PayoffMatrix {
 public:
  // Throws std::domain_error unless r_dc > r_cc > r_dd > r_cd and 2 r_cc > r_cd + r_dc.
  PayoffMatrix(double r_cc, double r_cd, double r_dc, double r_dd);

  // r_cc = 2g, r_cd = g, r_dc = 2 + g, r_dd = 2 with 1 < g < 2.
  static PayoffMatrix from_g(double g);

  double r_cc() const { return r_cc_; }
  double r_cd() const { return r_cd_; }
  double r_dc() const { return r_dc_; }
  double r_dd() const { return r_dd_; }
  std::optional<double> g() const { return g_; }

  double reward(Action own, Action opp) const;
  double r_max() const { return r_dc_; }
  double r_min() const { return r_cd_; }
  // Exactly 2 for the one-parameter family; the subtraction rounds for some g.
  double delta_r() const { return g_ ? 2.0 : r_dc_ - r_cd_; }

  // Discount above which Pavlov is a fixed point / subgame perfect at zero
  // exploration: (r_dc - r_cc) / (r_cc - r_dd).
  double pavlov_gamma_threshold() const { return (r_dc_ - r_cc_) / (r_cc_ - r_dd_); }

 private:
  double r_cc_, r_cd_, r_dc_, r_dd_;
  std::optional<double> g_;
};

PayoffMatrix payoff_from_g(double g);
double reward(const PayoffMatrix& m, Action a1, Action a2);

}  // namespace ipdq

#endif  // IPDQ_GAME_HPP
