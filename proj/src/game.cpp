#include "ipdq/game.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ipdq {

char to_char(Action a) { return a == Action::C ? 'C' : 'D'; }

Action action_from_char(char c) {
  if (c == 'C' || c == 'c') return Action::C;
  if (c == 'D' || c == 'd') return Action::D;
  throw std::invalid_argument(std::string("invalid action character '") + c + "'");
}

std::string to_string(State s) { return {to_char(s.own_prev), to_char(s.opp_prev)}; }

State state_from_string(std::string_view name) {
  if (name.size() != 2) throw std::invalid_argument("invalid state '" + std::string(name) + "'");
  return State{action_from_char(name[0]), action_from_char(name[1])};
}

PayoffMatrix::PayoffMatrix(double r_cc, double r_cd, double r_dc, double r_dd)
    : r_cc_(r_cc), r_cd_(r_cd), r_dc_(r_dc), r_dd_(r_dd) {
  if (!std::isfinite(r_cc) || !std::isfinite(r_cd) || !std::isfinite(r_dc) || !std::isfinite(r_dd))
    throw std::domain_error("payoff entries must be finite");
  if (!(r_dc > r_cc && r_cc > r_dd && r_dd > r_cd)) {
    std::ostringstream os;
    os << "payoff violates r_dc > r_cc > r_dd > r_cd (r_cc=" << r_cc << ", r_cd=" << r_cd
       << ", r_dc=" << r_dc << ", r_dd=" << r_dd << ")";
    throw std::domain_error(os.str());
  }
  if (!(2.0 * r_cc > r_cd + r_dc))
    throw std::domain_error("payoff violates 2 r_cc > r_cd + r_dc");
}

PayoffMatrix PayoffMatrix::from_g(double g) {
  if (!(g > 1.0)) throw std::domain_error("g must satisfy g > 1 (got " + std::to_string(g) + ")");
  if (!(g < 2.0)) throw std::domain_error("g must satisfy g < 2 (got " + std::to_string(g) + ")");
  PayoffMatrix m(2.0 * g, g, 2.0 + g, 2.0);
  m.g_ = g;
  return m;
}

double PayoffMatrix::reward(Action own, Action opp) const {
  if (own == Action::C) return opp == Action::C ? r_cc_ : r_cd_;
  return opp == Action::C ? r_dc_ : r_dd_;
}

PayoffMatrix payoff_from_g(double g) { return PayoffMatrix::from_g(g); }

double reward(const PayoffMatrix& m, Action a1, Action a2) { return m.reward(a1, a2); }

}  // namespace ipdq
