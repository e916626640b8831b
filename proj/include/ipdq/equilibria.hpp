#ifndef IPDQ_EQUILIBRIA_HPP
#define IPDQ_EQUILIBRIA_HPP

#include <array>
#include <optional>
#include <stdexcept>
#include <utility>

#include "ipdq/game.hpp"
#include "ipdq/policy.hpp"
#include "json.hpp"

namespace ipdq {

class SingularSystem : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Solves A x = b in place by Gaussian elimination with partial pivoting.
template <std::size_t N>
std::array<double, N> solve_linear(std::array<std::array<double, N>, N> a, std::array<double, N> b);

struct BellmanSolution {
  QTable q_star;
  PolicyProfile policy;
  bool is_consistent = false;  // greedy(q_star) reproduces policy
  double residual = 0.0;       // max |Bellman violation| of q_star
};

// Self-play Bellman equation under policy: the opponent, seen from swap(s), plays
// the profile action with probability 1 - eps and the other one with eps; the
// continuation value is frozen at the profile's action in the successor state.
//   Q[s][a] = sum_b pi(b | swap(s)) (r(a, b) + gamma Q[(a, b)][policy((a, b))])
BellmanSolution solve_fixed_point(const PolicyProfile& policy, const PayoffMatrix& m, double gamma);

// Residual of q against the equation above for the given policy.
double bellman_residual(const QTable& q, const PolicyProfile& policy, const PayoffMatrix& m, double gamma);

// Always-defect fixed point: Q[s][D] = E r(D, .) / (1 - gamma), Q[s][C] = Q[s][D] - (E r(D, .) - E r(C, .)).
QTable defect_closed_form(const PayoffMatrix& m, double gamma, double epsilon);

struct PavlovClosedForm {
  QTable q;          // all eight entries, rebuilt from the closed forms and the gaps
  double q_cc_c;     // = Q[DD][C]
  double q_cd_d;     // = Q[DC][D]
  double gap_cd;     // Q[CD][D] - Q[CD][C] = Q[DC][D] - Q[DC][C]
  double gap_dd;     // Q[DD][C] - Q[DD][D] = Q[CC][C] - Q[CC][D]
  // The DD gap in the offset form 2 gamma (1 - 2 eps)((g - 1) - g eps) + g.
  // It differs from gap_dd by the constant 2, so it is reported only for
  // comparison. Absent when the matrix was not built from g.
  std::optional<double> gap_dd_offset_form;
  bool exists = false;  // gap_cd > 0 and gap_dd > 0
};

PavlovClosedForm pavlov_closed_form(const PayoffMatrix& m, double gamma, double epsilon);

// Largest epsilon in [0, 1/2] for which the Pavlov fixed point exists, by
// bisection on pavlov_closed_form(...).exists. Returns 0 if it does not exist at 0.
double pavlov_epsilon_threshold(const PayoffMatrix& m, double gamma, double tol = 1e-12);

// Discounted return of player 1 from player-1 state s when both players follow
// deterministic profiles p1 and p2 (player 2 sees swap(s)), summed over the
// eventual cycle in closed form.
double deterministic_return(const PolicyProfile& p1, const PolicyProfile& p2, const PayoffMatrix& m, double gamma,
                            State s);

// One-deviation check of the symmetric profile in every state. Epsilon is ignored.
bool is_subgame_perfect(const PolicyProfile& profile, const PayoffMatrix& m, double gamma, double tol = 1e-12);

// Exact expected discounted returns of the epsilon-greedy profile pair from the
// initial distribution rho over player-1 states (canonical order). Throws
// std::domain_error if rho is not a probability vector within 1e-12.
std::pair<double, double> joint_return(const PolicyProfile& p1, const PolicyProfile& p2, const PayoffMatrix& m,
                                       double gamma, const std::array<double, 4>& rho);

struct EigenReport {
  double lambda_plus = 0.0;
  double lambda_minus = 0.0;
  // Lose-shift phase linearisation over one DD/CC round pair in coordinates
  // u = Q[CC][D] - u*, v = -(Q[DD][C] - v*):
  //   [[1 - alpha, -alpha gamma], [-alpha gamma (1 - alpha), 1 - alpha + (alpha gamma)^2]]
  std::array<std::array<double, 2>, 2> matrix{};
  // Columns are eigenvectors (x, 1) for lambda_plus and lambda_minus.
  std::array<std::array<double, 2>, 2> p{};
  std::array<std::array<double, 2>, 2> p_inv{};
};

EigenReport phase2_eigen(double alpha, double gamma);

// {profile, epsilon, q_star, residual, is_consistent, is_spe, pavlov_exists}
nlohmann::json fixed_point_report(const PolicyProfile& profile, const PayoffMatrix& m, double gamma);

}  // namespace ipdq

#include "ipdq/linear.inl"

#endif  // IPDQ_EQUILIBRIA_HPP
