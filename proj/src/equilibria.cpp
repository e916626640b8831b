#include "ipdq/equilibria.hpp"

#include <algorithm>
#include <cmath>

#include "ipdq/serialize.hpp"

namespace ipdq {

namespace {

// Probability that a player in state s plays b under the epsilon-greedy form of p.
double action_prob(const PolicyProfile& p, State s, Action b) {
  return p.at(s) == b ? 1.0 - p.epsilon : p.epsilon;
}

std::size_t var(State s, Action a) { return 2 * index(s) + index(a); }

void require_gamma(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::domain_error("gamma must lie in (0, 1)");
}

void require_epsilon(double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 0.5)) throw std::domain_error("epsilon must lie in [0, 1/2]");
}

}  // namespace

double bellman_residual(const QTable& q, const PolicyProfile& policy, const PayoffMatrix& m, double gamma) {
  double worst = 0.0;
  for (State s : kStates) {
    for (Action a : kActions) {
      double rhs = 0.0;
      for (Action b : kActions) {
        const State next = next_state(a, b);
        rhs += action_prob(policy, swap(s), b) * (m.reward(a, b) + gamma * q(next, policy.at(next)));
      }
      worst = std::max(worst, std::abs(q(s, a) - rhs));
    }
  }
  return worst;
}

BellmanSolution solve_fixed_point(const PolicyProfile& policy, const PayoffMatrix& m, double gamma) {
  require_gamma(gamma);
  require_epsilon(policy.epsilon);
  std::array<std::array<double, 8>, 8> a{};
  std::array<double, 8> rhs{};
  for (State s : kStates) {
    for (Action act : kActions) {
      const std::size_t row = var(s, act);
      a[row][row] += 1.0;
      for (Action b : kActions) {
        const double p = action_prob(policy, swap(s), b);
        const State next = next_state(act, b);
        rhs[row] += p * m.reward(act, b);
        a[row][var(next, policy.at(next))] -= gamma * p;
      }
    }
  }
  const std::array<double, 8> x = solve_linear<8>(a, rhs);
  BellmanSolution sol;
  for (State s : kStates)
    for (Action act : kActions) sol.q_star(s, act) = x[var(s, act)];
  sol.policy = policy;
  sol.residual = bellman_residual(sol.q_star, policy, m, gamma);
  sol.is_consistent = classify(sol.q_star).greedy_action == policy.greedy_action;
  return sol;
}

QTable defect_closed_form(const PayoffMatrix& m, double gamma, double epsilon) {
  require_gamma(gamma);
  require_epsilon(epsilon);
  // The opponent defects with probability 1 - eps in every state.
  const double e_d = (1.0 - epsilon) * m.r_dd() + epsilon * m.r_dc();
  const double e_c = (1.0 - epsilon) * m.r_cd() + epsilon * m.r_cc();
  const double q_d = e_d / (1.0 - gamma);
  QTable q;
  for (State s : kStates) {
    q(s, Action::D) = q_d;
    q(s, Action::C) = q_d - (e_d - e_c);
  }
  return q;
}

PavlovClosedForm pavlov_closed_form(const PayoffMatrix& m, double gamma, double epsilon) {
  require_gamma(gamma);
  require_epsilon(epsilon);
  const double e = epsilon;
  // Expected stage rewards: cooperating against a cooperator, defecting against a defector.
  const double e_cc_c = (1.0 - e) * m.r_cc() + e * m.r_cd();
  const double e_cd_d = (1.0 - e) * m.r_dd() + e * m.r_dc();
  const double e_cd_c = (1.0 - e) * m.r_cd() + e * m.r_cc();
  const double e_dd_d = (1.0 - e) * m.r_dc() + e * m.r_dd();

  PavlovClosedForm out;
  out.q_cc_c = ((1.0 - gamma * e) * e_cc_c + gamma * e * e_cd_d) / (1.0 - gamma);
  out.q_cd_d = (gamma * (1.0 - e) * e_cc_c + (1.0 - gamma * (1.0 - e)) * e_cd_d) / (1.0 - gamma);
  const double drift = gamma * (1.0 - 2.0 * e) * (e_cc_c - e_cd_d);
  out.gap_cd = drift + (e_cd_d - e_cd_c);
  out.gap_dd = drift + (e_cc_c - e_dd_d);
  if (const auto g = m.g()) out.gap_dd_offset_form = 2.0 * gamma * (1.0 - 2.0 * e) * ((*g - 1.0) - *g * e) + *g;
  out.exists = out.gap_cd > 0.0 && out.gap_dd > 0.0;

  for (State s : {kCC, kDD}) {
    out.q(s, Action::C) = out.q_cc_c;
    out.q(s, Action::D) = out.q_cc_c - out.gap_dd;
  }
  for (State s : {kCD, kDC}) {
    out.q(s, Action::D) = out.q_cd_d;
    out.q(s, Action::C) = out.q_cd_d - out.gap_cd;
  }
  return out;
}

double pavlov_epsilon_threshold(const PayoffMatrix& m, double gamma, double tol) {
  if (!pavlov_closed_form(m, gamma, 0.0).exists) return 0.0;
  if (pavlov_closed_form(m, gamma, 0.5).exists) return 0.5;
  double lo = 0.0, hi = 0.5;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    (pavlov_closed_form(m, gamma, mid).exists ? lo : hi) = mid;
  }
  return lo;
}

double deterministic_return(const PolicyProfile& p1, const PolicyProfile& p2, const PayoffMatrix& m, double gamma,
                            State s) {
  require_gamma(gamma);
  // Walk until a state repeats; at most 4 distinct states.
  std::array<int, 4> first_seen{-1, -1, -1, -1};
  std::array<double, 5> reward_at{};
  std::array<State, 5> visited{};
  int n = 0;
  State cur = s;
  while (first_seen[index(cur)] < 0) {
    first_seen[index(cur)] = n;
    visited[n] = cur;
    const Action a = p1.at(cur);
    const Action b = p2.at(swap(cur));
    reward_at[n] = m.reward(a, b);
    cur = next_state(a, b);
    ++n;
  }
  const int cycle_start = first_seen[index(cur)];
  const int cycle_len = n - cycle_start;
  double prefix = 0.0, disc = 1.0;
  for (int i = 0; i < cycle_start; ++i) {
    prefix += disc * reward_at[i];
    disc *= gamma;
  }
  double cycle = 0.0, cdisc = 1.0;
  for (int i = cycle_start; i < n; ++i) {
    cycle += cdisc * reward_at[i];
    cdisc *= gamma;
  }
  return prefix + disc * cycle / (1.0 - std::pow(gamma, cycle_len));
}

bool is_subgame_perfect(const PolicyProfile& profile, const PayoffMatrix& m, double gamma, double tol) {
  for (State s : kStates) {
    const Action b = profile.at(swap(s));
    const Action follow = profile.at(s);
    const Action deviate = other(follow);
    const double v_follow = deterministic_return(profile, profile, m, gamma, s);
    const double v_deviate =
        m.reward(deviate, b) + gamma * deterministic_return(profile, profile, m, gamma, next_state(deviate, b));
    if (v_deviate > v_follow + tol) return false;
  }
  return true;
}

std::pair<double, double> joint_return(const PolicyProfile& p1, const PolicyProfile& p2, const PayoffMatrix& m,
                                       double gamma, const std::array<double, 4>& rho) {
  require_gamma(gamma);
  double total = 0.0;
  for (double r : rho) {
    if (!(r >= 0.0)) throw std::domain_error("rho entries must be nonnegative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::domain_error("rho must sum to 1");

  std::array<std::array<double, 4>, 4> a{};
  std::array<double, 4> r1{}, r2{};
  for (State s : kStates) {
    const std::size_t i = index(s);
    a[i][i] += 1.0;
    for (Action x : kActions) {
      for (Action y : kActions) {
        const double p = action_prob(p1, s, x) * action_prob(p2, swap(s), y);
        r1[i] += p * m.reward(x, y);
        r2[i] += p * m.reward(y, x);
        a[i][index(next_state(x, y))] -= gamma * p;
      }
    }
  }
  const auto v1 = solve_linear<4>(a, r1);
  const auto v2 = solve_linear<4>(a, r2);
  double j1 = 0.0, j2 = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    j1 += rho[i] * v1[i];
    j2 += rho[i] * v2[i];
  }
  return {j1, j2};
}

EigenReport phase2_eigen(double alpha, double gamma) {
  const double a = 1.0 - alpha;
  const double b = alpha * gamma;
  EigenReport rep;
  rep.matrix = {{{a, -b}, {-a * b, a + b * b}}};
  const double root = b * std::sqrt(a + b * b / 4.0);
  rep.lambda_plus = a + b * b / 2.0 + root;
  rep.lambda_minus = a + b * b / 2.0 - root;
  // M (x, 1) = lambda (x, 1) gives a x - b = lambda x.
  const double x_plus = -b / (rep.lambda_plus - a);
  const double x_minus = -b / (rep.lambda_minus - a);
  rep.p = {{{x_plus, x_minus}, {1.0, 1.0}}};
  const double det = x_plus - x_minus;
  rep.p_inv = {{{1.0 / det, -x_minus / det}, {-1.0 / det, x_plus / det}}};
  return rep;
}

nlohmann::json fixed_point_report(const PolicyProfile& profile, const PayoffMatrix& m, double gamma) {
  const BellmanSolution sol = solve_fixed_point(profile, m, gamma);
  nlohmann::json j;
  j["profile"] = profile.name();
  j["epsilon"] = profile.epsilon;
  j["q_star"] = qtable_to_json(sol.q_star);
  j["residual"] = sol.residual;
  j["is_consistent"] = sol.is_consistent;
  j["is_spe"] = is_subgame_perfect(profile, m, gamma);
  j["pavlov_exists"] = pavlov_closed_form(m, gamma, profile.epsilon).exists;
  return j;
}

}  // namespace ipdq
