#ifndef IPDQ_THEORY_HPP
#define IPDQ_THEORY_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ipdq/engine.hpp"
#include "ipdq/game.hpp"
#include "ipdq/policy.hpp"
#include "json.hpp"

namespace ipdq {

// Initialisation conditions under which greedy self-play walks
// always-defect -> lose-shift -> Pavlov.
//   floor: r_dd/(1-gamma) < Q[DD][C]
//   band:  Q[DD][C] < r_cc/(1-gamma) - (r_cc-r_dd)/(1-gamma^2) < Q[CC][C] and Q[DD][D] < Q[CC][C]
//   cap:   Q[CC][C] < r_cc/(1-gamma)
struct InitialConditionReport {
  bool floor_ok = false, band_ok = false, cap_ok = false, initial_policy_is_alld = false;
  std::map<std::string, double> margins;  // positive when satisfied
  double band_middle = 0.0;                 // first form
  double band_middle_identity = 0.0;        // (r_dd + gamma r_cc)/(1 - gamma^2), equal to band_middle
  double cap = 0.0;

  bool all_ok() const { return floor_ok && band_ok && cap_ok && initial_policy_is_alld; }
};

InitialConditionReport check_initial_conditions(const QTable& q0, const PayoffMatrix& m, double gamma);

class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Greedy (epsilon = 0) three-phase dynamics evaluated without the engine:
// phase 1 uses the closed form of the Q[DD][D] contraction, phase 2 the coupled
// Q[DD][C]/Q[CC][D] recursion, phase 3 the Q[CC][C] contraction.
struct PhaseOracle {
  std::vector<QTable> q;  // q[t] for t = 0..n_iter
  std::vector<int> phase;  // 1, 2 or 3 for the round producing q[t]; 0 at t = 0
  std::uint64_t t1_pred = 0;
  std::optional<std::uint64_t> t2_pred;
  double u_star = 0.0;  // lose-shift value of Q[CC][D]
  double v_star = 0.0;  // lose-shift value of Q[DD][C]
  double q_cc_c_limit = 0.0;
};

// Throws PreconditionError unless check_initial_conditions holds and cfg.epsilon == 0, s0 == DD.
PhaseOracle deterministic_oracle(const QTable& q0, const RunConfig& cfg);

// First round t with Q[DD][D]^t < Q[DD][C]^0 under the phase-1 contraction;
// nullopt when the ratio does not allow a crossing.
std::optional<std::uint64_t> phase1_hitting_time(const QTable& q0, const PayoffMatrix& m, double gamma, double alpha);

struct RateRow {
  double alpha = 0.0;
  std::optional<std::uint64_t> t1, t2, t1_pred;
  double alpha_t1 = 0.0, alpha_t2 = 0.0;
};

struct RateTable {
  std::vector<RateRow> rows;
  // log((Q[DD][D] - r_dd/(1-gamma)) / (Q[DD][C] - r_dd/(1-gamma))) / (1 - gamma)
  double alpha_t1_limit = 0.0;
};

// Each alpha runs with epsilon forced to 0 and n_iter raised to at least 60/alpha.
RateTable rate_scaling(const std::vector<double>& alphas, const RunConfig& base);

struct EventProbability {
  long double exact = 0.0L;
  long double bound = 0.0L;
};

// P(at most k of T rounds contain a non-greedy draw) = sum_{i<=k} C(T,i)(1-e)^{2(T-i)}(2e-e^2)^i
// and its lower bound 1 - 2^T (2e)^{k+1}. Requires 0 <= k <= T <= 60.
EventProbability event_probability_exact(double epsilon, int k, int T);

// The same comparison in rational arithmetic for epsilon = num/den.
struct ExactEventComparison {
  bool exact_ge_bound = false;
  double exact = 0.0;  // rounded for reporting
  double bound = 0.0;
};
ExactEventComparison event_probability_rational(unsigned num, unsigned den, int k, int T);

// Exhaustive rational check over 0 <= k <= T <= t_max: exact >= bound, exact
// nonincreasing in T and nondecreasing in k.
struct EventGridReport {
  std::uint64_t cells = 0;
  std::uint64_t bound_violations = 0;
  std::uint64_t monotone_violations = 0;
};
EventGridReport event_grid_check(unsigned num, unsigned den, int t_max);

struct BoundCheck {
  std::string name;
  bool applicable = true;
  bool holds = true;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;  // positive when the bound holds strictly
  std::string context;
};

nlohmann::json to_json(const BoundCheck& c);

// Number of rounds in [from + 1, to] with a non-greedy draw by either player.
std::uint64_t exploration_count(const TrajectoryRecord& rec, std::uint64_t from, std::uint64_t to);

// Item-by-item checks of the always-defect -> lose-shift analysis on the first T
// rounds of rec, which must be recorded with stride 1. With w = D_r alpha/(1-gamma),
// d* = r_dd/(1-gamma) and rho = 1 - alpha(1-gamma):
//   b  every |Q^{t+1} - Q^t| <= w                          (always applicable)
//   c  |Q^t - Q^0| <= 2k w off (DD, D)                     (phase 1)
//   d  Q[DD][D]^t - d* <= rho^{t-2k}(Q[DD][D]^0 - d*) + 2k w  (phase 1)
//   e  Q[s][D] > Q[s][C] for s != DD when k < (1-gamma) dQ/(2 alpha D_r)  (phase 1)
//   f  Q[DD][D]^T < Q[DD][C]^T when T exceeds the crossing bound
// c-f need at most k exploratory rounds among the first T. Phase 1 ends at the
// first round whose greedy profile is not always-defect.
std::vector<BoundCheck> check_phase1_bounds(const TrajectoryRecord& rec, int k, std::uint64_t T);

// Minimum T for which item f applies, or nullopt if the log argument is not positive.
std::optional<double> phase1_crossing_bound(const QTable& q0, const PayoffMatrix& m, double gamma, double alpha,
                                            int k);

// Lose-shift analogues on the window [t1, t2] (t2 or the last round), same w:
//   a  per-step bound
//   b  drift <= 2k w off (DD, C) and (CC, D)
//   c  Q[CC][D] - u* below the eigen-envelope C1 l1^{j-k} + C2 l2^{j-k} + 2k w
//      at its j-th update after the first Q[DD][C] update of the window
//   d  Q[s][D] > Q[s][C] for s in {CD, DC} when k < (1-gamma) dQ/(2 alpha D_r)
//   e  combined DD and CC gap >= k w when the CC gap at t1 is >= 4k w
// b-e need t1 and at most k exploratory rounds in the window.
std::vector<BoundCheck> check_phase2_bounds(const TrajectoryRecord& rec, int k);

// Envelope coefficients from the reference point (u0, v0) with u0 = Q[CC][D] - u*
// and v0 = -(Q[DD][C] - v*).
struct EnvelopeCoefficients {
  double c1 = 0.0, c2 = 0.0, lambda1 = 0.0, lambda2 = 0.0;
};
EnvelopeCoefficients envelope_coefficients(double alpha, double gamma, double u0, double v0);

// While Q[CC][D] > Q[CC][C]^{t1} in the lose-shift window, Q[DD][C] > Q[DD][D]^{t1}.
// Not applicable unless u* < Q[CC][C]^{t1} <= r_cc/(1-gamma).
// With k set, not applicable when the window has more than k exploratory rounds.
BoundCheck check_lose_shift_window(const TrajectoryRecord& rec, std::optional<int> k = std::nullopt);

struct ConvergenceCell {
  double alpha = 0.0, epsilon = 0.0;
  std::uint64_t horizon = 0;
  CooperationEstimate estimate;
};

struct ConvergenceResult {
  double c = 0.0;  // horizon constant, T = ceil(c / alpha)
  std::vector<ConvergenceCell> cells;
  bool monotone = false;  // estimates nonincreasing in alpha and epsilon within tolerance
  double monotone_tolerance = 0.0;
  bool smallest_cell_meets_delta = false;  // estimate >= 1 - delta at the smallest (alpha, epsilon)
};

// c = 2 max over the grid's alphas of alpha * t2 at epsilon 0.
ConvergenceResult convergence_monte_carlo(const std::vector<double>& alphas, const std::vector<double>& epsilons,
                                    const RunConfig& base, std::uint64_t n_runs, double delta, unsigned jobs = 0);

}  // namespace ipdq

#endif  // IPDQ_THEORY_HPP
