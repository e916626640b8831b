#include "ipdq/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/multiprecision/cpp_int.hpp>

#include "ipdq/equilibria.hpp"

namespace ipdq {

namespace {

using boost::multiprecision::cpp_rational;

double step_width(const PayoffMatrix& m, double gamma, double alpha) {
  return m.delta_r() * alpha / (1.0 - gamma);
}

std::string run_context(const TrajectoryRecord& rec) {
  return "seed=" + std::to_string(rec.config.seed) + " run=" + std::to_string(rec.config.run_index);
}

// Q^t for every t; throws unless every round was snapshotted.
const QTable& q_at(const TrajectoryRecord& rec, std::uint64_t t) {
  if (t >= rec.snapshots.size() || rec.snapshots[t].t != t)
    throw std::invalid_argument("bound checks need a full trajectory recorded with snapshot stride 1");
  return rec.snapshots[t].q;
}

void require_full(const TrajectoryRecord& rec) {
  if (rec.config.record != RecordLevel::full || rec.snapshots.size() != rec.steps.size() + 1)
    throw std::invalid_argument("bound checks need a full trajectory recorded with snapshot stride 1");
}

BoundCheck make_check(std::string name, const TrajectoryRecord& rec) {
  BoundCheck c;
  c.name = std::move(name);
  c.context = run_context(rec);
  return c;
}

BoundCheck not_applicable(BoundCheck c, const std::string& why) {
  c.applicable = false;
  c.holds = true;
  c.context += " (" + why + ")";
  return c;
}

constexpr double kRoundoff = 1e-12;

}  // namespace

InitialConditionReport check_initial_conditions(const QTable& q0, const PayoffMatrix& m, double gamma) {
  InitialConditionReport r;
  const double floor = m.r_dd() / (1.0 - gamma);
  r.band_middle = m.r_cc() / (1.0 - gamma) - (m.r_cc() - m.r_dd()) / (1.0 - gamma * gamma);
  r.band_middle_identity = (m.r_dd() + gamma * m.r_cc()) / (1.0 - gamma * gamma);
  r.cap = m.r_cc() / (1.0 - gamma);

  const double dd_c = q0(kDD, Action::C), dd_d = q0(kDD, Action::D), cc_c = q0(kCC, Action::C);
  r.margins["floor"] = dd_c - floor;
  r.margins["band_left"] = r.band_middle - dd_c;
  r.margins["band_right"] = cc_c - r.band_middle;
  r.margins["band_dd"] = cc_c - dd_d;
  r.margins["cap"] = r.cap - cc_c;
  double defect_margin = std::numeric_limits<double>::infinity();
  for (State s : kStates) defect_margin = std::min(defect_margin, q0(s, Action::D) - q0(s, Action::C));
  r.margins["initial_alld"] = defect_margin;

  r.floor_ok = r.margins["floor"] > 0.0;
  r.band_ok = r.margins["band_left"] > 0.0 && r.margins["band_right"] > 0.0 && r.margins["band_dd"] > 0.0;
  r.cap_ok = r.margins["cap"] > 0.0;
  r.initial_policy_is_alld = classify(q0).kind() == PolicyKind::AlwaysDefect;
  return r;
}

std::optional<std::uint64_t> phase1_hitting_time(const QTable& q0, const PayoffMatrix& m, double gamma,
                                                 double alpha) {
  const double d_star = m.r_dd() / (1.0 - gamma);
  const double ratio = (q0(kDD, Action::C) - d_star) / (q0(kDD, Action::D) - d_star);
  const double rho = 1.0 - alpha * (1.0 - gamma);
  if (!(ratio > 0.0 && ratio < 1.0) || !(rho > 0.0 && rho < 1.0)) return std::nullopt;
  // Smallest t with rho^t < ratio.
  return static_cast<std::uint64_t>(std::floor(std::log(ratio) / std::log(rho))) + 1;
}

PhaseOracle deterministic_oracle(const QTable& q0, const RunConfig& cfg) {
  if (cfg.epsilon != 0.0) throw PreconditionError("the phase oracle needs epsilon = 0");
  if (!(cfg.s0 == kDD)) throw PreconditionError("the phase oracle starts from DD");
  const InitialConditionReport rep = check_initial_conditions(q0, cfg.payoff, cfg.gamma);
  if (!rep.all_ok()) throw PreconditionError("initial table violates the initial conditions");

  const PayoffMatrix& m = cfg.payoff;
  const double a = cfg.alpha, g = cfg.gamma;
  const double rho = 1.0 - a * (1.0 - g);
  const double d_star = m.r_dd() / (1.0 - g);
  const double c_star = m.r_cc() / (1.0 - g);

  PhaseOracle o;
  o.u_star = (m.r_dd() + g * m.r_cc()) / (1.0 - g * g);
  o.v_star = (m.r_cc() + g * m.r_dd()) / (1.0 - g * g);
  o.q_cc_c_limit = c_star;
  o.q.reserve(cfg.n_iter + 1);
  o.phase.reserve(cfg.n_iter + 1);
  o.q.push_back(q0);
  o.phase.push_back(0);

  QTable q = q0;
  int phase = 1;
  bool next_is_dd = true;  // phase 2 alternates DD (both cooperate) and CC (both defect)
  bool transition_pending = false;
  std::uint64_t phase3_start = 0;
  double cc_c_start = 0.0;
  const double dd_d0 = q0(kDD, Action::D);
  for (std::uint64_t t = 1; t <= cfg.n_iter; ++t) {
    const int active = phase;
    if (phase == 1) {
      q(kDD, Action::D) = d_star + std::pow(rho, static_cast<double>(t)) * (dd_d0 - d_star);
      if (q(kDD, Action::D) < q(kDD, Action::C)) {
        o.t1_pred = t;
        phase = 2;
      }
    } else if (phase == 2) {
      if (next_is_dd) {
        q(kDD, Action::C) = (1.0 - a) * q(kDD, Action::C) + a * (m.r_cc() + g * q(kCC, Action::D));
      } else {
        q(kCC, Action::D) = (1.0 - a) * q(kCC, Action::D) + a * (m.r_dd() + g * q(kDD, Action::C));
        if (q(kCC, Action::D) < q(kCC, Action::C)) {
          o.t2_pred = t;
          phase = 3;
          transition_pending = true;
        }
      }
      if (!(q(kDD, Action::C) > q(kDD, Action::D)))
        throw PreconditionError("lose-shift region left through the DD entry");
      next_is_dd = !next_is_dd;
    } else if (transition_pending) {
      // Back in DD after the last mutual defection: one cooperative DD update.
      q(kDD, Action::C) = (1.0 - a) * q(kDD, Action::C) + a * (m.r_cc() + g * q(kCC, Action::C));
      transition_pending = false;
      phase3_start = t;
      cc_c_start = q(kCC, Action::C);
    } else {
      q(kCC, Action::C) = c_star + std::pow(rho, static_cast<double>(t - phase3_start)) * (cc_c_start - c_star);
    }
    o.q.push_back(q);
    o.phase.push_back(active);
  }
  return o;
}

RateTable rate_scaling(const std::vector<double>& alphas, const RunConfig& base) {
  RateTable table;
  const double d_star = base.payoff.r_dd() / (1.0 - base.gamma);
  table.alpha_t1_limit =
      std::log((base.q_init(kDD, Action::D) - d_star) / (base.q_init(kDD, Action::C) - d_star)) / (1.0 - base.gamma);
  for (double alpha : alphas) {
    RunConfig cfg = base;
    cfg.alpha = alpha;
    cfg.epsilon = 0.0;
    cfg.record = RecordLevel::summary;
    cfg.n_iter = std::max<std::uint64_t>(base.n_iter, static_cast<std::uint64_t>(std::ceil(60.0 / alpha)));
    const TrajectoryRecord rec = run(cfg);
    RateRow row;
    row.alpha = alpha;
    row.t1 = rec.t1;
    row.t2 = rec.t2;
    row.t1_pred = phase1_hitting_time(cfg.q_init, cfg.payoff, cfg.gamma, alpha);
    if (rec.t1) row.alpha_t1 = alpha * static_cast<double>(*rec.t1);
    if (rec.t2) row.alpha_t2 = alpha * static_cast<double>(*rec.t2);
    table.rows.push_back(row);
  }
  return table;
}

EventProbability event_probability_exact(double epsilon, int k, int T) {
  if (!(epsilon >= 0.0 && epsilon <= 0.5)) throw std::domain_error("epsilon must lie in [0, 1/2]");
  if (k < 0 || T < 0 || k > T) throw std::domain_error("need 0 <= k <= T");
  if (T > 60) throw std::domain_error("T must not exceed 60");
  const long double e = epsilon;
  const long double stay = (1.0L - e) * (1.0L - e);
  const long double leave = 2.0L * e - e * e;
  EventProbability p;
  long double binom = 1.0L;
  for (int i = 0; i <= k; ++i) {
    if (i > 0) binom = binom * static_cast<long double>(T - i + 1) / static_cast<long double>(i);
    p.exact += binom * std::pow(stay, static_cast<long double>(T - i)) * std::pow(leave, static_cast<long double>(i));
  }
  p.bound = 1.0L - std::pow(2.0L, static_cast<long double>(T)) * std::pow(2.0L * e, static_cast<long double>(k + 1));
  return p;
}

namespace {

cpp_rational rational_pow(const cpp_rational& x, int n) {
  cpp_rational r = 1;
  for (int i = 0; i < n; ++i) r *= x;
  return r;
}

struct RationalEvent {
  cpp_rational exact, bound;
};

RationalEvent rational_event(const cpp_rational& e, int k, int T) {
  const cpp_rational stay = (1 - e) * (1 - e);
  const cpp_rational leave = 2 * e - e * e;
  RationalEvent out;
  cpp_rational binom = 1;
  for (int i = 0; i <= k; ++i) {
    if (i > 0) binom = binom * (T - i + 1) / i;
    out.exact += binom * rational_pow(stay, T - i) * rational_pow(leave, i);
  }
  out.bound = 1 - rational_pow(cpp_rational(2), T) * rational_pow(2 * e, k + 1);
  return out;
}

}  // namespace

ExactEventComparison event_probability_rational(unsigned num, unsigned den, int k, int T) {
  if (den == 0 || 2 * static_cast<unsigned long long>(num) > den) throw std::domain_error("epsilon must lie in [0, 1/2]");
  if (k < 0 || T < 0 || k > T) throw std::domain_error("need 0 <= k <= T");
  const RationalEvent ev = rational_event(cpp_rational(num, den), k, T);
  ExactEventComparison out;
  out.exact_ge_bound = ev.exact >= ev.bound;
  out.exact = static_cast<double>(ev.exact);
  out.bound = static_cast<double>(ev.bound);
  return out;
}

EventGridReport event_grid_check(unsigned num, unsigned den, int t_max) {
  const cpp_rational e(num, den);
  EventGridReport rep;
  std::vector<std::vector<cpp_rational>> exact(t_max + 1);
  for (int T = 0; T <= t_max; ++T) {
    for (int k = 0; k <= T; ++k) {
      const RationalEvent ev = rational_event(e, k, T);
      ++rep.cells;
      if (ev.exact < ev.bound) ++rep.bound_violations;
      if (k > 0 && ev.exact < exact[T][k - 1]) ++rep.monotone_violations;
      if (T > 0 && k <= T - 1 && ev.exact > exact[T - 1][k]) ++rep.monotone_violations;
      exact[T].push_back(ev.exact);
    }
  }
  return rep;
}

nlohmann::json to_json(const BoundCheck& c) {
  return {{"name", c.name}, {"applicable", c.applicable}, {"holds", c.holds},
          {"lhs", c.lhs},   {"rhs", c.rhs},               {"margin", c.margin}, {"context", c.context}};
}

std::uint64_t exploration_count(const TrajectoryRecord& rec, std::uint64_t from, std::uint64_t to) {
  std::uint64_t n = 0;
  to = std::min<std::uint64_t>(to, rec.steps.size());
  for (std::uint64_t t = from + 1; t <= to; ++t) {
    const StepLog& s = rec.steps[t - 1];
    if (s.explored1 || s.explored2) ++n;
  }
  return n;
}

std::optional<double> phase1_crossing_bound(const QTable& q0, const PayoffMatrix& m, double gamma, double alpha,
                                            int k) {
  const double d_star = m.r_dd() / (1.0 - gamma);
  const double w = step_width(m, gamma, alpha);
  const double num = q0(kDD, Action::C) - d_star - 4.0 * k * w;
  const double den = q0(kDD, Action::D) - d_star;
  if (!(num > 0.0 && den > 0.0)) return std::nullopt;
  return 2.0 * k + (std::log(num) - std::log(den)) / std::log(1.0 - alpha + gamma * alpha);
}

std::vector<BoundCheck> check_phase1_bounds(const TrajectoryRecord& rec, int k, std::uint64_t T) {
  require_full(rec);
  if (k < 0) throw std::invalid_argument("k must be nonnegative");
  if (T > rec.steps.size()) throw std::invalid_argument("T exceeds the recorded trajectory");
  const RunConfig& cfg = rec.config;
  const PayoffMatrix& m = cfg.payoff;
  const double w = step_width(m, cfg.gamma, cfg.alpha);
  const double d_star = m.r_dd() / (1.0 - cfg.gamma);
  const double rho = 1.0 - cfg.alpha * (1.0 - cfg.gamma);
  const QTable& q0 = q_at(rec, 0);
  const std::uint64_t kappa = exploration_count(rec, 0, T);
  const bool on_event = kappa <= static_cast<std::uint64_t>(k);

  // Last round of phase 1 (inclusive) within [0, T].
  std::uint64_t phase1_end = T;
  for (std::uint64_t t = 1; t <= T; ++t) {
    if (rec.steps[t - 1].policy_bits != 0) {
      phase1_end = t;
      break;
    }
  }

  std::vector<BoundCheck> out;
  {
    BoundCheck c = make_check("phase1_step_bound", rec);
    for (std::uint64_t t = 1; t <= T; ++t) c.lhs = std::max(c.lhs, rec.steps[t - 1].max_abs_dq);
    c.rhs = w;
    c.holds = c.lhs <= c.rhs + kRoundoff;
    c.margin = c.rhs - c.lhs;
    out.push_back(c);
  }
  const std::string off_event = "kappa=" + std::to_string(kappa) + " > k=" + std::to_string(k);
  {
    BoundCheck c = make_check("phase1_nongreedy_drift", rec);
    c.rhs = 2.0 * k * w;
    if (!on_event) {
      out.push_back(not_applicable(c, off_event));
    } else {
      for (std::uint64_t t = 0; t <= phase1_end; ++t)
        for (State s : kStates)
          for (Action a : kActions)
            if (!(s == kDD && a == Action::D)) c.lhs = std::max(c.lhs, std::abs(q_at(rec, t)(s, a) - q0(s, a)));
      c.holds = c.lhs <= c.rhs + kRoundoff;
      c.margin = c.rhs - c.lhs;
      out.push_back(c);
    }
  }
  {
    BoundCheck c = make_check("phase1_defect_value_envelope", rec);
    c.rhs = 2.0 * k * w;
    if (!on_event) {
      out.push_back(not_applicable(c, off_event));
    } else {
      c.lhs = -std::numeric_limits<double>::infinity();
      const double dev0 = q0(kDD, Action::D) - d_star;
      for (std::uint64_t t = 0; t <= phase1_end; ++t) {
        const double n = t > 2u * static_cast<std::uint64_t>(k) ? static_cast<double>(t - 2u * k) : 0.0;
        const double excess = q_at(rec, t)(kDD, Action::D) - d_star - std::pow(rho, n) * dev0;
        c.lhs = std::max(c.lhs, excess);
      }
      c.holds = c.lhs <= c.rhs + kRoundoff;
      c.margin = c.rhs - c.lhs;
      out.push_back(c);
    }
  }
  {
    BoundCheck c = make_check("phase1_defect_stays_greedy", rec);
    double dq = std::numeric_limits<double>::infinity();
    for (State s : {kCC, kCD, kDC}) dq = std::min(dq, q0(s, Action::D) - q0(s, Action::C));
    const double k_max = (1.0 - cfg.gamma) * dq / (2.0 * cfg.alpha * m.delta_r());
    if (!on_event) {
      out.push_back(not_applicable(c, off_event));
    } else if (!(k < k_max)) {
      out.push_back(not_applicable(c, "k=" + std::to_string(k) + " >= " + std::to_string(k_max)));
    } else {
      c.lhs = std::numeric_limits<double>::infinity();
      for (std::uint64_t t = 0; t <= phase1_end; ++t)
        for (State s : {kCC, kCD, kDC})
          c.lhs = std::min(c.lhs, q_at(rec, t)(s, Action::D) - q_at(rec, t)(s, Action::C));
      c.rhs = 0.0;
      c.holds = c.lhs > c.rhs;
      c.margin = c.lhs - c.rhs;
      out.push_back(c);
    }
  }
  {
    BoundCheck c = make_check("phase1_crossing_by_T", rec);
    const auto t_min = phase1_crossing_bound(q0, m, cfg.gamma, cfg.alpha, k);
    if (!on_event) {
      out.push_back(not_applicable(c, off_event));
    } else if (!t_min || !(static_cast<double>(T) > *t_min)) {
      out.push_back(not_applicable(c, "T below the crossing bound"));
    } else {
      c.lhs = q_at(rec, T)(kDD, Action::D);
      c.rhs = q_at(rec, T)(kDD, Action::C);
      c.holds = c.lhs < c.rhs;
      c.margin = c.rhs - c.lhs;
      out.push_back(c);
    }
  }
  return out;
}

EnvelopeCoefficients envelope_coefficients(double alpha, double gamma, double u0, double v0) {
  const EigenReport rep = phase2_eigen(alpha, gamma);
  const double d1 = rep.p_inv[0][0] * u0 + rep.p_inv[0][1] * v0;
  const double d2 = rep.p_inv[1][0] * u0 + rep.p_inv[1][1] * v0;
  EnvelopeCoefficients e;
  e.c1 = d1 * rep.p[0][0];
  e.c2 = d2 * rep.p[0][1];
  e.lambda1 = rep.lambda_plus;
  e.lambda2 = rep.lambda_minus;
  return e;
}

namespace {

struct Window {
  std::uint64_t start = 0, end = 0;
  std::uint64_t kappa = 0;
};

std::optional<Window> lose_shift_window(const TrajectoryRecord& rec) {
  if (!rec.t1) return std::nullopt;
  Window w;
  w.start = *rec.t1;
  w.end = rec.t2 ? *rec.t2 : rec.steps.size();
  w.kappa = exploration_count(rec, w.start, w.end);
  return w;
}

}  // namespace

std::vector<BoundCheck> check_phase2_bounds(const TrajectoryRecord& rec, int k) {
  require_full(rec);
  if (k < 0) throw std::invalid_argument("k must be nonnegative");
  const RunConfig& cfg = rec.config;
  const PayoffMatrix& m = cfg.payoff;
  const double g = cfg.gamma;
  const double w = step_width(m, g, cfg.alpha);
  const double u_star = (m.r_dd() + g * m.r_cc()) / (1.0 - g * g);
  const double v_star = (m.r_cc() + g * m.r_dd()) / (1.0 - g * g);
  const std::vector<std::string> names = {"phase2_step_bound", "phase2_nongreedy_drift",
                                          "phase2_eigen_envelope", "phase2_defect_stays_greedy",
                                          "phase2_no_direct_jump"};
  std::vector<BoundCheck> out;
  const auto win = lose_shift_window(rec);
  if (!win) {
    for (const auto& n : names) out.push_back(not_applicable(make_check(n, rec), "no lose-shift phase"));
    return out;
  }
  const bool on_event = win->kappa <= static_cast<std::uint64_t>(k);
  const std::string off_event = "kappa=" + std::to_string(win->kappa) + " > k=" + std::to_string(k);
  const QTable& q1 = q_at(rec, win->start);

  {
    BoundCheck c = make_check(names[0], rec);
    for (std::uint64_t t = win->start + 1; t <= win->end; ++t) c.lhs = std::max(c.lhs, rec.steps[t - 1].max_abs_dq);
    c.rhs = w;
    c.holds = c.lhs <= c.rhs + kRoundoff;
    c.margin = c.rhs - c.lhs;
    out.push_back(c);
  }
  {
    BoundCheck c = make_check(names[1], rec);
    c.rhs = 2.0 * k * w;
    if (!on_event) {
      out.push_back(not_applicable(c, off_event));
    } else {
      for (std::uint64_t t = win->start; t <= win->end; ++t)
        for (State s : kStates)
          for (Action a : kActions) {
            if ((s == kDD && a == Action::C) || (s == kCC && a == Action::D)) continue;
            c.lhs = std::max(c.lhs, std::abs(q_at(rec, t)(s, a) - q1(s, a)));
          }
      c.holds = c.lhs <= c.rhs + kRoundoff;
      c.margin = c.rhs - c.lhs;
      out.push_back(c);
    }
  }
  {
    BoundCheck c = make_check(names[2], rec);
    c.rhs = 2.0 * k * w;
    if (!on_event) {
      out.push_back(not_applicable(c, off_event));
    } else {
      std::optional<std::uint64_t> ref;
      for (std::uint64_t t = win->start + 1; t <= win->end && !ref; ++t)
        if (q_at(rec, t)(kDD, Action::C) != q_at(rec, t - 1)(kDD, Action::C)) ref = t;
      if (!ref) {
        out.push_back(not_applicable(c, "no cooperative DD update in the window"));
      } else {
        const QTable& qr = q_at(rec, *ref);
        const EnvelopeCoefficients env =
            envelope_coefficients(cfg.alpha, g, qr(kCC, Action::D) - u_star, -(qr(kDD, Action::C) - v_star));
        c.lhs = -std::numeric_limits<double>::infinity();
        int j = 0;
        for (std::uint64_t t = *ref + 1; t <= win->end; ++t) {
          if (q_at(rec, t)(kCC, Action::D) == q_at(rec, t - 1)(kCC, Action::D)) continue;
          ++j;
          const double n = static_cast<double>(j - k);
          const double envelope = env.c1 * std::pow(env.lambda1, n) + env.c2 * std::pow(env.lambda2, n);
          c.lhs = std::max(c.lhs, q_at(rec, t)(kCC, Action::D) - u_star - envelope);
        }
        if (j == 0) c.lhs = 0.0;
        // Floating rounding of the eigen-decomposition at k = 0.
        c.holds = c.lhs <= c.rhs + 1e-10;
        c.margin = c.rhs - c.lhs;
        out.push_back(c);
      }
    }
  }
  {
    BoundCheck c = make_check(names[3], rec);
    const double dq = std::min(q1(kCD, Action::D) - q1(kCD, Action::C), q1(kDC, Action::D) - q1(kDC, Action::C));
    const double k_max = (1.0 - g) * dq / (2.0 * cfg.alpha * m.delta_r());
    if (!on_event) {
      out.push_back(not_applicable(c, off_event));
    } else if (!(k < k_max)) {
      out.push_back(not_applicable(c, "k=" + std::to_string(k) + " >= " + std::to_string(k_max)));
    } else {
      c.lhs = std::numeric_limits<double>::infinity();
      for (std::uint64_t t = win->start; t <= win->end; ++t)
        for (State s : {kCD, kDC}) c.lhs = std::min(c.lhs, q_at(rec, t)(s, Action::D) - q_at(rec, t)(s, Action::C));
      c.rhs = 0.0;
      c.holds = c.lhs > c.rhs;
      c.margin = c.lhs - c.rhs;
      out.push_back(c);
    }
  }
  {
    BoundCheck c = make_check(names[4], rec);
    c.rhs = k * w;
    const double cc_gap = q1(kCC, Action::D) - q1(kCC, Action::C);
    if (!on_event) {
      out.push_back(not_applicable(c, off_event));
    } else if (!(cc_gap >= 4.0 * k * w)) {
      out.push_back(not_applicable(c, "CC gap at t1 below 4k w"));
    } else {
      c.lhs = std::numeric_limits<double>::infinity();
      for (std::uint64_t t = win->start; t <= win->end; ++t) {
        const QTable& q = q_at(rec, t);
        c.lhs = std::min(c.lhs, q(kDD, Action::C) - q(kDD, Action::D) + q(kCC, Action::D) - q(kCC, Action::C));
      }
      c.holds = c.lhs >= c.rhs;
      c.margin = c.lhs - c.rhs;
      out.push_back(c);
    }
  }
  return out;
}

BoundCheck check_lose_shift_window(const TrajectoryRecord& rec, std::optional<int> k) {
  require_full(rec);
  BoundCheck c = make_check("lose_shift_window_stays", rec);
  const auto win = lose_shift_window(rec);
  if (!win) {
    c.context += " (no lose-shift phase, holds vacuously)";
    return c;
  }
  if (k && win->kappa > static_cast<std::uint64_t>(*k))
    return not_applicable(c, "kappa=" + std::to_string(win->kappa) + " > k=" + std::to_string(*k));
  const PayoffMatrix& m = rec.config.payoff;
  const double g = rec.config.gamma;
  const double u_star = (m.r_dd() + g * m.r_cc()) / (1.0 - g * g);
  const QTable& q1 = q_at(rec, win->start);
  const double cc_c = q1(kCC, Action::C);
  if (!(u_star < cc_c && cc_c <= m.r_cc() / (1.0 - g))) return not_applicable(c, "premise u* < Q[CC][C] fails");

  c.lhs = std::numeric_limits<double>::infinity();
  for (std::uint64_t t = win->start; t <= win->end; ++t) {
    const QTable& q = q_at(rec, t);
    if (q(kCC, Action::D) > cc_c) c.lhs = std::min(c.lhs, q(kDD, Action::C) - q(kDD, Action::D));
  }
  if (std::isinf(c.lhs)) {
    c.lhs = 0.0;
    c.context += " (no qualifying rounds)";
  } else {
    c.holds = c.lhs > 0.0;
    c.margin = c.lhs;
  }
  return c;
}

ConvergenceResult convergence_monte_carlo(const std::vector<double>& alphas, const std::vector<double>& epsilons,
                                    const RunConfig& base, std::uint64_t n_runs, double delta, unsigned jobs) {
  if (n_runs < 30) throw std::invalid_argument("n_runs must be at least 30");
  if (alphas.empty() || epsilons.empty()) throw std::invalid_argument("grid must be nonempty");
  ConvergenceResult res;
  for (double alpha : alphas) {
    RunConfig cfg = base;
    cfg.alpha = alpha;
    cfg.epsilon = 0.0;
    cfg.record = RecordLevel::summary;
    cfg.n_iter = static_cast<std::uint64_t>(std::ceil(200.0 / alpha));
    const TrajectoryRecord rec = run(cfg);
    if (!rec.t2) throw std::runtime_error("greedy run did not reach Pavlov; cannot calibrate the horizon");
    res.c = std::max(res.c, 2.0 * alpha * static_cast<double>(*rec.t2));
  }
  for (double alpha : alphas) {
    for (double eps : epsilons) {
      ConvergenceCell cell;
      cell.alpha = alpha;
      cell.epsilon = eps;
      cell.horizon = static_cast<std::uint64_t>(std::ceil(res.c / alpha));
      RunConfig cfg = base;
      cfg.alpha = alpha;
      cfg.epsilon = eps;
      cfg.n_iter = cell.horizon;
      cell.estimate = cooperation_probability(cfg, n_runs, jobs);
      res.cells.push_back(std::move(cell));
    }
  }
  // Cells are alpha-major; check both directions of the grid.
  res.monotone_tolerance = 0.1;
  res.monotone = true;
  const std::size_t ne = epsilons.size();
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    for (std::size_t j = 0; j < ne; ++j) {
      const double p = res.cells[i * ne + j].estimate.estimate;
      if (j + 1 < ne && epsilons[j + 1] > epsilons[j] &&
          res.cells[i * ne + j + 1].estimate.estimate > p + res.monotone_tolerance)
        res.monotone = false;
      if (i + 1 < alphas.size() && alphas[i + 1] > alphas[i] &&
          res.cells[(i + 1) * ne + j].estimate.estimate > p + res.monotone_tolerance)
        res.monotone = false;
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < res.cells.size(); ++i) {
    const auto& a = res.cells[i];
    const auto& b = res.cells[best];
    if (a.alpha + a.epsilon < b.alpha + b.epsilon) best = i;
  }
  res.smallest_cell_meets_delta = res.cells[best].estimate.estimate >= 1.0 - delta;
  return res;
}

}  // namespace ipdq
