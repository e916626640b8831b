#include "ipdq/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ipdq/equilibria.hpp"
#include "ipdq/io.hpp"
#include "ipdq/serialize.hpp"

namespace ipdq {

namespace {

std::vector<double> doubles(const nlohmann::json& j, const char* key, std::vector<double> fallback) {
  if (!j.contains(key)) return fallback;
  auto v = j.at(key).get<std::vector<double>>();
  if (v.empty()) throw std::invalid_argument(std::string("grid '") + key + "' must be nonempty");
  return v;
}

std::string opt_field(const std::optional<std::uint64_t>& v) { return v ? std::to_string(*v) : std::string(); }

nlohmann::json opt_json(const std::optional<std::uint64_t>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

const std::vector<std::string> kPolicyColumns = {"always_defect", "lose_shift", "grim_trigger", "pavlov"};

std::uint64_t count_of(const CooperationEstimate& e, const std::string& name) {
  const auto it = e.policy_counts.find(name);
  return it == e.policy_counts.end() ? 0 : it->second;
}

}  // namespace

SweepSpec sweep_spec_from_json(const nlohmann::json& j) {
  SweepSpec spec;
  spec.base = config_from_json(j.contains("config") ? j.at("config") : j);
  spec.alphas = doubles(j, "alphas", spec.alphas);
  spec.epsilons = doubles(j, "epsilons", spec.epsilons);
  spec.gs = j.contains("gs") ? j.at("gs").get<std::vector<double>>() : std::vector<double>{};
  if (j.contains("n_runs")) spec.n_runs = j.at("n_runs").get<std::uint64_t>();
  if (spec.n_runs == 0) throw std::invalid_argument("n_runs must be positive");
  return spec;
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec, unsigned jobs) {
  if (spec.alphas.empty() || spec.epsilons.empty()) throw std::invalid_argument("sweep grids must be nonempty");
  std::vector<std::optional<double>> gs;
  if (spec.gs.empty()) gs.push_back(std::nullopt);
  for (double g : spec.gs) gs.push_back(g);

  std::vector<SweepRow> rows;
  for (const auto& g : gs) {
    RunConfig cfg = spec.base;
    if (g) {
      cfg.payoff = PayoffMatrix::from_g(*g);
      // Named presets are rebuilt for the new payoff; an explicit table is kept.
      if (!cfg.q_init_name.empty()) cfg = with_preset(cfg, cfg.q_init_name);
    }
    for (double alpha : spec.alphas) {
      for (double eps : spec.epsilons) {
        cfg.alpha = alpha;
        cfg.epsilon = eps;
        SweepRow row;
        row.alpha = alpha;
        row.epsilon = eps;
        row.g = cfg.payoff.g().value_or(std::numeric_limits<double>::quiet_NaN());
        row.gamma = cfg.gamma;
        row.n_iter = cfg.n_iter;
        row.estimate = cooperation_probability(cfg, spec.n_runs, jobs);
        double sum = 0.0;
        std::uint64_t n = 0;
        for (const auto& t2 : row.estimate.t2s)
          if (t2) sum += static_cast<double>(*t2), ++n;
        if (n > 0) row.mean_t2 = sum / static_cast<double>(n);
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "alpha,epsilon,g,gamma,n_runs,n_iters,coop_prob,ci95,oscillation_frac";
  for (const auto& p : kPolicyColumns) out += ",n_" + p;
  out += ",n_other,mean_t2\n";
  for (const SweepRow& r : rows) {
    out += fmt17(r.alpha) + ',' + fmt17(r.epsilon) + ',' + (std::isnan(r.g) ? std::string() : fmt17(r.g)) + ',' +
           fmt17(r.gamma) + ',' + std::to_string(r.estimate.n_runs) + ',' + std::to_string(r.n_iter) + ',' +
           fmt17(r.estimate.estimate) + ',' + fmt17(r.estimate.ci95) + ',' + fmt17(r.estimate.oscillation_frac);
    std::uint64_t named = 0;
    for (const auto& p : kPolicyColumns) {
      const std::uint64_t c = count_of(r.estimate, p);
      named += c;
      out += ',' + std::to_string(c);
    }
    out += ',' + std::to_string(r.estimate.n_runs - named) + ',' + (r.mean_t2 ? fmt17(*r.mean_t2) : std::string()) + '\n';
  }
  return out;
}

bool PhaseSuiteReport::passes(double min_fraction) const {
  if (accepted == 0) return false;
  return std::all_of(checks.begin(), checks.end(),
                     [&](const CheckTally& c) { return c.pass_fraction() >= min_fraction; });
}

nlohmann::json to_json(const PhaseSuiteReport& r) {
  nlohmann::json checks = nlohmann::json::array();
  for (const CheckTally& c : r.checks)
    checks.push_back({{"name", c.name},
                      {"n_runs", c.applicable},
                      {"passed", c.passed},
                      {"pass_fraction", c.pass_fraction()},
                      {"failing_seeds", c.failing},
                      {"min_margin", c.applicable ? nlohmann::json(c.min_margin) : nlohmann::json()}});
  return {{"name", r.name},         {"alpha", r.alpha},       {"epsilon", r.epsilon},
          {"k", r.k},               {"horizon", r.horizon},   {"accepted_runs", r.accepted},
          {"examined_runs", r.examined}, {"excluded_off_event", r.excluded()}, {"checks", checks}};
}

namespace {

struct Candidate {
  bool on_event = false;
  std::vector<BoundCheck> checks;
};

// Evaluates candidates in parallel chunks and keeps the first n_required on the
// event in index order, so the selection does not depend on jobs.
template <class Eval>
PhaseSuiteReport collect(PhaseSuiteReport rep, std::uint64_t n_required, unsigned jobs, std::uint64_t max_candidates,
                         Eval&& eval) {
  const std::uint64_t chunk = 1024;
  std::uint64_t next = 0;
  while (rep.accepted < n_required && next < max_candidates) {
    const std::uint64_t n = std::min(chunk, max_candidates - next);
    std::vector<Candidate> batch(n);
    parallel_for(n, jobs, [&](std::uint64_t i) { batch[i] = eval(next + i); });
    for (std::uint64_t i = 0; i < n && rep.accepted < n_required; ++i) {
      ++rep.examined;
      if (!batch[i].on_event) continue;
      ++rep.accepted;
      for (const BoundCheck& c : batch[i].checks) {
        auto it = std::find_if(rep.checks.begin(), rep.checks.end(), [&](const CheckTally& t) { return t.name == c.name; });
        if (it == rep.checks.end()) {
          rep.checks.push_back({c.name, 0, 0, std::numeric_limits<double>::infinity(), {}});
          it = rep.checks.end() - 1;
        }
        if (!c.applicable) continue;
        ++it->applicable;
        it->min_margin = std::min(it->min_margin, c.margin);
        if (c.holds) ++it->passed;
        else it->failing.push_back(c.context);
      }
    }
    next += n;
  }
  return rep;
}

RunConfig phase_config(RunConfig base, double alpha, double epsilon, std::uint64_t n_iter) {
  base.alpha = alpha;
  base.epsilon = epsilon;
  base.n_iter = n_iter;
  base.record = RecordLevel::full;
  base.snapshot_stride = 1;
  base.validate();
  return base;
}

}  // namespace

PhaseSuiteReport phase1_suite(RunConfig base, double alpha, double epsilon, int k, std::uint64_t T,
                              std::uint64_t n_required, unsigned jobs, std::uint64_t max_candidates) {
  const RunConfig cfg = phase_config(std::move(base), alpha, epsilon, T);
  PhaseSuiteReport rep;
  rep.name = "phase1";
  rep.alpha = alpha;
  rep.epsilon = epsilon;
  rep.k = k;
  rep.horizon = T;
  return collect(rep, n_required, jobs, max_candidates, [&](std::uint64_t i) {
    RunConfig c = cfg;
    c.run_index = i;
    const TrajectoryRecord rec = run(c);
    Candidate out;
    out.on_event = exploration_count(rec, 0, T) <= static_cast<std::uint64_t>(k);
    if (out.on_event) out.checks = check_phase1_bounds(rec, k, T);
    return out;
  });
}

PhaseSuiteReport phase2_suite(RunConfig base, double alpha, double epsilon, int k, std::uint64_t n_required,
                              unsigned jobs, std::uint64_t max_candidates) {
  const std::uint64_t n_iter = std::max<std::uint64_t>(base.n_iter, static_cast<std::uint64_t>(std::ceil(20.0 / alpha)));
  const RunConfig cfg = phase_config(std::move(base), alpha, epsilon, n_iter);
  PhaseSuiteReport rep;
  rep.name = "phase2";
  rep.alpha = alpha;
  rep.epsilon = epsilon;
  rep.k = k;
  rep.horizon = n_iter;
  return collect(rep, n_required, jobs, max_candidates, [&](std::uint64_t i) {
    RunConfig c = cfg;
    c.run_index = i;
    const TrajectoryRecord rec = run(c);
    Candidate out;
    if (!rec.t1) return out;
    const std::uint64_t end = rec.t2 ? *rec.t2 : rec.steps.size();
    out.on_event = exploration_count(rec, *rec.t1, end) <= static_cast<std::uint64_t>(k);
    if (out.on_event) {
      out.checks = check_phase2_bounds(rec, k);
      out.checks.push_back(check_lose_shift_window(rec, k));
    }
    return out;
  });
}

StepBoundReport step_bound_suite(RunConfig base, std::uint64_t n_runs, unsigned jobs) {
  base.record = RecordLevel::full;
  base.validate();
  std::vector<double> worst(n_runs, 0.0);
  std::vector<std::uint64_t> bad(n_runs, 0), steps(n_runs, 0);
  StepBoundReport rep;
  rep.runs = n_runs;
  rep.bound = base.payoff.delta_r() * base.alpha / (1.0 - base.gamma);
  parallel_for(n_runs, jobs, [&](std::uint64_t i) {
    RunConfig c = base;
    c.run_index = i;
    const TrajectoryRecord rec = run(c);
    steps[i] = rec.steps.size();
    for (const StepLog& s : rec.steps) {
      worst[i] = std::max(worst[i], s.max_abs_dq);
      if (s.max_abs_dq > rep.bound) ++bad[i];
    }
  });
  for (std::uint64_t i = 0; i < n_runs; ++i) {
    rep.steps += steps[i];
    rep.violations += bad[i];
    rep.max_change = std::max(rep.max_change, worst[i]);
  }
  return rep;
}

namespace {

std::array<double, 4> qdiff(const QTable& q) {
  std::array<double, 4> d{};
  for (State s : kStates) d[index(s)] = q(s, Action::D) - q(s, Action::C);
  return d;
}

}  // namespace

std::string qdiff_csv(const TrajectoryRecord& rec) {
  std::string out = "t,diff_dd,diff_cc,diff_cd,diff_dc\n";
  for (const Snapshot& s : rec.snapshots) {
    out += std::to_string(s.t);
    for (double d : qdiff(s.q)) out += ',' + fmt17(d);
    out += '\n';
  }
  return out;
}

std::string qdiff_mean_std_csv(const std::vector<TrajectoryRecord>& recs) {
  if (recs.empty()) throw std::invalid_argument("no trajectories");
  const std::size_t n_snap = recs.front().snapshots.size();
  for (const auto& r : recs)
    if (r.snapshots.size() != n_snap) throw std::invalid_argument("trajectories have different snapshot grids");
  std::string out = "t";
  for (const char* s : {"dd", "cc", "cd", "dc"}) out += std::string(",mean_diff_") + s + ",std_diff_" + s;
  out += ",coop_frac\n";
  const double n = static_cast<double>(recs.size());
  for (std::size_t k = 0; k < n_snap; ++k) {
    std::array<double, 4> sum{}, sq{};
    double coop = 0.0;
    for (const auto& r : recs) {
      const auto d = qdiff(r.snapshots[k].q);
      for (std::size_t i = 0; i < 4; ++i) sum[i] += d[i];
      coop += is_cooperative(classify(r.snapshots[k].q).kind()) ? 1.0 : 0.0;
    }
    for (const auto& r : recs) {
      const auto d = qdiff(r.snapshots[k].q);
      for (std::size_t i = 0; i < 4; ++i) sq[i] += (d[i] - sum[i] / n) * (d[i] - sum[i] / n);
    }
    out += std::to_string(recs.front().snapshots[k].t);
    for (std::size_t i = 0; i < 4; ++i)
      out += ',' + fmt17(sum[i] / n) + ',' + fmt17(recs.size() > 1 ? std::sqrt(sq[i] / (n - 1.0)) : 0.0);
    out += ',' + fmt17(coop / n) + '\n';
  }
  return out;
}

std::string rate_csv(const RateTable& table) {
  std::string out = "alpha,t1,t1_pred,t2,alpha_t1,alpha_t2\n";
  for (const RateRow& r : table.rows)
    out += fmt17(r.alpha) + ',' + opt_field(r.t1) + ',' + opt_field(r.t1_pred) + ',' + opt_field(r.t2) + ',' +
           fmt17(r.alpha_t1) + ',' + fmt17(r.alpha_t2) + '\n';
  return out;
}

nlohmann::json rate_json(const RateTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const RateRow& r : table.rows) {
    nlohmann::json row = {{"alpha", r.alpha}, {"alpha_t1", r.alpha_t1}, {"alpha_t2", r.alpha_t2}};
    row["t1"] = opt_json(r.t1);
    row["t1_pred"] = opt_json(r.t1_pred);
    row["t2"] = opt_json(r.t2);
    row["t1_matches_prediction"] = r.t1.has_value() && r.t1 == r.t1_pred;
    row["alpha_t1_rel_error"] = r.t1 ? nlohmann::json(std::abs(r.alpha_t1 / table.alpha_t1_limit - 1.0)) : nlohmann::json();
    rows.push_back(row);
  }
  return {{"alpha_t1_limit", table.alpha_t1_limit}, {"rows", rows}};
}

nlohmann::json fixedpoint_json(const PayoffMatrix& m, double gamma, double epsilon, double alpha) {
  nlohmann::json j;
  j["payoff"] = payoff_to_json(m);
  j["gamma"] = gamma;
  j["epsilon"] = epsilon;
  nlohmann::json profiles = nlohmann::json::array();
  for (unsigned b = 0; b < 16; ++b)
    profiles.push_back(fixed_point_report(PolicyProfile::from_bits(static_cast<std::uint8_t>(b), epsilon), m, gamma));
  j["profiles"] = profiles;
  j["always_defect_closed_form"] = qtable_to_json(defect_closed_form(m, gamma, epsilon));
  const PavlovClosedForm pav = pavlov_closed_form(m, gamma, epsilon);
  j["pavlov_closed_form"] = {{"q", qtable_to_json(pav.q)},
                             {"gap_cd", pav.gap_cd},
                             {"gap_dd", pav.gap_dd},
                             {"exists", pav.exists},
                             {"epsilon_threshold", pavlov_epsilon_threshold(m, gamma)}};
  if (pav.gap_dd_offset_form) j["pavlov_closed_form"]["gap_dd_offset_form"] = *pav.gap_dd_offset_form;
  j["spe"] = {{"always_defect", is_subgame_perfect(PolicyProfile::always_defect(), m, gamma)},
              {"pavlov", is_subgame_perfect(PolicyProfile::pavlov(), m, gamma)},
              {"pavlov_gamma_threshold", m.pavlov_gamma_threshold()}};
  const EigenReport e = phase2_eigen(alpha, gamma);
  j["phase2_eigen"] = {{"alpha", alpha},
                       {"lambda_plus", e.lambda_plus},
                       {"lambda_minus", e.lambda_minus},
                       {"matrix", e.matrix},
                       {"p", e.p},
                       {"p_inv", e.p_inv}};
  return j;
}

std::string fixedpoint_csv(const PayoffMatrix& m, double gamma, double epsilon) {
  std::string out = "policy,bits,is_consistent,residual,q_dd_c,q_dd_d,q_cc_c,q_cc_d,q_cd_c,q_cd_d,q_dc_c,q_dc_d\n";
  for (unsigned b = 0; b < 16; ++b) {
    const PolicyProfile p = PolicyProfile::from_bits(static_cast<std::uint8_t>(b), epsilon);
    const BellmanSolution s = solve_fixed_point(p, m, gamma);
    out += p.name() + ',' + std::to_string(b) + ',' + (s.is_consistent ? "true" : "false") + ',' + fmt17(s.residual);
    for (double v : s.q_star.flat()) out += ',' + fmt17(v);
    out += '\n';
  }
  return out;
}

namespace {

struct VerifyBuilder {
  nlohmann::json checks = nlohmann::json::array();
  bool ok = true;

  void add(const std::string& name, bool mandatory, bool passed, nlohmann::json detail) {
    checks.push_back({{"name", name}, {"mandatory", mandatory}, {"passed", passed}, {"detail", std::move(detail)}});
    if (mandatory && !passed) ok = false;
  }
  void skip(const std::string& name, const std::string& reason) {
    checks.push_back({{"name", name}, {"mandatory", false}, {"passed", nullptr}, {"skipped", reason}});
  }
};

double max_abs(const std::array<std::array<double, 2>, 2>& a) {
  double m = 0.0;
  for (const auto& r : a)
    for (double x : r) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

VerifyReport verify_suite(const RunConfig& base, const VerifyOptions& opt, unsigned jobs) {
  base.validate();
  const PayoffMatrix& m = base.payoff;
  const double gamma = base.gamma;
  VerifyBuilder b;

  // Bellman solver on all profiles at 0 and the configured epsilon.
  {
    double worst = 0.0;
    nlohmann::json consistent = nlohmann::json::array();
    for (double eps : {0.0, base.epsilon})
      for (unsigned bits = 0; bits < 16; ++bits) {
        const BellmanSolution s = solve_fixed_point(PolicyProfile::from_bits(static_cast<std::uint8_t>(bits), eps), m, gamma);
        worst = std::max(worst, s.residual);
        if (eps == 0.0 && s.is_consistent) consistent.push_back(s.policy.name());
      }
    b.add("fixed_point_residuals", true, worst <= 1e-12, {{"max_residual", worst}, {"tolerance", 1e-12}});
    b.add("consistent_profiles_at_zero_epsilon", false, true, {{"profiles", consistent}});
  }
  // Closed forms against the linear solve.
  {
    double worst = 0.0;
    for (double eps : {0.0, base.epsilon}) {
      worst = std::max(worst, defect_closed_form(m, gamma, eps).max_abs_diff(
                                  solve_fixed_point(PolicyProfile::always_defect(eps), m, gamma).q_star));
      worst = std::max(worst, pavlov_closed_form(m, gamma, eps).q.max_abs_diff(
                                  solve_fixed_point(PolicyProfile::pavlov(eps), m, gamma).q_star));
    }
    b.add("closed_forms_match_solver", true, worst <= 1e-10, {{"max_abs_diff", worst}, {"tolerance", 1e-10}});
  }
  {
    const PavlovClosedForm pav = pavlov_closed_form(m, gamma, base.epsilon);
    b.add("pavlov_existence", false, true,
          {{"epsilon", base.epsilon},
           {"exists", pav.exists},
           {"gap_cd", pav.gap_cd},
           {"gap_dd", pav.gap_dd},
           {"epsilon_threshold", pavlov_epsilon_threshold(m, gamma)}});
    b.add("subgame_perfection", false, true,
          {{"always_defect", is_subgame_perfect(PolicyProfile::always_defect(), m, gamma)},
           {"pavlov", is_subgame_perfect(PolicyProfile::pavlov(), m, gamma)},
           {"pavlov_gamma_threshold", m.pavlov_gamma_threshold()}});
  }
  {
    const EigenReport e = phase2_eigen(base.alpha > 0.0 ? base.alpha : 0.1, gamma);
    std::array<std::array<double, 2>, 2> err{};
    const std::array<double, 2> lam{e.lambda_plus, e.lambda_minus};
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        double v = 0.0;
        for (int k = 0; k < 2; ++k) v += e.p[i][k] * lam[k] * e.p_inv[k][j];
        err[i][j] = v - e.matrix[i][j];
      }
    const bool ordered = 0.0 < e.lambda_minus && e.lambda_minus < e.lambda_plus && e.lambda_plus < 1.0;
    b.add("phase2_eigendecomposition", true, ordered && max_abs(err) <= 1e-12,
          {{"lambda_plus", e.lambda_plus}, {"lambda_minus", e.lambda_minus}, {"reconstruction_error", max_abs(err)}});
  }
  {
    const EventGridReport total = [] {
      EventGridReport t;
      for (auto [num, den] : {std::pair{1u, 100u}, {1u, 20u}, {1u, 10u}, {1u, 4u}, {1u, 2u}}) {
        const EventGridReport r = event_grid_check(num, den, 30);
        t.cells += r.cells;
        t.bound_violations += r.bound_violations;
        t.monotone_violations += r.monotone_violations;
      }
      return t;
    }();
    b.add("event_probability_grid", true, total.bound_violations == 0 && total.monotone_violations == 0,
          {{"cells", total.cells},
           {"bound_violations", total.bound_violations},
           {"monotone_violations", total.monotone_violations}});
  }
  const InitialConditionReport init = check_initial_conditions(base.q_init, m, gamma);
  b.add("initial_conditions", false, true,
        {{"floor", init.floor_ok}, {"band", init.band_ok}, {"cap", init.cap_ok}, {"initial_always_defect", init.initial_policy_is_alld},
         {"margins", init.margins}});
  {
    // The bound relies on the initial conditions; otherwise it is reported only.
    RunConfig cfg = base;
    cfg.epsilon = 0.1;
    if (cfg.alpha == 0.0) cfg.alpha = 0.1;
    const StepBoundReport r = step_bound_suite(cfg, opt.step_runs, jobs);
    b.add("per_step_bound", init.all_ok(), r.violations == 0,
          {{"runs", r.runs}, {"steps", r.steps}, {"violations", r.violations}, {"bound", r.bound},
           {"max_change", r.max_change}, {"epsilon", cfg.epsilon}, {"alpha", cfg.alpha}});
  }
  if (!init.all_ok()) {
    for (const char* n : {"greedy_three_phase_run", "phase1_rate", "phase1_conditional", "phase2_conditional"})
      b.skip(n, "initial table does not satisfy the initial conditions");
  } else {
    {
      RunConfig cfg = base;
      cfg.epsilon = 0.0;
      if (cfg.alpha == 0.0) cfg.alpha = 0.1;
      cfg.record = RecordLevel::full;
      cfg.snapshot_stride = 1;
      const PhaseOracle o = deterministic_oracle(cfg.q_init, cfg);
      cfg.n_iter = std::max<std::uint64_t>(cfg.n_iter, o.t2_pred ? *o.t2_pred + 2000 : 0);
      const TrajectoryRecord rec = run(cfg);
      const PhaseOracle full = deterministic_oracle(cfg.q_init, cfg);
      double worst = 0.0;
      for (std::size_t t = 0; t < rec.snapshots.size(); ++t)
        worst = std::max(worst, rec.snapshots[t].q.max_abs_diff(full.q[t]));
      bool stays = rec.t2.has_value();
      if (rec.t2)
        for (std::uint64_t t = *rec.t2; t < rec.steps.size(); ++t)
          stays = stays && rec.steps[t].policy_bits == PolicyProfile::pavlov().bits();
      const bool pass = rec.t1 && rec.t2 && *rec.t1 < *rec.t2 && *rec.t1 == full.t1_pred && rec.t2 == full.t2_pred &&
                        stays && worst <= 1e-10;
      b.add("greedy_three_phase_run", true, pass,
            {{"t1", opt_json(rec.t1)}, {"t1_pred", full.t1_pred}, {"t2", opt_json(rec.t2)},
             {"t2_pred", opt_json(full.t2_pred)}, {"stays_pavlov", stays}, {"max_oracle_diff", worst}});
    }
    {
      const RateTable table = rate_scaling({0.2, 0.1, 0.05, 0.02}, base);
      bool pass = true;
      for (const RateRow& r : table.rows) pass = pass && r.t1 && r.t1 == r.t1_pred;
      b.add("phase1_rate", true, pass, rate_json(table));
    }
    {
      // Largest k with the item-e premise and the shortest horizon admitted by item f.
      double gap = std::numeric_limits<double>::infinity();
      for (State s : {kCC, kCD, kDC}) gap = std::min(gap, base.q_init(s, Action::D) - base.q_init(s, Action::C));
      const double k_limit = (1.0 - gamma) * gap / (2.0 * opt.phase_alpha * m.delta_r());
      const int k = std::max(0, static_cast<int>(std::ceil(k_limit)) - 1);
      const auto t_min = phase1_crossing_bound(base.q_init, m, gamma, opt.phase_alpha, k);
      // Horizon: the crossing bound rounded up to the next hundred.
      const std::uint64_t T = t_min ? (static_cast<std::uint64_t>(*t_min) / 100 + 1) * 100 : 600;
      const PhaseSuiteReport r4 =
          phase1_suite(base, opt.phase_alpha, opt.phase_epsilon, k, T, opt.phase_runs, jobs);
      b.add("phase1_conditional", true, r4.accepted == opt.phase_runs && r4.passes(opt.min_pass_fraction), to_json(r4));
      const PhaseSuiteReport r5 = phase2_suite(base, opt.phase_alpha, opt.phase_epsilon, 2, opt.phase_runs, jobs);
      b.add("phase2_conditional", true, r5.accepted == opt.phase_runs && r5.passes(opt.min_pass_fraction),
            to_json(r5));
    }
  }

  VerifyReport rep;
  rep.ok = b.ok;
  rep.json = {{"ok", b.ok}, {"config", config_to_json(base)}, {"checks", b.checks}};
  return rep;
}

}  // namespace ipdq
