#include "ipdq/engine.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <thread>

#include "ipdq/equilibria.hpp"
#include "ipdq/io.hpp"
#include "ipdq/serialize.hpp"

namespace ipdq {

std::string to_string(UpdateMode mode) {
  return mode == UpdateMode::p1_only ? "p1_only" : "both_perspectives";
}

UpdateMode update_mode_from_string(const std::string& name) {
  if (name == "p1_only") return UpdateMode::p1_only;
  if (name == "both_perspectives") return UpdateMode::both_perspectives;
  throw std::invalid_argument("unknown update_mode '" + name + "'");
}

QTable optimistic_default_table() {
  QTable q;
  q(kDD, Action::C) = 6.0;
  q(kDD, Action::D) = 6.5;
  q(kCC, Action::C) = 7.0;
  q(kCC, Action::D) = 7.5;
  q(kCD, Action::C) = 4.0;
  q(kCD, Action::D) = 5.0;
  q(kDC, Action::C) = 4.0;
  q(kDC, Action::D) = 5.0;
  return q;
}

QTable preset_table(const std::string& name, const PayoffMatrix& m, double gamma) {
  if (name == "optimistic-default") return optimistic_default_table();
  if (name == "pavlov-fixed-point") return solve_fixed_point(PolicyProfile::pavlov(), m, gamma).q_star;
  if (name == "defect-fixed-point") return defect_closed_form(m, gamma, 0.0);
  throw std::invalid_argument("unknown Q-table preset '" + name + "'");
}

void RunConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::domain_error(what); };
  if (!(gamma > 0.0 && gamma < 1.0)) fail("gamma must lie in (0, 1) (got " + fmt17(gamma) + ")");
  // alpha = 0 is admitted as the frozen-table degenerate case.
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha must lie in (0, 1] (got " + fmt17(alpha) + ")");
  if (!(epsilon >= 0.0 && epsilon <= 0.5)) fail("epsilon must lie in [0, 1/2] (got " + fmt17(epsilon) + ")");
  if (!q_init.all_finite()) fail("q_init must be finite");
}

std::uint64_t RunConfig::effective_stride() const {
  if (snapshot_stride > 0) return snapshot_stride;
  return n_iter <= 10000 ? 1 : 10;
}

RunConfig with_preset(RunConfig cfg, const std::string& preset) {
  cfg.q_init_name = preset;
  cfg.q_init = preset_table(preset, cfg.payoff, cfg.gamma);
  return cfg;
}

nlohmann::json config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["payoff"] = payoff_to_json(cfg.payoff);
  j["gamma"] = cfg.gamma;
  j["alpha"] = cfg.alpha;
  j["epsilon"] = cfg.epsilon;
  j["n_iter"] = cfg.n_iter;
  j["s0"] = to_string(cfg.s0);
  if (cfg.q_init_name.empty())
    j["q_init"] = qtable_to_json(cfg.q_init);
  else
    j["q_init"] = cfg.q_init_name;
  j["seed"] = cfg.seed;
  j["update_mode"] = to_string(cfg.update_mode);
  j["snapshot_stride"] = cfg.snapshot_stride;
  return j;
}

RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("run config must be a JSON object");
  RunConfig cfg;
  if (j.contains("payoff")) cfg.payoff = payoff_from_json(j.at("payoff"));
  if (j.contains("g")) cfg.payoff = PayoffMatrix::from_g(j.at("g").get<double>());
  if (j.contains("gamma")) cfg.gamma = j.at("gamma").get<double>();
  if (j.contains("alpha")) cfg.alpha = j.at("alpha").get<double>();
  if (j.contains("epsilon")) cfg.epsilon = j.at("epsilon").get<double>();
  if (j.contains("n_iter")) cfg.n_iter = j.at("n_iter").get<std::uint64_t>();
  if (j.contains("s0")) cfg.s0 = state_from_string(j.at("s0").get<std::string>());
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("update_mode")) cfg.update_mode = update_mode_from_string(j.at("update_mode").get<std::string>());
  if (j.contains("snapshot_stride")) cfg.snapshot_stride = j.at("snapshot_stride").get<std::uint64_t>();
  const nlohmann::json q = j.value("q_init", nlohmann::json("optimistic-default"));
  if (q.is_string()) {
    cfg = with_preset(cfg, q.get<std::string>());
  } else {
    cfg.q_init_name.clear();
    cfg.q_init = qtable_from_json(q);
  }
  cfg.validate();
  return cfg;
}

namespace {

double q_learning_target(const QTable& q, const PayoffMatrix& m, double gamma, Action own, Action opp) {
  return m.reward(own, opp) + gamma * q.max_value(next_state(own, opp));
}

}  // namespace

StepLog step(QTable& q, std::pair<Action, Action>& prev, const RunConfig& cfg, RandomStream& rng) {
  StepLog log;
  log.s = State{prev.first, prev.second};
  const ActionDraw d1 = epsilon_greedy_draw(q, log.s, cfg.epsilon, rng);
  const ActionDraw d2 = epsilon_greedy_draw(q, swap(log.s), cfg.epsilon, rng);
  log.a1 = d1.action;
  log.a2 = d2.action;
  log.explored1 = d1.explored;
  log.explored2 = d2.explored;
  log.r1 = cfg.payoff.reward(log.a1, log.a2);
  log.r2 = cfg.payoff.reward(log.a2, log.a1);

  const double old1 = q(log.s, log.a1);
  const double new1 = old1 + cfg.alpha * (q_learning_target(q, cfg.payoff, cfg.gamma, log.a1, log.a2) - old1);
  log.max_abs_dq = std::abs(new1 - old1);
  if (cfg.update_mode == UpdateMode::both_perspectives) {
    const State s2 = swap(log.s);
    const double old2 = q(s2, log.a2);
    const double new2 = old2 + cfg.alpha * (q_learning_target(q, cfg.payoff, cfg.gamma, log.a2, log.a1) - old2);
    q(s2, log.a2) = new2;
    log.max_abs_dq = std::max(log.max_abs_dq, std::abs(new2 - old2));
  }
  q(log.s, log.a1) = new1;

  if (!std::isfinite(new1) || !q.all_finite())
    throw NumericalFailure("non-finite Q-value after update (alpha=" + fmt17(cfg.alpha) + ", gamma=" +
                           fmt17(cfg.gamma) + ")");
  prev = {log.a1, log.a2};
  return log;
}

TrajectoryRecord run(const RunConfig& cfg) {
  cfg.validate();
  TrajectoryRecord rec;
  rec.config = cfg;
  QTable q = cfg.q_init;
  std::pair<Action, Action> prev{cfg.s0.own_prev, cfg.s0.opp_prev};
  RandomStream rng(cfg.seed, cfg.run_index);
  const std::uint64_t stride = cfg.effective_stride();
  const bool full = cfg.record == RecordLevel::full;
  if (full) rec.steps.reserve(cfg.n_iter);

  rec.initial_policy = classify(q, cfg.epsilon);
  rec.snapshots.push_back({0, q});
  PolicyKind kind = rec.initial_policy.kind();
  const bool from_defect = kind == PolicyKind::AlwaysDefect;
  if (kind == PolicyKind::Pavlov) rec.t2 = 0;

  constexpr std::size_t kWindow = 100;
  std::array<std::uint8_t, kWindow> recent{};
  std::size_t filled = 0;

  for (std::uint64_t t = 1; t <= cfg.n_iter; ++t) {
    StepLog log = step(q, prev, cfg, rng);
    log.t = t;
    const PolicyProfile p = classify(q, cfg.epsilon);
    log.policy_bits = p.bits();
    const PolicyKind k = p.kind();
    if (from_defect && !rec.t1 && !rec.t2 && k == PolicyKind::LoseShift) rec.t1 = t;
    if (!rec.t2 && k == PolicyKind::Pavlov) rec.t2 = t;
    if (kind == PolicyKind::LoseShift && k == PolicyKind::AlwaysDefect) ++rec.oscillations;
    if (log.explored1 || log.explored2) ++rec.explored_rounds;
    kind = k;
    recent[(t - 1) % kWindow] = log.policy_bits;
    filled = std::min(filled + 1, kWindow);
    if (full) rec.steps.push_back(log);
    if (full ? (t % stride == 0 || t == cfg.n_iter) : t == cfg.n_iter) rec.snapshots.push_back({t, q});
  }

  rec.final_q = q;
  rec.final_policy = classify(q, cfg.epsilon);
  if (filled == 0) {
    rec.final_mode = rec.final_policy;
  } else {
    std::array<int, 16> count{};
    std::uint8_t best = 0;
    int best_count = -1;
    // Oldest to newest so that ties go to the most recent profile.
    for (std::size_t i = 0; i < filled; ++i) {
      const std::size_t pos = filled < kWindow ? i : (cfg.n_iter + i) % kWindow;
      const std::uint8_t b = recent[pos];
      if (++count[b] >= best_count) {
        best_count = count[b];
        best = b;
      }
    }
    rec.final_mode = PolicyProfile::from_bits(best, cfg.epsilon);
  }
  return rec;
}

unsigned resolve_jobs(unsigned jobs) {
  if (jobs > 0) return jobs;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

CooperationEstimate cooperation_probability(const RunConfig& cfg, std::uint64_t n_runs, unsigned jobs) {
  if (n_runs == 0) throw std::invalid_argument("n_runs must be positive");
  cfg.validate();
  std::vector<PolicyProfile> finals(n_runs);
  std::vector<std::uint8_t> oscillated(n_runs, 0);
  std::vector<std::optional<std::uint64_t>> t2s(n_runs);
  parallel_for(n_runs, jobs, [&](std::uint64_t i) {
    RunConfig c = cfg;
    c.run_index = i;
    c.record = RecordLevel::summary;
    const TrajectoryRecord rec = run(c);
    finals[i] = rec.final_policy;
    oscillated[i] = rec.oscillated() ? 1 : 0;
    t2s[i] = rec.t2;
  });

  CooperationEstimate out;
  out.n_runs = n_runs;
  std::uint64_t coop = 0, osc = 0;
  for (std::uint64_t i = 0; i < n_runs; ++i) {
    if (is_cooperative(finals[i].kind())) ++coop;
    osc += oscillated[i];
    ++out.policy_counts[finals[i].name()];
  }
  const double n = static_cast<double>(n_runs);
  out.estimate = static_cast<double>(coop) / n;
  out.ci95 = 1.96 * std::sqrt(out.estimate * (1.0 - out.estimate) / n);
  out.oscillation_frac = static_cast<double>(osc) / n;
  out.finals = std::move(finals);
  out.t2s = std::move(t2s);
  return out;
}

std::string trajectory_csv(const TrajectoryRecord& rec) {
  std::string out = "t,s,a1,a2,r1,r2,q_dd_c,q_dd_d,q_cc_c,q_cc_d,q_cd_c,q_cd_d,q_dc_c,q_dc_d,policy\n";
  for (const Snapshot& snap : rec.snapshots) {
    out += std::to_string(snap.t);
    if (snap.t == 0) {
      out += ',' + to_string(rec.config.s0) + ",,,,";
    } else if (snap.t <= rec.steps.size()) {
      const StepLog& log = rec.steps[snap.t - 1];
      out += ',' + to_string(log.s) + ',' + to_char(log.a1) + ',' + to_char(log.a2) + ',' + fmt17(log.r1) + ',' +
             fmt17(log.r2);
    } else {
      out += ",,,,,";
    }
    for (double v : snap.q.flat()) out += ',' + fmt17(v);
    out += ',' + classify(snap.q).name() + '\n';
  }
  return out;
}

nlohmann::json run_summary_json(const TrajectoryRecord& rec) {
  nlohmann::json j;
  j["final_policy"] = rec.final_policy.name();
  j["final_mode_last_100"] = rec.final_mode.name();
  j["t1"] = rec.t1 ? nlohmann::json(*rec.t1) : nlohmann::json(nullptr);
  j["t2"] = rec.t2 ? nlohmann::json(*rec.t2) : nlohmann::json(nullptr);
  j["oscillations"] = rec.oscillations;
  j["explored_rounds"] = rec.explored_rounds;
  j["seed"] = rec.config.seed;
  j["config"] = config_to_json(rec.config);
  j["final_q"] = qtable_to_json(rec.final_q);
  return j;
}

}  // namespace ipdq
