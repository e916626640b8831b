#include <algorithm>
#include <cfloat>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "ipdq/engine.hpp"
#include "ipdq/equilibria.hpp"

using namespace ipdq;

namespace {

RunConfig preset_config(double epsilon = 0.0, std::uint64_t n_iter = 2000) {
  RunConfig cfg;
  cfg.epsilon = epsilon;
  cfg.n_iter = n_iter;
  return cfg;
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("defaults") {
  const RunConfig cfg;
  CHECK(cfg.gamma == 0.6);
  CHECK(cfg.alpha == 0.1);
  CHECK(*cfg.payoff.g() == 1.8);
  CHECK(cfg.s0 == kDD);
  CHECK(cfg.update_mode == UpdateMode::p1_only);
  CHECK(cfg.effective_stride() == 1);
  RunConfig big = cfg;
  big.n_iter = 20000;
  CHECK(big.effective_stride() == 10);
}

TEST_CASE("one greedy step from DD under the preset") {
  RunConfig cfg = preset_config();
  QTable q = optimistic_default_table();
  std::pair<Action, Action> prev{Action::D, Action::D};
  RandomStream rng(0);
  const StepLog log = step(q, prev, cfg, rng);
  CHECK(log.a1 == Action::D);
  CHECK(log.a2 == Action::D);
  CHECK(log.r1 == 2.0);
  // 6.5 + 0.1 (2 + 0.6 * 6.5 - 6.5)
  CHECK(q(kDD, Action::D) == doctest::Approx(6.44).epsilon(1e-14));
  CHECK(log.max_abs_dq == doctest::Approx(0.06).epsilon(1e-12));
  QTable expect = optimistic_default_table();
  expect(kDD, Action::D) = q(kDD, Action::D);
  CHECK(q == expect);
}

TEST_CASE("alpha 0 leaves the table unchanged") {
  RunConfig cfg = preset_config(0.3);
  cfg.alpha = 0.0;
  QTable q = optimistic_default_table();
  std::pair<Action, Action> prev{Action::C, Action::D};
  RandomStream rng(9);
  for (int i = 0; i < 200; ++i) step(q, prev, cfg, rng);
  CHECK(q == optimistic_default_table());
}

TEST_CASE("phase-1 contraction toward r_dd/(1-gamma)") {
  RunConfig cfg = preset_config(0.0, 9);
  const TrajectoryRecord rec = run(cfg);
  for (std::size_t t = 1; t < rec.snapshots.size(); ++t) {
    const double prev = rec.snapshots[t - 1].q(kDD, Action::D) - 5.0;
    const double cur = rec.snapshots[t].q(kDD, Action::D) - 5.0;
    CHECK(cur == doctest::Approx(0.96 * prev).epsilon(1e-12));
  }
}

TEST_CASE("greedy preset run reaches Pavlov through lose-shift") {
  const TrajectoryRecord rec = run(preset_config());
  CHECK(rec.initial_policy.kind() == PolicyKind::AlwaysDefect);
  CHECK(rec.final_policy.kind() == PolicyKind::Pavlov);
  REQUIRE(rec.t1);
  REQUIRE(rec.t2);
  CHECK(*rec.t1 == 10);
  CHECK(*rec.t1 < *rec.t2);
  CHECK(rec.oscillations == 0);
  CHECK(rec.final_mode.kind() == PolicyKind::Pavlov);
  CHECK(rec.steps.size() == 2000);
  CHECK(rec.snapshots.size() == 2001);
  // The profile right after t1 is lose-shift.
  CHECK(PolicyProfile::from_bits(rec.steps[*rec.t1 - 1].policy_bits).kind() == PolicyKind::LoseShift);
}

TEST_CASE("the Pavlov fixed point is absorbing under greedy play") {
  RunConfig cfg = with_preset(preset_config(), "pavlov-fixed-point");
  const QTable q0 = cfg.q_init;
  const TrajectoryRecord rec = run(cfg);
  CHECK(rec.final_policy.kind() == PolicyKind::Pavlov);
  REQUIRE(rec.t2);
  CHECK(*rec.t2 == 0);
  CHECK(rec.final_q.max_abs_diff(q0) < 1e-12);
}

TEST_CASE("symmetric greedy play stays on the diagonal and both modes agree") {
  RunConfig a = preset_config();
  RunConfig b = a;
  b.update_mode = UpdateMode::both_perspectives;
  const TrajectoryRecord ra = run(a);
  const TrajectoryRecord rb = run(b);
  for (const StepLog& s : ra.steps) CHECK(s.a1 == s.a2);
  REQUIRE(ra.snapshots.size() == rb.snapshots.size());
  for (std::size_t i = 0; i < ra.snapshots.size(); ++i) CHECK(ra.snapshots[i].q == rb.snapshots[i].q);
}

TEST_CASE("both_perspectives writes player 2's entry from the pre-step table") {
  RunConfig cfg = preset_config();
  cfg.update_mode = UpdateMode::both_perspectives;
  QTable q = optimistic_default_table();
  std::pair<Action, Action> prev{Action::C, Action::D};  // player 1 in CD, player 2 in DC
  RandomStream rng(0);
  const QTable pre = q;
  const StepLog log = step(q, prev, cfg, rng);
  CHECK(log.a1 == Action::D);
  CHECK(log.a2 == Action::D);
  const double expect = pre(kCD, Action::D) + 0.1 * (2.0 + 0.6 * pre.max_value(kDD) - pre(kCD, Action::D));
  CHECK(q(kCD, Action::D) == doctest::Approx(expect).epsilon(1e-15));
  CHECK(q(kDC, Action::D) == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("identical configs give identical records") {
  RunConfig cfg = preset_config(0.1, 3000);
  cfg.seed = 77;
  const TrajectoryRecord a = run(cfg);
  const TrajectoryRecord b = run(cfg);
  CHECK(trajectory_csv(a) == trajectory_csv(b));
  CHECK(run_summary_json(a).dump() == run_summary_json(b).dump());
  cfg.seed = 78;
  CHECK(trajectory_csv(run(cfg)) != trajectory_csv(a));
}

TEST_CASE("per-step change never exceeds D_r alpha/(1-gamma)") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RunConfig cfg = preset_config(0.1, 2000);
    cfg.seed = seed;
    const TrajectoryRecord rec = run(cfg);
    double worst = 0.0;
    for (const StepLog& s : rec.steps) worst = std::max(worst, s.max_abs_dq);
    CHECK(worst <= 0.5 + 1e-12);
  }
}

TEST_CASE("Q-values stay in the reward band") {
  const PayoffMatrix m = payoff_from_g(1.8);
  RunConfig cfg = preset_config(0.2, 5000);
  cfg.seed = 3;
  const auto init = cfg.q_init.flat();
  const double lo = std::min(m.r_min() / 0.4, *std::min_element(init.begin(), init.end()));
  const double hi = std::max(m.r_max() / 0.4, *std::max_element(init.begin(), init.end()));
  const TrajectoryRecord rec = run(cfg);
  for (const Snapshot& s : rec.snapshots)
    for (double v : s.q.flat()) {
      CHECK(v >= lo - 1e-12);
      CHECK(v <= hi + 1e-12);
    }
}

TEST_CASE("n_iter 0 returns the classified initial table") {
  const TrajectoryRecord rec = run(preset_config(0.0, 0));
  CHECK(rec.final_policy.kind() == PolicyKind::AlwaysDefect);
  CHECK(rec.snapshots.size() == 1);
  const std::string csv = trajectory_csv(rec);
  CHECK(count_lines(csv) == 2);
  CHECK(csv.rfind("t,s,a1,a2,r1,r2,q_dd_c,q_dd_d,q_cc_c,q_cc_d,q_cd_c,q_cd_d,q_dc_c,q_dc_d,policy\n", 0) == 0);
  CHECK(csv.find("\n0,DD,,,,,6,6.5,7,7.5,4,5,4,5,always_defect\n") != std::string::npos);
}

TEST_CASE("non-finite updates raise a numerical failure") {
  RunConfig cfg = preset_config();
  cfg.alpha = 1.0;
  QTable q;
  for (State s : kStates) {
    q(s, Action::C) = DBL_MAX;
    q(s, Action::D) = DBL_MAX;
  }
  q(kDD, Action::C) = -DBL_MAX;
  q(kDD, Action::D) = -DBL_MAX;
  // From CD both defect; the target 2 - 0.6 DBL_MAX minus DBL_MAX overflows.
  std::pair<Action, Action> prev{Action::C, Action::D};
  RandomStream rng(0);
  CHECK_THROWS_AS(step(q, prev, cfg, rng), NumericalFailure);
}

TEST_CASE("config validation") {
  RunConfig cfg;
  cfg.gamma = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::domain_error);
  cfg = RunConfig{};
  cfg.epsilon = 0.6;
  CHECK_THROWS_AS(run(cfg), std::domain_error);
  cfg = RunConfig{};
  cfg.alpha = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::domain_error);
}

TEST_CASE("config JSON round trip") {
  RunConfig cfg;
  cfg.epsilon = 0.05;
  cfg.seed = 12345678901234ULL;
  cfg.update_mode = UpdateMode::both_perspectives;
  const RunConfig back = config_from_json(config_to_json(cfg));
  CHECK(back.epsilon == 0.05);
  CHECK(back.seed == cfg.seed);
  CHECK(back.update_mode == UpdateMode::both_perspectives);
  CHECK(back.q_init == cfg.q_init);
  CHECK(config_to_json(back) == config_to_json(cfg));

  const RunConfig pav = config_from_json(nlohmann::json{{"q_init", "pavlov-fixed-point"}, {"gamma", 0.6}});
  CHECK(pav.q_init(kCC, Action::C) == doctest::Approx(9.0).epsilon(1e-12));
  CHECK_THROWS(config_from_json(nlohmann::json{{"q_init", "no-such-preset"}}));
  CHECK_THROWS(config_from_json(nlohmann::json{{"payoff", {{"r_cc", 3.0}, {"r_cd", 0.0}, {"r_dc", 2.0}, {"r_dd", 1.0}}}}));
}

TEST_CASE("cooperation probability") {
  RunConfig cfg = preset_config();
  const CooperationEstimate greedy = cooperation_probability(cfg, 20, 4);
  CHECK(greedy.estimate == 1.0);
  CHECK(greedy.ci95 == 0.0);

  cfg.epsilon = 0.01;
  cfg.seed = 2024;
  const CooperationEstimate est = cooperation_probability(cfg, 100, 0);
  CHECK(est.estimate >= 0.9);
  CHECK(est.ci95 == doctest::Approx(1.96 * std::sqrt(est.estimate * (1 - est.estimate) / 100)));

  const CooperationEstimate serial = cooperation_probability(cfg, 100, 1);
  CHECK(serial.estimate == est.estimate);
  CHECK(serial.policy_counts == est.policy_counts);
  CHECK(serial.finals == est.finals);
}
