#include <cmath>

#include "doctest.h"
#include "ipdq/equilibria.hpp"
#include "ipdq/theory.hpp"

using namespace ipdq;

namespace {

const PayoffMatrix kM = payoff_from_g(1.8);

RunConfig greedy_config(std::uint64_t n_iter = 2000) {
  RunConfig cfg;
  cfg.n_iter = n_iter;
  return cfg;
}

const BoundCheck& find(const std::vector<BoundCheck>& v, const std::string& name) {
  for (const auto& c : v)
    if (c.name == name) return c;
  FAIL("missing check " << name);
  return v.front();
}

}  // namespace

TEST_CASE("initial-condition checker on the preset") {
  const InitialConditionReport r = check_initial_conditions(optimistic_default_table(), kM, 0.6);
  CHECK(r.all_ok());
  CHECK(r.band_middle == doctest::Approx(6.5).epsilon(1e-13));
  CHECK(r.band_middle_identity == doctest::Approx(r.band_middle).epsilon(1e-13));
  CHECK(r.cap == doctest::Approx(9.0).epsilon(1e-13));
  CHECK(r.margins.at("floor") == doctest::Approx(1.0));
  CHECK(r.margins.at("band_left") == doctest::Approx(0.5));
  CHECK(r.margins.at("band_right") == doctest::Approx(0.5));
  CHECK(r.margins.at("cap") == doctest::Approx(2.0));
}

TEST_CASE("initial-condition violations") {
  QTable q = optimistic_default_table();
  q(kDD, Action::C) = 4.9;
  CHECK_FALSE(check_initial_conditions(q, kM, 0.6).floor_ok);
  q = optimistic_default_table();
  q(kCC, Action::C) = 9.5;
  const InitialConditionReport r = check_initial_conditions(q, kM, 0.6);
  CHECK_FALSE(r.cap_ok);
  CHECK(r.margins.at("cap") == doctest::Approx(-0.5));
  q = optimistic_default_table();
  q(kCC, Action::C) = 6.4;
  CHECK_FALSE(check_initial_conditions(q, kM, 0.6).band_ok);
}

TEST_CASE("the band middle quantity equals the lose-shift value on a grid") {
  for (double g : {1.1, 1.5, 1.8, 1.99})
    for (double gamma : {0.05, 0.3, 0.6, 0.95}) {
      const InitialConditionReport r = check_initial_conditions(QTable{}, payoff_from_g(g), gamma);
      CHECK(r.band_middle == doctest::Approx(r.band_middle_identity).epsilon(1e-12));
    }
}

TEST_CASE("phase oracle on the preset") {
  const RunConfig cfg = greedy_config();
  const PhaseOracle o = deterministic_oracle(cfg.q_init, cfg);
  CHECK(o.t1_pred == 10);
  CHECK(o.u_star == doctest::Approx(6.5).epsilon(1e-13));
  CHECK(o.v_star == doctest::Approx(7.5).epsilon(1e-13));
  CHECK(o.q_cc_c_limit == doctest::Approx(9.0).epsilon(1e-13));
  REQUIRE(o.t2_pred);
  CHECK(std::abs(o.q.back()(kCC, Action::C) - 9.0) < 1e-6);

  const TrajectoryRecord rec = run(cfg);
  CHECK(*rec.t1 == o.t1_pred);
  CHECK(*rec.t2 == *o.t2_pred);
  double worst = 0.0;
  for (std::size_t t = 0; t < rec.snapshots.size(); ++t) worst = std::max(worst, rec.snapshots[t].q.max_abs_diff(o.q[t]));
  CHECK(worst <= 1e-10);
}

TEST_CASE("phase oracle preconditions") {
  RunConfig cfg = greedy_config();
  cfg.epsilon = 0.1;
  CHECK_THROWS_AS(deterministic_oracle(cfg.q_init, cfg), PreconditionError);
  QTable q = optimistic_default_table();
  q(kDD, Action::C) = 4.9;
  CHECK_THROWS_AS(deterministic_oracle(q, greedy_config()), PreconditionError);
}

TEST_CASE("phase oracle matches the engine for random admissible tables") {
  RandomStream gen(2718);
  int tested = 0;
  const double lo = 5.0, mid = 6.5, hi = 9.0;
  while (tested < 50) {
    QTable q;
    q(kDD, Action::C) = lo + (mid - lo) * gen.uniform();
    q(kCC, Action::C) = mid + (hi - mid) * gen.uniform();
    q(kDD, Action::D) = q(kDD, Action::C) + (q(kCC, Action::C) - q(kDD, Action::C)) * gen.uniform();
    q(kCC, Action::D) = q(kCC, Action::C) + 2.0 * gen.uniform();
    for (State s : {kCD, kDC}) {
      q(s, Action::D) = 4.5 + 4.0 * gen.uniform();
      q(s, Action::C) = q(s, Action::D) - 2.0 * gen.uniform();
    }
    if (!check_initial_conditions(q, kM, 0.6).all_ok()) continue;
    ++tested;
    RunConfig cfg = greedy_config(3000);
    cfg.q_init = q;
    cfg.q_init_name.clear();
    const PhaseOracle o = deterministic_oracle(q, cfg);
    const TrajectoryRecord rec = run(cfg);
    REQUIRE(rec.t1);
    CHECK(*rec.t1 == o.t1_pred);
    CHECK(rec.t2 == o.t2_pred);
    double worst = 0.0;
    for (std::size_t t = 0; t < rec.snapshots.size(); ++t)
      worst = std::max(worst, rec.snapshots[t].q.max_abs_diff(o.q[t]));
    CHECK(worst <= 1e-10);
  }
}

TEST_CASE("phase-1 hitting time and rate scaling") {
  const QTable q0 = optimistic_default_table();
  const std::vector<double> alphas = {0.2, 0.1, 0.05, 0.02};
  const std::vector<std::uint64_t> expect = {5, 10, 21, 51};
  const RateTable table = rate_scaling(alphas, greedy_config());
  CHECK(table.alpha_t1_limit == doctest::Approx(std::log(1.5) / 0.4).epsilon(1e-12));
  CHECK(table.alpha_t1_limit == doctest::Approx(1.0137).epsilon(1e-4));
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    // Brute-force iteration of the contraction.
    double x = 6.5;
    std::uint64_t t = 0;
    while (!(x < 6.0)) {
      x = 5.0 + (1 - 0.4 * alphas[i]) * (x - 5.0);
      ++t;
    }
    CHECK(t == expect[i]);
    CHECK(*phase1_hitting_time(q0, kM, 0.6, alphas[i]) == expect[i]);
    const RateRow& row = table.rows[i];
    REQUIRE(row.t1);
    CHECK(*row.t1 == expect[i]);
    CHECK(*row.t1_pred == expect[i]);
    REQUIRE(row.t2);
    if (alphas[i] <= 0.05) CHECK(std::abs(row.alpha_t1 / table.alpha_t1_limit - 1.0) < 0.15);
  }
}

TEST_CASE("event probability") {
  const EventProbability p = event_probability_exact(0.1, 1, 2);
  CHECK(static_cast<double>(p.exact) == doctest::Approx(0.9639).epsilon(1e-12));
  CHECK(static_cast<double>(p.bound) == doctest::Approx(0.84).epsilon(1e-12));
  const EventProbability z = event_probability_exact(0.0, 3, 7);
  CHECK(z.exact == 1.0L);
  CHECK(z.bound == 1.0L);
  const EventProbability q = event_probability_exact(0.25, 0, 1);
  CHECK(static_cast<double>(q.exact) == doctest::Approx(0.5625).epsilon(1e-15));
  CHECK(static_cast<double>(q.bound) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK_THROWS_AS(event_probability_exact(0.1, 3, 2), std::domain_error);
  CHECK_THROWS_AS(event_probability_exact(0.1, 1, 61), std::domain_error);

  const ExactEventComparison r = event_probability_rational(1, 10, 1, 2);
  CHECK(r.exact_ge_bound);
  CHECK(r.exact == doctest::Approx(0.9639).epsilon(1e-15));
  const EventGridReport grid = event_grid_check(1, 4, 12);
  CHECK(grid.cells == 13 * 14 / 2);
  CHECK(grid.bound_violations == 0);
  CHECK(grid.monotone_violations == 0);
}

TEST_CASE("phase-1 checks on a greedy run") {
  RunConfig cfg = greedy_config(600);
  cfg.alpha = 0.01;
  const TrajectoryRecord rec = run(cfg);
  const auto checks = check_phase1_bounds(rec, 0, 600);
  CHECK(checks.size() == 5);
  for (const auto& c : checks) {
    CHECK_MESSAGE(c.applicable, c.name);
    CHECK_MESSAGE(c.holds, c.name << " lhs=" << c.lhs << " rhs=" << c.rhs);
  }
  const auto& b = find(checks, "phase1_step_bound");
  CHECK(b.rhs == doctest::Approx(0.05));
}

TEST_CASE("phase-1 per-step bound at alpha 0.1") {
  RunConfig cfg = greedy_config(1000);
  cfg.epsilon = 0.1;
  const auto checks = check_phase1_bounds(run(cfg), 0, 1000);
  const auto& b = find(checks, "phase1_step_bound");
  CHECK(b.rhs == doctest::Approx(0.5));
  CHECK(b.holds);
  CHECK_FALSE(find(checks, "phase1_nongreedy_drift").applicable);
}

TEST_CASE("phase-1 crossing bound") {
  const auto t = phase1_crossing_bound(optimistic_default_table(), kM, 0.6, 0.01, 4);
  REQUIRE(t);
  CHECK(*t > 510.0);
  CHECK(*t < 511.0);
  CHECK_FALSE(phase1_crossing_bound(optimistic_default_table(), kM, 0.6, 0.01, 6));
}

TEST_CASE("phase-2 envelope reduces to the eigen recursion at epsilon 0") {
  for (double alpha : {0.1, 0.01}) {
    RunConfig cfg = greedy_config(static_cast<std::uint64_t>(100 / alpha));
    cfg.alpha = alpha;
    const TrajectoryRecord rec = run(cfg);
    const auto checks = check_phase2_bounds(rec, 0);
    for (const auto& c : checks) {
      CHECK_MESSAGE(c.applicable, c.name);
      CHECK_MESSAGE(c.holds, c.name << " lhs=" << c.lhs << " rhs=" << c.rhs);
    }
    CHECK(std::abs(find(checks, "phase2_eigen_envelope").lhs) <= 1e-10);
  }
}

TEST_CASE("envelope coefficients agree with powers of the matrix") {
  const double alpha = 0.1, gamma = 0.6, u0 = 1.0, v0 = 1.479;
  const EnvelopeCoefficients env = envelope_coefficients(alpha, gamma, u0, v0);
  const EigenReport rep = phase2_eigen(alpha, gamma);
  double u = u0, v = v0;
  for (int t = 1; t <= 60; ++t) {
    const double nu = rep.matrix[0][0] * u + rep.matrix[0][1] * v;
    const double nv = rep.matrix[1][0] * u + rep.matrix[1][1] * v;
    u = nu;
    v = nv;
    CHECK(std::abs(u - (env.c1 * std::pow(env.lambda1, t) + env.c2 * std::pow(env.lambda2, t))) < 1e-12);
  }
  CHECK(env.c1 + env.c2 == doctest::Approx(u0).epsilon(1e-12));
}

TEST_CASE("lose-shift window check") {
  const TrajectoryRecord rec = run(greedy_config());
  const BoundCheck c = check_lose_shift_window(rec);
  CHECK(c.applicable);
  CHECK(c.holds);
  CHECK(c.lhs > 0.0);

  RunConfig bad = greedy_config();
  bad.q_init(kCC, Action::C) = 6.4;
  bad.q_init_name.clear();
  const BoundCheck nb = check_lose_shift_window(run(bad));
  CHECK_FALSE(nb.applicable);

  RunConfig frozen = greedy_config();
  frozen.alpha = 0.0;
  const BoundCheck fz = check_lose_shift_window(run(frozen));
  CHECK(fz.holds);
}

TEST_CASE("convergence harness at zero exploration") {
  RunConfig base;
  const ConvergenceResult r = convergence_monte_carlo({0.05, 0.1}, {0.0}, base, 30, 0.05, 2);
  CHECK(r.c > 0.0);
  REQUIRE(r.cells.size() == 2);
  for (const auto& cell : r.cells) {
    CHECK(cell.estimate.estimate == 1.0);
    CHECK(cell.horizon == static_cast<std::uint64_t>(std::ceil(r.c / cell.alpha)));
  }
  CHECK(r.monotone);
  CHECK(r.smallest_cell_meets_delta);
}
