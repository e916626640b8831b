#include <cmath>

#include "doctest.h"
#include "ipdq/equilibria.hpp"

using namespace ipdq;

namespace {

const PayoffMatrix kM = payoff_from_g(1.8);

// Independent oracle: iterate the policy-evaluation operator to convergence.
QTable iterate_bellman(const PolicyProfile& p, const PayoffMatrix& m, double gamma) {
  QTable q;
  for (int it = 0; it < 5000; ++it) {
    QTable next;
    for (State s : kStates)
      for (Action a : kActions) {
        double v = 0.0;
        for (Action b : kActions) {
          const double pb = p.at(swap(s)) == b ? 1.0 - p.epsilon : p.epsilon;
          const State n{a, b};
          v += pb * (m.reward(a, b) + gamma * q(n, p.at(n)));
        }
        next(s, a) = v;
      }
    q = next;
  }
  return q;
}

}  // namespace

TEST_CASE("always-defect fixed point") {
  const BellmanSolution sol = solve_fixed_point(PolicyProfile::always_defect(), kM, 0.6);
  for (State s : kStates) {
    CHECK(sol.q_star(s, Action::D) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(sol.q_star(s, Action::C) == doctest::Approx(4.8).epsilon(1e-12));
  }
  CHECK(sol.is_consistent);
  CHECK(sol.residual <= 1e-12);
}

TEST_CASE("Pavlov fixed point") {
  const BellmanSolution sol = solve_fixed_point(PolicyProfile::pavlov(), kM, 0.6);
  CHECK(std::abs(sol.q_star(kCC, Action::C) - 9.0) < 1e-10);
  CHECK(std::abs(sol.q_star(kDD, Action::C) - 9.0) < 1e-10);
  CHECK(std::abs(sol.q_star(kCD, Action::D) - 7.4) < 1e-10);
  CHECK(std::abs(sol.q_star(kDC, Action::D) - 7.4) < 1e-10);
  CHECK(std::abs(sol.q_star(kCC, Action::D) - 8.24) < 1e-10);
  CHECK(std::abs(sol.q_star(kDD, Action::D) - 8.24) < 1e-10);
  CHECK(std::abs(sol.q_star(kCD, Action::C) - 6.24) < 1e-10);
  CHECK(std::abs(sol.q_star(kDC, Action::C) - 6.24) < 1e-10);
  CHECK(sol.is_consistent);
}

TEST_CASE("consistency across all 16 profiles") {
  for (double eps : {0.0, 0.01, 0.05}) {
    for (unsigned b = 0; b < 16; ++b) {
      const PolicyProfile p = PolicyProfile::from_bits(static_cast<std::uint8_t>(b), eps);
      const BellmanSolution sol = solve_fixed_point(p, kM, 0.6);
      CHECK(sol.residual <= 1e-12);
      CHECK(sol.q_star.max_abs_diff(iterate_bellman(p, kM, 0.6)) < 1e-9);
      const PolicyKind k = p.kind();
      const bool table2 = k == PolicyKind::AlwaysDefect || k == PolicyKind::GrimTrigger || k == PolicyKind::Pavlov;
      if (eps == 0.0) CHECK_MESSAGE(sol.is_consistent == table2, p.name());
      if (k == PolicyKind::Pavlov) CHECK(sol.is_consistent == pavlov_closed_form(kM, 0.6, eps).exists);
    }
  }
  CHECK_FALSE(solve_fixed_point(PolicyProfile::lose_shift(), kM, 0.6).is_consistent);
  CHECK_FALSE(solve_fixed_point(PolicyProfile::tit_for_tat(), kM, 0.6).is_consistent);
}

TEST_CASE("Pavlov fixed-point symmetries") {
  for (double eps : {0.0, 0.05, 0.2}) {
    const QTable q = solve_fixed_point(PolicyProfile::pavlov(eps), kM, 0.6).q_star;
    CHECK(q(kCC, Action::C) == doctest::Approx(q(kDD, Action::C)).epsilon(1e-13));
    CHECK(q(kCC, Action::D) == doctest::Approx(q(kDD, Action::D)).epsilon(1e-13));
    CHECK(q(kCD, Action::C) == doctest::Approx(q(kDC, Action::C)).epsilon(1e-13));
    CHECK(q(kCD, Action::D) == doctest::Approx(q(kDC, Action::D)).epsilon(1e-13));
  }
}

TEST_CASE("always-defect closed form") {
  const QTable q0 = defect_closed_form(kM, 0.6, 0.0);
  CHECK(q0(kCD, Action::D) == doctest::Approx(5.0).epsilon(1e-14));
  CHECK(q0(kCD, Action::C) == doctest::Approx(4.8).epsilon(1e-14));
  const QTable q1 = defect_closed_form(kM, 0.6, 0.1);
  CHECK(q1(kDD, Action::D) == doctest::Approx((0.9 * 2 + 0.1 * 3.8) / 0.4).epsilon(1e-14));
  CHECK(q1(kDD, Action::D) == doctest::Approx(5.45).epsilon(1e-14));
  for (double g : {1.1, 1.5, 1.8, 1.95})
    for (double gamma : {0.1, 0.5, 0.9})
      for (double eps : {0.0, 0.1, 0.3, 0.49}) {
        const PayoffMatrix m = payoff_from_g(g);
        const QTable cf = defect_closed_form(m, gamma, eps);
        const BellmanSolution sol = solve_fixed_point(PolicyProfile::always_defect(eps), m, gamma);
        CHECK(cf.max_abs_diff(sol.q_star) <= 1e-12 * std::max(1.0, std::abs(cf(kDD, Action::D))));
        const double gap = (1 - eps) * (m.r_dd() - m.r_cd()) + eps * (m.r_dc() - m.r_cc());
        CHECK(cf(kDD, Action::D) - cf(kDD, Action::C) == doctest::Approx(gap).epsilon(1e-12));
        CHECK(gap > 0);
      }
}

TEST_CASE("Pavlov closed form") {
  const PavlovClosedForm p0 = pavlov_closed_form(kM, 0.6, 0.0);
  CHECK(p0.exists);
  CHECK(p0.q_cc_c == doctest::Approx(9.0).epsilon(1e-13));
  CHECK(p0.q_cd_d == doctest::Approx(7.4).epsilon(1e-13));
  CHECK(p0.gap_dd == doctest::Approx(9.0 - 8.24).epsilon(1e-12));
  CHECK(p0.q.max_abs_diff(solve_fixed_point(PolicyProfile::pavlov(), kM, 0.6).q_star) < 1e-12);

  // Both gaps stay positive at epsilon = 0.2; direct substitution:
  //   DD: 2*0.6*0.6*(0.8 - 0.36) - 0.2 = 0.1168, CD: 0.6*0.6*(1.6 - 0.72) + 0.2 = 0.5168.
  const PavlovClosedForm p2 = pavlov_closed_form(kM, 0.6, 0.2);
  CHECK(p2.gap_dd == doctest::Approx(0.1168).epsilon(1e-12));
  CHECK(p2.gap_cd == doctest::Approx(0.5168).epsilon(1e-12));
  CHECK(p2.exists);
  CHECK(solve_fixed_point(PolicyProfile::pavlov(0.2), kM, 0.6).is_consistent);
  REQUIRE(p2.gap_dd_offset_form);
  CHECK(*p2.gap_dd_offset_form - p2.gap_dd == doctest::Approx(2.0).epsilon(1e-12));

  for (double eps : {0.0, 0.05, 0.1, 0.2, 0.3, 0.45}) {
    const PavlovClosedForm cf = pavlov_closed_form(kM, 0.6, eps);
    const BellmanSolution sol = solve_fixed_point(PolicyProfile::pavlov(eps), kM, 0.6);
    CHECK(cf.q.max_abs_diff(sol.q_star) < 1e-12);
    CHECK(cf.exists == sol.is_consistent);
  }

  CHECK_FALSE(pavlov_closed_form(kM, 0.1, 0.0).exists);
}

TEST_CASE("Pavlov epsilon threshold") {
  const double eps_star = pavlov_epsilon_threshold(kM, 0.6);
  CHECK(eps_star == doctest::Approx(0.2553).epsilon(1e-3));
  CHECK(solve_fixed_point(PolicyProfile::pavlov(eps_star - 1e-6), kM, 0.6).is_consistent);
  CHECK_FALSE(solve_fixed_point(PolicyProfile::pavlov(eps_star + 1e-6), kM, 0.6).is_consistent);
  CHECK(pavlov_epsilon_threshold(kM, 0.1) == 0.0);
}

TEST_CASE("Pavlov existence flips at (r_dc - r_cc)/(r_cc - r_dd) in gamma") {
  const double threshold = kM.pavlov_gamma_threshold();
  CHECK(threshold == doctest::Approx(0.125).epsilon(1e-12));
  bool prev = false;
  for (int i = 1; i < 1000; ++i) {
    const double gamma = 0.001 * i;
    const bool e = pavlov_closed_form(kM, gamma, 0.0).exists;
    CHECK(e >= prev);
    if (e != prev) CHECK(std::abs(gamma - threshold) <= 0.001 + 1e-12);
    prev = e;
  }
}

TEST_CASE("subgame perfection") {
  for (int i = 1; i <= 19; ++i) CHECK(is_subgame_perfect(PolicyProfile::always_defect(), kM, 0.05 * i));
  CHECK(is_subgame_perfect(PolicyProfile::pavlov(), kM, 0.6));
  CHECK_FALSE(is_subgame_perfect(PolicyProfile::pavlov(), kM, 0.1));
  CHECK(is_subgame_perfect(PolicyProfile::pavlov(), kM, 0.125));
  CHECK(is_subgame_perfect(PolicyProfile::pavlov(), kM, kM.pavlov_gamma_threshold()));
  CHECK_FALSE(is_subgame_perfect(PolicyProfile::pavlov(), kM, 0.124));
  CHECK_FALSE(is_subgame_perfect(PolicyProfile::tit_for_tat(), kM, 0.6));
}

TEST_CASE("deterministic returns agree with the Markov solve") {
  for (unsigned a = 0; a < 16; ++a)
    for (unsigned b = 0; b < 16; ++b) {
      const PolicyProfile p1 = PolicyProfile::from_bits(static_cast<std::uint8_t>(a));
      const PolicyProfile p2 = PolicyProfile::from_bits(static_cast<std::uint8_t>(b));
      for (State s : kStates) {
        std::array<double, 4> rho{};
        rho[index(s)] = 1.0;
        const double cycle = deterministic_return(p1, p2, kM, 0.7, s);
        CHECK(cycle == doctest::Approx(joint_return(p1, p2, kM, 0.7, rho).first).epsilon(1e-12));
      }
    }
}

TEST_CASE("joint returns") {
  const std::array<double, 4> at_cc{0, 1, 0, 0};
  const auto pav = joint_return(PolicyProfile::pavlov(), PolicyProfile::pavlov(), kM, 0.6, at_cc);
  CHECK(pav.first == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(pav.second == doctest::Approx(9.0).epsilon(1e-12));

  const auto alld = joint_return(PolicyProfile::always_defect(), PolicyProfile::always_defect(), kM, 0.6, at_cc);
  CHECK(alld.first == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(alld.second == doctest::Approx(5.0).epsilon(1e-12));

  const std::array<double, 4> at_dd{1, 0, 0, 0};
  const auto mixed = joint_return(PolicyProfile::pavlov(), PolicyProfile::always_defect(), kM, 0.6, at_dd);
  CHECK(mixed.first == doctest::Approx((kM.r_cd() + 0.6 * kM.r_dd()) / (1 - 0.36)).epsilon(1e-12));
  CHECK(mixed.second == doctest::Approx((kM.r_dc() + 0.6 * kM.r_dd()) / (1 - 0.36)).epsilon(1e-12));

  CHECK_THROWS_AS(joint_return(PolicyProfile::pavlov(), PolicyProfile::pavlov(), kM, 0.6, {0.5, 0.5, 0.1, 0}),
                  std::domain_error);
}

TEST_CASE("phase-2 eigenvalues") {
  const EigenReport r = phase2_eigen(0.1, 0.6);
  CHECK(std::abs(r.lambda_plus - 0.95875) < 1e-4);
  CHECK(std::abs(r.lambda_minus - 0.84485) < 1e-4);

  for (int i = 1; i <= 20; ++i)
    for (int j = 1; j <= 20; ++j) {
      const double alpha = i / 21.0, gamma = j / 21.0;
      const EigenReport e = phase2_eigen(alpha, gamma);
      CHECK(0.0 < e.lambda_minus);
      CHECK(e.lambda_minus < e.lambda_plus);
      CHECK(e.lambda_plus < 1.0);
      // Characteristic polynomial of the matrix.
      const auto& m = e.matrix;
      const double tr = m[0][0] + m[1][1], det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
      const double disc = std::sqrt(tr * tr / 4 - det);
      CHECK(std::abs(e.lambda_plus - (tr / 2 + disc)) < 1e-12);
      CHECK(std::abs(e.lambda_minus - (tr / 2 - disc)) < 1e-12);
      // P diag(l) P^-1 reproduces the matrix.
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
          const double v = e.p[r][0] * e.lambda_plus * e.p_inv[0][c] + e.p[r][1] * e.lambda_minus * e.p_inv[1][c];
          CHECK(std::abs(v - m[r][c]) < 1e-12);
        }
    }
  const EigenReport tiny = phase2_eigen(1e-9, 0.6);
  CHECK(tiny.lambda_plus == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(tiny.lambda_minus == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("fixed-point report") {
  const nlohmann::json j = fixed_point_report(PolicyProfile::pavlov(), kM, 0.6);
  CHECK(j.at("profile") == "pavlov");
  CHECK(j.at("is_consistent") == true);
  CHECK(j.at("is_spe") == true);
  CHECK(j.at("pavlov_exists") == true);
  CHECK(j.at("q_star").at("CC").at("C").get<double>() == doctest::Approx(9.0));
}
