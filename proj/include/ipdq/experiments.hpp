#ifndef IPDQ_EXPERIMENTS_HPP
#define IPDQ_EXPERIMENTS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ipdq/engine.hpp"
#include "ipdq/theory.hpp"
#include "json.hpp"

namespace ipdq {

// Cooperation grid over (alpha, epsilon, g). An empty gs keeps base.payoff.
struct SweepSpec {
  RunConfig base;
  std::vector<double> alphas{0.01, 0.02, 0.05, 0.1, 0.15, 0.2};
  std::vector<double> epsilons{0.01, 0.02, 0.05, 0.1, 0.15, 0.2};
  std::vector<double> gs;
  std::uint64_t n_runs = 100;
};

SweepSpec sweep_spec_from_json(const nlohmann::json& j);

struct SweepRow {
  double alpha = 0.0, epsilon = 0.0, g = 0.0, gamma = 0.0;
  std::uint64_t n_iter = 0;
  CooperationEstimate estimate;
  std::optional<double> mean_t2;  // over runs that reached Pavlov
};

std::vector<SweepRow> run_sweep(const SweepSpec& spec, unsigned jobs = 0);
std::string sweep_csv(const std::vector<SweepRow>& rows);

// Per-check tally over the accepted runs of a conditional suite.
struct CheckTally {
  std::string name;
  std::uint64_t applicable = 0;
  std::uint64_t passed = 0;
  double min_margin = 0.0;
  std::vector<std::string> failing;  // run contexts

  double pass_fraction() const {
    return applicable == 0 ? 1.0 : static_cast<double>(passed) / static_cast<double>(applicable);
  }
};

struct PhaseSuiteReport {
  std::string name;
  double alpha = 0.0, epsilon = 0.0;
  int k = 0;
  std::uint64_t horizon = 0;
  std::uint64_t accepted = 0;
  std::uint64_t examined = 0;  // accepted + excluded for violating the event
  std::vector<CheckTally> checks;

  std::uint64_t excluded() const { return examined - accepted; }
  bool passes(double min_fraction) const;
};

nlohmann::json to_json(const PhaseSuiteReport& r);

// Scans run indices 0, 1, ... of base (with alpha, epsilon overridden) and
// keeps the first n_required runs on the event kappa <= k.
PhaseSuiteReport phase1_suite(RunConfig base, double alpha, double epsilon, int k, std::uint64_t T,
                              std::uint64_t n_required, unsigned jobs = 0, std::uint64_t max_candidates = 200000);
// Lose-shift window checks plus check_lose_shift_window; horizon = n_iter per run.
PhaseSuiteReport phase2_suite(RunConfig base, double alpha, double epsilon, int k, std::uint64_t n_required,
                              unsigned jobs = 0, std::uint64_t max_candidates = 200000);

struct StepBoundReport {
  std::uint64_t runs = 0, steps = 0, violations = 0;
  double bound = 0.0, max_change = 0.0;
};

StepBoundReport step_bound_suite(RunConfig base, std::uint64_t n_runs, unsigned jobs = 0);

// Q[s][D] - Q[s][C] per snapshot; columns t,diff_dd,diff_cc,diff_cd,diff_dc.
std::string qdiff_csv(const TrajectoryRecord& rec);
// Mean and sample standard deviation of the same series across runs with
// identical snapshot times.
std::string qdiff_mean_std_csv(const std::vector<TrajectoryRecord>& recs);

std::string rate_csv(const RateTable& table);
nlohmann::json rate_json(const RateTable& table);

nlohmann::json fixedpoint_json(const PayoffMatrix& m, double gamma, double epsilon, double alpha);
std::string fixedpoint_csv(const PayoffMatrix& m, double gamma, double epsilon);

struct VerifyOptions {
  std::uint64_t step_runs = 100;
  std::uint64_t phase_runs = 100;
  double phase_alpha = 0.01;
  double phase_epsilon = 0.01;
  double min_pass_fraction = 0.95;
};

struct VerifyReport {
  bool ok = true;
  nlohmann::json json;
};

VerifyReport verify_suite(const RunConfig& base, const VerifyOptions& opt = {}, unsigned jobs = 0);

}  // namespace ipdq

#endif  // IPDQ_EXPERIMENTS_HPP
