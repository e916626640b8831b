#ifndef IPDQ_ENGINE_HPP
#define IPDQ_ENGINE_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ipdq/game.hpp"
#include "ipdq/policy.hpp"
#include "json.hpp"

namespace ipdq {

enum class UpdateMode : std::uint8_t {
  // Only entry (s_t, a1_t) is updated each round.
  p1_only,
  // Player 2's entry (swap(s_t), a2_t) is updated too; both targets read the pre-step table.
  both_perspectives,
};

std::string to_string(UpdateMode mode);
UpdateMode update_mode_from_string(const std::string& name);

// Named initial tables. "optimistic-default" is the fixed table below; the two
// fixed-point presets are solved for the config's payoff and discount at epsilon 0.
//   DD: C 6.0, D 6.5   CC: C 7.0, D 7.5   CD/DC: C 4.0, D 5.0
QTable optimistic_default_table();
QTable preset_table(const std::string& name, const PayoffMatrix& m, double gamma);

enum class RecordLevel : std::uint8_t { full, summary };

struct RunConfig {
  PayoffMatrix payoff = PayoffMatrix::from_g(1.8);
  double gamma = 0.6;
  double alpha = 0.1;
  double epsilon = 0.0;
  std::uint64_t n_iter = 2000;
  State s0 = kDD;
  std::string q_init_name = "optimistic-default";  // empty when q_init is explicit
  QTable q_init = optimistic_default_table();
  std::uint64_t seed = 0;
  std::uint64_t run_index = 0;
  UpdateMode update_mode = UpdateMode::p1_only;
  std::uint64_t snapshot_stride = 0;  // 0 picks 1 up to 1e4 steps, 10 beyond
  RecordLevel record = RecordLevel::full;

  // Throws std::domain_error naming the offending field.
  void validate() const;
  std::uint64_t effective_stride() const;
};

// Resolves q_init_name against payoff and gamma when set.
RunConfig with_preset(RunConfig cfg, const std::string& preset);

nlohmann::json config_to_json(const RunConfig& cfg);
// Missing keys keep their defaults. "q_init" may be a preset name or a table.
RunConfig config_from_json(const nlohmann::json& j);

class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepLog {
  std::uint64_t t = 0;  // 1-based round index; the table after this round is Q^t
  State s;              // player 1's state (a1_{t-1}, a2_{t-1})
  Action a1 = Action::D, a2 = Action::D;
  double r1 = 0.0, r2 = 0.0;
  bool explored1 = false, explored2 = false;
  double max_abs_dq = 0.0;
  std::uint8_t policy_bits = 0;  // greedy profile of Q^t
};

// One round of self-play. q is updated in place; prev is (a1_{t-1}, a2_{t-1}) on
// entry and (a1_t, a2_t) on return.
StepLog step(QTable& q, std::pair<Action, Action>& prev, const RunConfig& cfg, RandomStream& rng);

struct Snapshot {
  std::uint64_t t;
  QTable q;
};

struct TrajectoryRecord {
  RunConfig config;
  std::vector<StepLog> steps;       // empty at RecordLevel::summary
  std::vector<Snapshot> snapshots;  // t = 0 first, then every stride steps and the last step
  std::optional<std::uint64_t> t1;  // first AlwaysDefect -> LoseShift hit
  std::optional<std::uint64_t> t2;  // first Pavlov hit
  PolicyProfile initial_policy;
  PolicyProfile final_policy;
  PolicyProfile final_mode;  // most frequent greedy profile over the last 100 rounds
  QTable final_q;
  std::uint64_t oscillations = 0;  // LoseShift -> AlwaysDefect reversions
  std::uint64_t explored_rounds = 0;

  bool oscillated() const { return oscillations > 0; }
};

TrajectoryRecord run(const RunConfig& cfg);

struct CooperationEstimate {
  double estimate = 0.0;
  double ci95 = 0.0;
  std::uint64_t n_runs = 0;
  std::map<std::string, std::uint64_t> policy_counts;  // by final_policy name
  double oscillation_frac = 0.0;
  std::vector<PolicyProfile> finals;  // per run index
  std::vector<std::optional<std::uint64_t>> t2s;
};

// Run i uses RandomStream(cfg.seed, i). jobs = 0 uses all hardware threads;
// results do not depend on jobs.
CooperationEstimate cooperation_probability(const RunConfig& cfg, std::uint64_t n_runs, unsigned jobs = 0);

// Columns t,s,a1,a2,r1,r2,q_dd_c,...,q_dc_d,policy; one row per snapshot. The
// t = 0 row leaves the action and reward fields empty.
std::string trajectory_csv(const TrajectoryRecord& rec);
nlohmann::json run_summary_json(const TrajectoryRecord& rec);

// Calls fn(i) for i in [0, n) on up to jobs threads.
template <class Fn>
void parallel_for(std::uint64_t n, unsigned jobs, Fn&& fn);

unsigned resolve_jobs(unsigned jobs);

}  // namespace ipdq

#include "ipdq/parallel.inl"

#endif  // IPDQ_ENGINE_HPP
