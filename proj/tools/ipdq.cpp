// Experiment runner. Every subcommand reads an optional JSON config and writes
// CSV/JSON files under the output directory.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ipdq/dqn.hpp"
#include "ipdq/engine.hpp"
#include "ipdq/experiments.hpp"
#include "ipdq/io.hpp"
#include "ipdq/theory.hpp"

namespace fs = std::filesystem;
using namespace ipdq;

namespace {

constexpr int kExitChecksFailed = 1;
constexpr int kExitBadInput = 2;

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  unsigned jobs = 0;
};

nlohmann::json load_config(const Common& c) {
  if (c.config.empty()) return nlohmann::json::object();
  return read_json(c.config);
}

fs::path out_dir(const Common& c) {
  if (!c.out.empty()) return c.out;
  if (const char* env = std::getenv("IPDQ_OUT_DIR"); env && *env) return env;
  return "out";
}

RunConfig run_config(const Common& c, const nlohmann::json& j) {
  RunConfig cfg = config_from_json(j.contains("config") ? j.at("config") : j);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

void note(const fs::path& p) { std::cout << "wrote " << p.string() << '\n'; }

void write_out(const fs::path& p, const std::string& text) {
  write_text(p, text);
  note(p);
}

void write_out(const fs::path& p, const nlohmann::json& j) {
  write_json(p, j);
  note(p);
}

int cmd_trajectory(const Common& c) {
  const nlohmann::json j = load_config(c);
  const RunConfig cfg = run_config(c, j);
  const std::uint64_t runs = j.value("runs", std::uint64_t{1});
  if (runs == 0) throw std::invalid_argument("runs must be positive");
  const fs::path dir = out_dir(c);
  std::vector<TrajectoryRecord> recs(runs);
  parallel_for(runs, c.jobs, [&](std::uint64_t i) {
    RunConfig ci = cfg;
    ci.run_index = i;
    recs[i] = run(ci);
  });
  write_out(dir / "trajectory.csv", trajectory_csv(recs.front()));
  write_out(dir / "q_diff.csv", qdiff_csv(recs.front()));
  write_out(dir / "summary.json", run_summary_json(recs.front()));
  if (runs > 1) {
    write_out(dir / "q_diff_mean_std.csv", qdiff_mean_std_csv(recs));
    nlohmann::json batch;
    batch["runs"] = runs;
    batch["config"] = config_to_json(cfg);
    nlohmann::json counts = nlohmann::json::object();
    std::uint64_t coop = 0;
    for (const auto& r : recs) {
      counts[r.final_policy.name()] = counts.value(r.final_policy.name(), 0) + 1;
      coop += is_cooperative(r.final_policy.kind());
    }
    batch["final_policy_counts"] = counts;
    batch["cooperative_fraction"] = static_cast<double>(coop) / static_cast<double>(runs);
    write_out(dir / "batch_summary.json", batch);
  }
  return 0;
}

int cmd_sweep(const Common& c) {
  nlohmann::json j = load_config(c);
  SweepSpec spec = sweep_spec_from_json(j);
  if (c.seed) spec.base.seed = *c.seed;
  const auto rows = run_sweep(spec, c.jobs);
  write_out(out_dir(c) / "sweep.csv", sweep_csv(rows));
  return 0;
}

int cmd_fixedpoint(const Common& c) {
  const RunConfig cfg = run_config(c, load_config(c));
  const fs::path dir = out_dir(c);
  write_out(dir / "fixedpoint.json", fixedpoint_json(cfg.payoff, cfg.gamma, cfg.epsilon, cfg.alpha > 0 ? cfg.alpha : 0.1));
  write_out(dir / "fixedpoint.csv", fixedpoint_csv(cfg.payoff, cfg.gamma, cfg.epsilon));
  return 0;
}

int cmd_verify(const Common& c) {
  const nlohmann::json j = load_config(c);
  const RunConfig cfg = run_config(c, j);
  VerifyOptions opt;
  opt.step_runs = j.value("step_runs", opt.step_runs);
  opt.phase_runs = j.value("phase_runs", opt.phase_runs);
  const VerifyReport rep = verify_suite(cfg, opt, c.jobs);
  write_out(out_dir(c) / "verify.json", rep.json);
  for (const auto& check : rep.json.at("checks")) {
    std::string status = "skip";
    if (!check.at("passed").is_null()) status = check.at("passed").get<bool>() ? "pass" : "FAIL";
    if (!check.at("mandatory").get<bool>() && status == "pass") status = "info";
    std::cout << status << ' ' << check.at("name").get<std::string>() << '\n';
  }
  std::cout << (rep.ok ? "all mandatory checks passed" : "mandatory checks failed") << '\n';
  return rep.ok ? 0 : kExitChecksFailed;
}

int cmd_rate(const Common& c) {
  const nlohmann::json j = load_config(c);
  const RunConfig cfg = run_config(c, j);
  const auto alphas = j.value("alphas", std::vector<double>{0.2, 0.1, 0.05, 0.02});
  const RateTable table = rate_scaling(alphas, cfg);
  const fs::path dir = out_dir(c);
  write_out(dir / "rate.csv", rate_csv(table));
  write_out(dir / "rate.json", rate_json(table));
  return 0;
}

int cmd_dqn(const Common& c, bool full) {
  const nlohmann::json j = load_config(c);
  DqnConfig cfg = dqn_config_from_json(j.contains("config") ? j.at("config") : j);
  if (full) cfg = full_scale(cfg);
  if (c.seed) cfg.seed = *c.seed;
  const std::uint64_t n_seeds = j.value("n_seeds", std::uint64_t{5});
  const fs::path dir = out_dir(c);

  // Backprop is checked before any training run.
  RandomStream grad_rng(cfg.seed, std::uint64_t{1} << 32);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) worst = std::max(worst, gradient_check(grad_rng).max_rel_error);
  if (worst > 1e-4) {
    std::cerr << "gradient check failed: max relative error " << worst << '\n';
    return kExitChecksFailed;
  }

  std::vector<DqnResult> results(n_seeds);
  parallel_for(n_seeds, c.jobs, [&](std::uint64_t i) {
    DqnConfig ci = cfg;
    ci.run_index = i;
    results[i] = selfplay_train(ci);
  });
  for (std::uint64_t i = 0; i < n_seeds; ++i)
    write_out(dir / ("dqn_run" + std::to_string(i) + ".csv"), dqn_log_csv(results[i]));
  nlohmann::json rep = dqn_report_json(results);
  rep["gradient_check_max_rel_error"] = worst;
  write_out(dir / "dqn_report.json", rep);
  return 0;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  sub->add_option("--out", c.out, "output directory (default $IPDQ_OUT_DIR or ./out)");
  sub->add_option("--seed", c.seed, "override the config seed");
  sub->add_option("--jobs", c.jobs, "worker threads (0 = all cores)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-play Q-learning on the iterated prisoner's dilemma"};
  app.require_subcommand(1);
  Common common;
  bool full = false;
  auto* traj = app.add_subcommand("trajectory", "single or batched Q-learning trajectories");
  auto* sweep = app.add_subcommand("sweep", "cooperation probability over (alpha, epsilon, g) grids");
  auto* fixed = app.add_subcommand("fixedpoint", "Bellman fixed points of all 16 memory-one profiles");
  auto* verify = app.add_subcommand("verify", "consolidated equilibrium and convergence checks");
  auto* rate = app.add_subcommand("rate", "phase-1 hitting time versus step size");
  auto* dqn = app.add_subcommand("dqn", "deep Q-network self-play");
  for (auto* s : {traj, sweep, fixed, verify, rate, dqn}) add_common(s, common);
  dqn->add_flag("--full-scale", full, "batch size 16384");

  CLI11_PARSE(app, argc, argv);
  try {
    if (traj->parsed()) return cmd_trajectory(common);
    if (sweep->parsed()) return cmd_sweep(common);
    if (fixed->parsed()) return cmd_fixedpoint(common);
    if (verify->parsed()) return cmd_verify(common);
    if (rate->parsed()) return cmd_rate(common);
    if (dqn->parsed()) return cmd_dqn(common, full);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  }
  return kExitBadInput;
}
