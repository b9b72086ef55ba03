// Command-line front end: training, evaluation, ablation sweeps, convergence
// certificates, and time-space diagram export.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "comma/config_file.hpp"
#include "comma/experiment.hpp"
#include "comma/mdp.hpp"
#include "comma/training.hpp"

namespace fs = std::filesystem;
using namespace comma;

namespace {

exp::ExperimentSpec spec_from_config(const cfg::ConfigFile& f) {
  exp::ExperimentSpec s;
  s.scenario = cfg::corridor_from_config(f);
  s.train_cfg = cfg::train_from_config(f);
  s.eval_horizon_s = f.get_num("eval", "horizon_s", 3600.0);
  s.fixed_green_s = f.get_num("eval", "fixed_green_s", 0.0);
  s.pretrain = f.get_num("eval", "pretrain", 1.0) != 0.0;
  if (f.has("eval", "seeds")) {
    s.eval_seeds.clear();
    for (double v : f.get_list("eval", "seeds"))
      s.eval_seeds.push_back(static_cast<std::uint64_t>(v));
  }
  return s;
}

void write_epoch_metrics(const fs::path& path, const std::vector<train::EpochMetrics>& ms) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  os << "epoch,total_wait_s,avg_speed_mps,throughput_total,critic_loss,actor_loss,"
        "global_critic_loss\n";
  for (const auto& m : ms)
    os << m.epoch << "," << m.total_wait_s << "," << m.avg_speed_mps << ","
       << m.throughput_total << "," << m.critic_loss_mean << "," << m.actor_loss_mean << ","
       << m.global_critic_loss << "\n";
}

std::vector<agents::LocalAgent> load_checkpoint(const fs::path& dir, int m_count) {
  std::vector<agents::LocalAgent> locals;
  for (int m = 0; m < m_count; ++m) {
    const fs::path d = dir / ("agent_" + std::to_string(m));
    if (!fs::exists(d)) throw std::runtime_error("checkpoint missing " + d.string());
    locals.push_back(agents::load_local_agent(d));
  }
  return locals;
}

int cmd_train(const std::string& config_path, std::int64_t seed, const std::string& out) {
  const auto f = cfg::ConfigFile::parse(config_path);
  auto spec = spec_from_config(f);
  if (seed >= 0) spec.train_cfg.seed = static_cast<std::uint64_t>(seed);
  const auto scenario = spec.scenario;
  train::SimFactory factory = [scenario](std::uint64_t s) {
    auto c = scenario;
    c.seed = s;
    return sim::Simulator(c);
  };
  auto agents_set = train::make_agents(scenario, spec.train_cfg);
  if (spec.pretrain)
    train::pretrain_from_fixed_time(agents_set, factory, spec.fixed_green(), spec.train_cfg);
  auto result = train::train(factory, std::move(agents_set), spec.train_cfg);

  const fs::path dir(out);
  fs::create_directories(dir);
  for (std::size_t m = 0; m < result.locals.size(); ++m)
    agents::save_local_agent(result.locals[m], dir / ("agent_" + std::to_string(m)));
  write_epoch_metrics(dir / "epoch_metrics.csv", result.metrics);
  std::cout << "trained " << result.locals.size() << " local agents over "
            << spec.train_cfg.epochs << " epochs; checkpoints in " << dir.string() << "\n";
  if (!result.metrics.empty())
    std::cout << "final epoch wait " << result.metrics.back().total_wait_s << " s, avg speed "
              << result.metrics.back().avg_speed_mps << " m/s\n";
  return 0;
}

int cmd_eval(const std::string& config_path, std::int64_t seed, const std::string& out,
             const std::string& checkpoint) {
  const auto f = cfg::ConfigFile::parse(config_path);
  auto spec = spec_from_config(f);
  if (seed >= 0) spec.eval_seeds = {static_cast<std::uint64_t>(seed)};
  const fs::path dir(out);
  fs::create_directories(dir);

  std::vector<exp::ResultRow> rows;
  if (checkpoint.empty()) {
    for (auto s : spec.eval_seeds)
      rows.push_back(exp::run_fixed_time(spec.scenario, spec.fixed_green(), spec.eval_horizon_s, s));
  } else {
    auto locals = load_checkpoint(checkpoint, spec.scenario.num_intersections);
    for (auto s : spec.eval_seeds) {
      auto outcome =
          exp::evaluate_local_policy(spec.scenario, locals, nullptr, spec.eval_horizon_s, s);
      outcome.row.controller = "checkpoint";
      rows.push_back(outcome.row);
    }
  }
  exp::write_results_csv(dir / "results.csv", rows);
  exp::write_summary(dir / "summary.txt", rows);
  for (const auto& r : rows)
    std::cout << r.controller << " seed " << r.seed << " waiting_time_s " << r.waiting_time_s
              << " avg_speed_mps " << r.avg_speed_mps << "\n";
  return 0;
}

int cmd_sweep_tau(const std::string& config_path, std::int64_t seed, const std::string& out) {
  const auto f = cfg::ConfigFile::parse(config_path);
  auto spec = spec_from_config(f);
  if (seed >= 0) spec.train_cfg.seed = static_cast<std::uint64_t>(seed);
  const auto rows = exp::sweep_tau(spec);
  const fs::path dir(out);
  fs::create_directories(dir);
  std::ofstream os(dir / "tau_sweep.csv");
  os << "tau,waiting_time_s,avg_speed_mps\n";
  for (const auto& r : rows) {
    os << r.tau_label << "," << r.waiting_time_s << "," << r.avg_speed_mps << "\n";
    std::cout << r.tau_label << " waiting_time_s " << r.waiting_time_s << " avg_speed_mps "
              << r.avg_speed_mps << "\n";
  }
  return 0;
}

int cmd_compare_policy_mode(const std::string& config_path, std::int64_t seed,
                            const std::string& out) {
  const auto f = cfg::ConfigFile::parse(config_path);
  auto spec = spec_from_config(f);
  if (seed >= 0) spec.train_cfg.seed = static_cast<std::uint64_t>(seed);
  const auto rows = exp::compare_policy_modes(spec);
  const fs::path dir(out);
  fs::create_directories(dir);
  std::ofstream os(dir / "policy_modes.csv");
  os << "mode,waiting_time_s,avg_speed_mps\n";
  for (const auto& r : rows) {
    os << r.mode << "," << r.waiting_time_s << "," << r.avg_speed_mps << "\n";
    std::cout << r.mode << " waiting_time_s " << r.waiting_time_s << " avg_speed_mps "
              << r.avg_speed_mps << "\n";
  }
  return 0;
}

int cmd_certify(std::int64_t seed_arg, const std::string& out) {
  std::mt19937_64 rng(seed_arg >= 0 ? static_cast<std::uint64_t>(seed_arg) : 7u);
  std::vector<std::string> lines;
  bool ok = true;
  auto check = [&](bool pass, const std::string& what) {
    lines.push_back(std::string(pass ? "PASS " : "FAIL ") + what);
    ok = ok && pass;
  };

  // Two-state chain with reward 1 everywhere: V = 1/(1-lambda) = 10 at 0.9.
  {
    mdp::FiniteMdp chain;
    chain.n_states = 2;
    chain.n_actions = 1;
    chain.transition = {{0.0, 1.0, 1.0, 0.0}};
    chain.reward = {{1.0, 1.0}};
    chain.gamma = 0.9;
    auto pm = mdp::PolicyMatrix::induce(chain, mdp::PolicyMatrix::uniform_policy(chain));
    auto vi = mdp::value_iteration(pm, 0.9, 1e-12);
    check(std::abs(vi.value[0] - 10.0) < 1e-6 && std::abs(vi.value[1] - 10.0) < 1e-6,
          "two-state chain fixed point V = [10, 10]");
  }

  // Contraction ratios on random MDPs at several discounts.
  {
    bool contraction_ok = true, solve_ok = true;
    for (int trial = 0; trial < 100 && contraction_ok && solve_ok; ++trial) {
      const int n = 2 + static_cast<int>(rng() % 19);
      auto m = mdp::FiniteMdp::random(n, 1 + static_cast<int>(rng() % 4), 0.9, rng);
      for (double lambda : {0.5, 0.9, 0.99}) {
        auto pm = mdp::PolicyMatrix::induce(m, mdp::PolicyMatrix::random_policy(m, rng));
        auto vi = mdp::value_iteration(pm, lambda, 1e-10);
        for (double r : vi.contraction_trace)
          if (r > lambda + 1e-12) contraction_ok = false;
        const auto direct = mdp::solve_fixed_point(pm, lambda);
        for (int s = 0; s < pm.n; ++s)
          if (std::abs(vi.value[s] - direct[s]) > 1e-6) solve_ok = false;
      }
    }
    check(contraction_ok, "sup-norm contraction ratio <= lambda on 100 random tabular MDPs");
    check(solve_ok, "value iteration agrees with the direct linear solve within 1e-6");
  }

  // Gershgorin bound dominates every eigenvalue of row-stochastic matrices.
  {
    bool bound_ok = true, unit_ok = true;
    for (int trial = 0; trial < 50 && bound_ok; ++trial) {
      const int n = 2 + static_cast<int>(rng() % 19);
      auto m = mdp::FiniteMdp::random(n, 1, 0.9, rng);
      const auto& p = m.transition[0];
      const auto g = mdp::gershgorin_bound(p, n);
      if (g.spectral_bound > 1.0 + 1e-12) unit_ok = false;
      for (const auto& ev : mdp::eigenvalues_qr(p, n))
        if (std::abs(ev) > g.spectral_bound + 1e-9) bound_ok = false;
    }
    check(bound_ok, "every eigenvalue magnitude within the Gershgorin bound + 1e-9");
    check(unit_ok, "Gershgorin bound <= 1 for row-stochastic matrices");
  }

  for (const auto& l : lines) std::cout << l << "\n";
  std::cout << (ok ? "certificate: all checks passed" : "certificate: FAILED") << "\n";
  if (!out.empty()) {
    fs::create_directories(fs::path(out));
    std::ofstream os(fs::path(out) / "convergence_certificate.txt");
    for (const auto& l : lines) os << l << "\n";
    os << (ok ? "certificate: all checks passed" : "certificate: FAILED") << "\n";
  }
  return ok ? 0 : 1;
}

int cmd_export_diagram(const std::string& config_path, std::int64_t seed, const std::string& out,
                       const std::string& checkpoint) {
  const auto f = cfg::ConfigFile::parse(config_path);
  auto spec = spec_from_config(f);
  const std::uint64_t eval_seed =
      seed >= 0 ? static_cast<std::uint64_t>(seed) : spec.eval_seeds.front();
  const fs::path dir(out);
  fs::create_directories(dir);

  std::unique_ptr<sim::Simulator> kept;
  if (checkpoint.empty()) {
    auto cfg_s = spec.scenario;
    cfg_s.seed = eval_seed;
    kept = std::make_unique<sim::Simulator>(cfg_s);
    kept->record_trajectories(5.0);
    kept->record_metrics_log(true);
    const double g = spec.fixed_green();
    for (double t = 0.0; t + 1e-9 < spec.eval_horizon_s; t += 1.0) {
      for (int m = 0; m < cfg_s.num_intersections; ++m)
        if (kept->at_cycle_boundary(m, 1.0)) kept->set_green_duration(m, g, 1.0);
      kept->step(1.0);
    }
  } else {
    auto locals = load_checkpoint(checkpoint, spec.scenario.num_intersections);
    exp::evaluate_local_policy(spec.scenario, locals, nullptr, spec.eval_horizon_s, eval_seed,
                               &kept);
  }
  exp::export_time_space_csv(*kept, dir / "time_space.csv");
  if (!kept->metrics_log().empty()) exp::export_metrics_csv(*kept, dir / "metrics.csv");
  std::cout << "wrote " << (dir / "time_space.csv").string() << " ("
            << kept->trajectories().size() << " samples)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperative multi-agent signal control: training and evaluation"};
  app.require_subcommand(1);

  std::string config_path, out = "out", checkpoint;
  std::int64_t seed = -1;
  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", config_path, "scenario/training config file");
    if (needs_config) c->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override seed");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--checkpoint", checkpoint, "agent checkpoint directory");
  };

  auto* train_cmd = app.add_subcommand("train", "train the cooperative controller");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate fixed-time or a checkpoint");
  auto* sweep_cmd = app.add_subcommand("sweep-tau", "target-update-rate sweep");
  auto* mode_cmd = app.add_subcommand("compare-policy-mode", "on-policy vs off-policy replay");
  auto* cert_cmd = app.add_subcommand("certify-convergence", "tabular convergence certificates");
  auto* diag_cmd = app.add_subcommand("export-diagram", "time-space diagram CSV export");
  for (auto* sub : {train_cmd, eval_cmd, sweep_cmd, mode_cmd, diag_cmd}) add_common(sub, true);
  add_common(cert_cmd, false);

  CLI11_PARSE(app, argc, argv);
  try {
    if (train_cmd->parsed()) return cmd_train(config_path, seed, out);
    if (eval_cmd->parsed()) return cmd_eval(config_path, seed, out, checkpoint);
    if (sweep_cmd->parsed()) return cmd_sweep_tau(config_path, seed, out);
    if (mode_cmd->parsed()) return cmd_compare_policy_mode(config_path, seed, out);
    if (cert_cmd->parsed()) return cmd_certify(seed, out);
    if (diag_cmd->parsed()) return cmd_export_diagram(config_path, seed, out, checkpoint);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
