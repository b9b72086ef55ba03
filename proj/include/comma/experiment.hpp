#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "comma/sim.hpp"
#include "comma/training.hpp"

namespace comma::exp {

enum class Controller { FixedTime, CommaDdpg, LocalOnlyDdpg };

std::string controller_name(Controller c);

struct ExperimentSpec {
  sim::CorridorConfig scenario;
  Controller controller = Controller::FixedTime;
  train::TrainConfig train_cfg;
  double eval_horizon_s = 3600.0;
  std::vector<std::uint64_t> eval_seeds = {1, 2, 3, 4, 5};
  std::filesystem::path output_dir;
  double fixed_green_s = 0.0;  // 0 -> midpoint of [D_min, D_max]
  bool pretrain = true;

  double fixed_green() const;
  void validate() const;
};

struct ResultRow {
  std::string controller;
  std::uint64_t seed = 0;
  double waiting_time_s = 0.0;
  double avg_speed_mps = 0.0;
  std::vector<double> throughput;
};

ResultRow run_fixed_time(const sim::CorridorConfig& scenario, double green_s, double horizon_s,
                         std::uint64_t seed);

struct EvalOutcome {
  ResultRow row;
  std::uint64_t global_actor_calls = 0;  // inference-purity probe
  std::int64_t full_traversals_no_stop = 0;
};

/// Runs the trained local actors, no noise, never touching the global actor.
/// If `keep_sim` is non-null the evaluated simulator (with trajectories
/// recorded) is returned through it.
EvalOutcome evaluate_local_policy(const sim::CorridorConfig& scenario,
                                  const std::vector<agents::LocalAgent>& locals,
                                  const agents::GlobalAgent* purity_probe, double horizon_s,
                                  std::uint64_t seed,
                                  std::unique_ptr<sim::Simulator>* keep_sim = nullptr);

/// Trains (when the controller learns) and evaluates across eval_seeds.
/// Seeds are paired: seed i trains with train seed i and evaluates on
/// scenario seed i.
std::vector<ResultRow> run_experiment(const ExperimentSpec& spec);

struct TauSweepRow {
  std::string tau_label;
  double waiting_time_s = 0.0;
  double avg_speed_mps = 0.0;
};
std::vector<TauSweepRow> sweep_tau(const ExperimentSpec& spec);

struct PolicyModeRow {
  std::string mode;  // "on-policy" / "off-policy"
  double waiting_time_s = 0.0;
  double avg_speed_mps = 0.0;
};
std::vector<PolicyModeRow> compare_policy_modes(const ExperimentSpec& spec);

void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows);
void write_summary(const std::filesystem::path& path, const std::vector<ResultRow>& rows);
void export_time_space_csv(const sim::Simulator& s, const std::filesystem::path& path);
void export_metrics_csv(const sim::Simulator& s, const std::filesystem::path& path);

double median(std::vector<double> v);

}  // namespace comma::exp
