#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "comma/agents.hpp"
#include "comma/losses.hpp"
#include "comma/sim.hpp"

namespace comma::train {

struct ExplorationSchedule {
  double eps_start = 0.9;
  double eps_end = 0.1;
  int decay_epochs = 20;
  double noise_range_s = 5.0;
  // Paper-literal reading: noise fires when p > epsilon (so a decaying
  // epsilon means rising exploration). Off by default; epsilon is treated
  // as the exploration probability.
  bool literal_rule = false;

  double epsilon(int epoch) const;
  bool explores(double p, int epoch) const;
};

enum class DecayMode { Consecutive, Epoch };

struct TrainConfig {
  int epochs = 20;
  int episodes_per_epoch = 400;
  double rollout_seconds = 3600.0;
  int minibatch = 32;
  double gamma = 0.9;
  double tau = 0.995;
  // When tau_random_lo >= 0, tau is drawn uniformly from [lo, hi] per update.
  double tau_random_lo = -1.0;
  double tau_random_hi = -1.0;
  double critic_lr = 1e-3;
  double actor_lr = 1e-4;
  double momentum = 0.0;
  double global_reward_scale = 1e-3;  // conditioning factor applied when storing r^G
  DecayMode decay_mode = DecayMode::Consecutive;
  double decay_base = 0.95;
  bool clear_buffer_each_epoch = true;  // on-policy mode
  std::size_t buffer_capacity = 200000;
  std::uint64_t seed = 0;
  std::vector<int> hidden = {64, 64};
  int pretrain_rollouts = 1;
  int pretrain_updates = 200;
  ExplorationSchedule schedule;
  losses::Kernel kernel = losses::Kernel::Serial;

  void validate() const;
};

/// Per-intersection stores B^1..B^M; the union feeds the global agent.
class ReplayBuffer {
 public:
  ReplayBuffer(int num_intersections, std::size_t capacity_per_store);

  void clear();
  void add(int m, losses::Sample s);
  std::size_t size(int m) const { return stores_[m].size(); }
  std::size_t total_size() const;
  const std::vector<losses::Sample>& store(int m) const { return stores_[m]; }

  // Without replacement; nb == store size yields a permutation.
  std::vector<losses::Sample> sample_local(int m, int nb, std::mt19937_64& rng) const;
  std::vector<losses::Sample> sample_union(int nb, std::mt19937_64& rng) const;

 private:
  std::vector<std::vector<losses::Sample>> stores_;
  std::size_t capacity_;
};

struct CompetitionState {
  std::vector<double> w_global_raw;       // fetched from the global actor
  std::vector<int> consecutive_global_picks;
  std::int64_t local_pick_count = 0;
  std::int64_t global_pick_count = 0;
};

struct GodOptions {
  std::optional<double> force_w_global;  // probe: overrides the raw weight
  bool use_global = true;                // false = local-only ablation
};

/// Algorithm 2: one rollout of on-policy data under the weight competition
/// with epsilon-greedy noise. Appends to `buf`; returns competition counters.
CompetitionState generate_on_policy_data(sim::Simulator& s, std::vector<agents::LocalAgent>& locals,
                                         const agents::GlobalAgent* global,
                                         const TrainConfig& cfg, int epoch, ReplayBuffer& buf,
                                         std::mt19937_64& rng, const GodOptions& opts = {});

struct AgentOptimizers {
  nn::SgdMomentum critic;
  nn::SgdMomentum actor;
  AgentOptimizers(const nn::MlpParams& critic_p, const nn::MlpParams& actor_p, double beta)
      : critic(critic_p, beta), actor(actor_p, beta) {}
};

struct UpdateResult {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
};

/// Algorithm 3: one minibatch update of local agent m plus soft target updates.
UpdateResult update_local(const ReplayBuffer& buf, agents::LocalAgent& agent,
                          AgentOptimizers& opt, const TrainConfig& cfg, std::mt19937_64& rng);

/// Algorithm 4: one minibatch update of the global agent.
UpdateResult update_global(const ReplayBuffer& buf, agents::GlobalAgent& agent,
                           AgentOptimizers& opt, const TrainConfig& cfg, std::mt19937_64& rng);

using SimFactory = std::function<sim::Simulator(std::uint64_t rollout_seed)>;

struct EpochMetrics {
  int epoch = 0;
  double total_wait_s = 0.0;
  double avg_speed_mps = 0.0;
  double throughput_total = 0.0;
  double critic_loss_mean = 0.0;
  double actor_loss_mean = 0.0;
  double global_critic_loss = 0.0;
};

struct TrainResult {
  std::vector<agents::LocalAgent> locals;
  agents::GlobalAgent global;
  std::vector<EpochMetrics> metrics;
  CompetitionState last_competition;
};

/// Builds agents sized for the scenario; locals are initialized from the
/// global agent's parameters wherever layer shapes are congruent.
struct AgentSet {
  std::vector<agents::LocalAgent> locals;
  agents::GlobalAgent global;
};
AgentSet make_agents(const sim::CorridorConfig& scenario, const TrainConfig& cfg);

/// Supervised warm start from fixed-time rollouts: critics regress on the
/// fixed-time transitions, actors regress toward the fixed duration.
void pretrain_from_fixed_time(AgentSet& agents, const SimFactory& factory, double fixed_green_s,
                              const TrainConfig& cfg);

/// Algorithm 1 orchestration.
TrainResult train(const SimFactory& factory, AgentSet agents, const TrainConfig& cfg,
                  const GodOptions& god_opts = {});

}  // namespace comma::train
