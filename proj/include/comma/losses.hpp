#pragma once

#include <span>
#include <vector>

#include "comma/agents.hpp"
#include "comma/mlp.hpp"

namespace comma::losses {

/// One replay record over all M intersections.
struct Sample {
  std::vector<double> obs;        // joint observation at S_i
  std::vector<double> next_obs;   // joint observation at S_{i+1}
  std::vector<double> actions_s;  // M green durations in seconds
  std::vector<double> rewards;    // per-intersection local rewards
  double global_reward = 0.0;     // r_i^G
  double time_s = 0.0;            // rollout time the transition was opened
};

enum class Kernel { Serial, OpenMP };

struct LossGrad {
  double loss = 0.0;
  nn::GradientSet grads;
};

/// y_i^m from the target actor/critic pair; no gradient flows through these.
std::vector<double> local_critic_targets(const agents::LocalAgent& a,
                                         std::span<const Sample> batch);

/// Mean squared Bellman error and gradients w.r.t. the online critic.
LossGrad local_critic_loss(const agents::LocalAgent& a, std::span<const Sample> batch,
                           std::span<const double> targets, Kernel k = Kernel::Serial);

/// Deterministic policy gradient loss: -mean Q(S, mu(S)); gradients w.r.t.
/// the actor only, chained through the critic's action input slot.
LossGrad local_actor_loss(const agents::LocalAgent& a, std::span<const Sample> batch,
                          Kernel k = Kernel::Serial);

std::vector<double> global_critic_targets(const agents::GlobalAgent& a,
                                          std::span<const Sample> batch);
LossGrad global_critic_loss(const agents::GlobalAgent& a, std::span<const Sample> batch,
                            std::span<const double> targets, Kernel k = Kernel::Serial);
LossGrad global_actor_loss(const agents::GlobalAgent& a, std::span<const Sample> batch,
                           Kernel k = Kernel::Serial);

}  // namespace comma::losses
