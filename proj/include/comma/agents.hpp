#pragma once

#include <atomic>
#include <filesystem>
#include <span>
#include <vector>

#include "comma/mlp.hpp"
#include "comma/rewards.hpp"

namespace comma::agents {

struct ActionBounds {
  double d_min = 15.0;
  double d_max = 90.0;
};

/// tanh output in [-1,1] mapped affinely onto [d_min, d_max].
inline double squash_duration(double tanh_out, const ActionBounds& b) {
  return b.d_min + (tanh_out + 1.0) * 0.5 * (b.d_max - b.d_min);
}
inline double unit_interval(double tanh_out) { return (tanh_out + 1.0) * 0.5; }

/// Actor + critic + targets for one intersection. Actor sees the joint
/// observation (M phases + all stopped counts); the critic additionally
/// takes the joint action vector in its trailing M slots.
struct LocalAgent {
  int intersection = 0;
  nn::MlpParams actor, critic, target_actor, target_critic;
  double gamma = 0.9;
  double r_max = 1.0;
  double n_max = 1.0;   // max traffic flow used by the Case-1 reward
  double g_max = 90.0;  // largest green duration
  ActionBounds bounds;

  static LocalAgent make(int m, int obs_dim, int num_intersections, const ActionBounds& b,
                         std::vector<int> hidden, std::mt19937_64& rng);
};

/// Training-only coordinator. Actor outputs 2M values: M durations then M
/// importance weights in [0,1]. Calls through act() bump an inference probe.
struct GlobalAgent {
  nn::MlpParams actor, critic, target_actor, target_critic;
  double gamma = 0.9;
  ActionBounds bounds;
  int num_intersections = 0;
  mutable std::atomic<std::uint64_t> actor_calls{0};

  GlobalAgent() = default;
  GlobalAgent(GlobalAgent&& other) noexcept { *this = std::move(other); }
  GlobalAgent& operator=(GlobalAgent&& other) noexcept {
    actor = std::move(other.actor);
    critic = std::move(other.critic);
    target_actor = std::move(other.target_actor);
    target_critic = std::move(other.target_critic);
    gamma = other.gamma;
    bounds = other.bounds;
    num_intersections = other.num_intersections;
    actor_calls.store(other.actor_calls.load());
    return *this;
  }

  static GlobalAgent make(int obs_dim, int num_intersections, const ActionBounds& b,
                          std::vector<int> hidden, std::mt19937_64& rng);

  GlobalAgent clone() const;
};

/// Critic input: observation followed by the M joint actions scaled by the
/// duration range. Width = obs_dim + M.
std::vector<double> critic_input(std::span<const double> obs, std::span<const double> actions_s,
                                 const ActionBounds& b);

double act_local(const LocalAgent& agent, std::span<const double> obs);

struct GlobalAction {
  std::vector<double> durations_s;  // in [d_min, d_max]
  std::vector<double> weights;      // W_G^m in [0,1]
};
GlobalAction act_global(const GlobalAgent& agent, std::span<const double> obs);

void save_local_agent(const LocalAgent& a, const std::filesystem::path& dir);
LocalAgent load_local_agent(const std::filesystem::path& dir);

}  // namespace comma::agents
