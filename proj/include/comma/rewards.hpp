#pragma once

#include <span>
#include <stdexcept>
#include <vector>

namespace comma::agents {

enum class RewardCase {
  GreenEndTrafficLeft,  // green ended with vehicles still queued
  GreenOnNoTraffic,     // approach emptied while green was still on
};

/// Local clearance-degree reward. Case 1 scores the residual queue N_mt
/// against N_max; Case 2 scores the remnant green seconds g_mt against G_max.
inline double local_reward(double n_mt, double g_mt, RewardCase which, double r_max,
                           double n_max, double g_max) {
  if (n_mt < 0.0) throw std::invalid_argument("local_reward: negative vehicle count");
  if (n_max <= 0.0 || g_max <= 0.0)
    throw std::invalid_argument("local_reward: N_max and G_max must be positive");
  if (g_mt < 0.0 || g_mt > g_max)
    throw std::invalid_argument("local_reward: g_mt outside [0, G_max]");
  switch (which) {
    case RewardCase::GreenEndTrafficLeft:
      return (n_mt / n_max <= 1.0 / n_max) ? r_max : -r_max * n_mt / n_max;
    case RewardCase::GreenOnNoTraffic:
      return (g_mt / g_max <= 1.0 / g_max) ? r_max : -r_max * g_mt / g_max;
  }
  throw std::invalid_argument("local_reward: unknown case");
}

/// Negative mean-over-intersections of summed per-vehicle waiting times.
inline double global_reward(std::span<const std::vector<double>> wait_times_per_intersection) {
  const std::size_t m_count = wait_times_per_intersection.size();
  if (m_count == 0) throw std::invalid_argument("global_reward: empty intersection list");
  double total = 0.0;
  for (const auto& waits : wait_times_per_intersection) {
    for (double w : waits) {
      if (w < 0.0) throw std::invalid_argument("global_reward: negative wait time");
      total += w;
    }
  }
  return -total / static_cast<double>(m_count);
}

/// Same reward computed from per-intersection wait sums.
inline double global_reward_from_sums(std::span<const double> wait_sum_per_intersection) {
  if (wait_sum_per_intersection.empty())
    throw std::invalid_argument("global_reward: empty intersection list");
  double total = 0.0;
  for (double s : wait_sum_per_intersection) {
    if (s < 0.0) throw std::invalid_argument("global_reward: negative wait sum");
    total += s;
  }
  return -total / static_cast<double>(wait_sum_per_intersection.size());
}

}  // namespace comma::agents
