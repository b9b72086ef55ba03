#include "comma/losses.hpp"

#include <cmath>
#include <stdexcept>

#include <omp.h>

namespace comma::losses {

namespace {

using agents::critic_input;
using agents::squash_duration;

// Per-sample loss/gradient closures are evaluated independently, then
// accumulated in index order so serial and OpenMP kernels agree bitwise.
template <typename PerSample>
LossGrad reduce_batch(const nn::MlpParams& grad_shape_of, std::size_t n, Kernel k,
                      PerSample&& per_sample) {
  std::vector<double> losses(n);
  std::vector<nn::GradientSet> grads(n);
  if (k == Kernel::OpenMP) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(n); ++i) per_sample(i, losses[i], grads[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) per_sample(i, losses[i], grads[i]);
  }
  LossGrad out;
  out.grads = nn::GradientSet::zeros_like(grad_shape_of);
  for (std::size_t i = 0; i < n; ++i) {
    out.loss += losses[i];
    out.grads.accumulate(grads[i]);
  }
  const double inv = 1.0 / static_cast<double>(n);
  out.loss *= inv;
  out.grads.scale(inv);
  if (!std::isfinite(out.loss) || !out.grads.all_finite())
    throw std::runtime_error("loss: non-finite value");
  return out;
}

}  // namespace

std::vector<double> local_critic_targets(const agents::LocalAgent& a,
                                         std::span<const Sample> batch) {
  if (batch.empty()) throw std::invalid_argument("local_critic_targets: empty batch");
  std::vector<double> y(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Sample& s = batch[i];
    const auto raw = nn::forward(a.target_actor, s.next_obs);
    std::vector<double> next_actions = s.actions_s;
    next_actions[a.intersection] = squash_duration(raw[0], a.bounds);
    const auto x = critic_input(s.next_obs, next_actions, a.bounds);
    const double q = nn::forward(a.target_critic, x)[0];
    y[i] = s.rewards[a.intersection] + a.gamma * q;
  }
  return y;
}

LossGrad local_critic_loss(const agents::LocalAgent& a, std::span<const Sample> batch,
                           std::span<const double> targets, Kernel k) {
  if (batch.empty()) throw std::invalid_argument("local_critic_loss: empty batch");
  if (targets.size() != batch.size())
    throw std::invalid_argument("local_critic_loss: target count mismatch");
  return reduce_batch(a.critic, batch.size(), k,
                      [&](std::size_t i, double& loss, nn::GradientSet& g) {
                        const auto x = critic_input(batch[i].obs, batch[i].actions_s, a.bounds);
                        nn::ForwardCache cache;
                        const double q = nn::forward(a.critic, x, cache)[0];
                        const double e = q - targets[i];
                        loss = e * e;
                        const double og[1] = {2.0 * e};
                        g = nn::backward(a.critic, cache, og);
                      });
}

LossGrad local_actor_loss(const agents::LocalAgent& a, std::span<const Sample> batch, Kernel k) {
  if (batch.empty()) throw std::invalid_argument("local_actor_loss: empty batch");
  const int obs_dim = a.actor.input_size();
  const double half_range = 0.5;  // d(scaled action)/d(tanh output)
  return reduce_batch(a.actor, batch.size(), k,
                      [&](std::size_t i, double& loss, nn::GradientSet& g) {
                        const Sample& s = batch[i];
                        nn::ForwardCache actor_cache;
                        const auto raw = nn::forward(a.actor, s.obs, actor_cache);
                        std::vector<double> actions = s.actions_s;
                        actions[a.intersection] = squash_duration(raw[0], a.bounds);
                        const auto x = critic_input(s.obs, actions, a.bounds);
                        nn::ForwardCache critic_cache;
                        const double q = nn::forward(a.critic, x, critic_cache)[0];
                        loss = -q;
                        const double og[1] = {-1.0};
                        std::vector<double> dx;
                        (void)nn::backward(a.critic, critic_cache, og, &dx);
                        const double da[1] = {dx[obs_dim + a.intersection] * half_range};
                        g = nn::backward(a.actor, actor_cache, da);
                      });
}

std::vector<double> global_critic_targets(const agents::GlobalAgent& a,
                                          std::span<const Sample> batch) {
  if (batch.empty()) throw std::invalid_argument("global_critic_targets: empty batch");
  const int m = a.num_intersections;
  std::vector<double> y(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Sample& s = batch[i];
    const auto raw = nn::forward(a.target_actor, s.next_obs);
    std::vector<double> next_actions(m);
    for (int j = 0; j < m; ++j) next_actions[j] = squash_duration(raw[j], a.bounds);
    const auto x = critic_input(s.next_obs, next_actions, a.bounds);
    const double q = nn::forward(a.target_critic, x)[0];
    y[i] = s.global_reward + a.gamma * q;
  }
  return y;
}

LossGrad global_critic_loss(const agents::GlobalAgent& a, std::span<const Sample> batch,
                            std::span<const double> targets, Kernel k) {
  if (batch.empty()) throw std::invalid_argument("global_critic_loss: empty batch");
  if (targets.size() != batch.size())
    throw std::invalid_argument("global_critic_loss: target count mismatch");
  return reduce_batch(a.critic, batch.size(), k,
                      [&](std::size_t i, double& loss, nn::GradientSet& g) {
                        const auto x = critic_input(batch[i].obs, batch[i].actions_s, a.bounds);
                        nn::ForwardCache cache;
                        const double q = nn::forward(a.critic, x, cache)[0];
                        const double e = q - targets[i];
                        loss = e * e;
                        const double og[1] = {2.0 * e};
                        g = nn::backward(a.critic, cache, og);
                      });
}

LossGrad global_actor_loss(const agents::GlobalAgent& a, std::span<const Sample> batch, Kernel k) {
  if (batch.empty()) throw std::invalid_argument("global_actor_loss: empty batch");
  const int m = a.num_intersections;
  const int obs_dim = a.actor.input_size();
  return reduce_batch(a.actor, batch.size(), k,
                      [&](std::size_t i, double& loss, nn::GradientSet& g) {
                        const Sample& s = batch[i];
                        nn::ForwardCache actor_cache;
                        const auto raw = nn::forward(a.actor, s.obs, actor_cache);
                        std::vector<double> actions(m);
                        for (int j = 0; j < m; ++j) actions[j] = squash_duration(raw[j], a.bounds);
                        const auto x = critic_input(s.obs, actions, a.bounds);
                        nn::ForwardCache critic_cache;
                        const double q = nn::forward(a.critic, x, critic_cache)[0];
                        loss = -q;
                        const double og[1] = {-1.0};
                        std::vector<double> dx;
                        (void)nn::backward(a.critic, critic_cache, og, &dx);
                        // Only the duration outputs feed the critic; the W_G
                        // outputs get no gradient from this loss.
                        std::vector<double> da(2 * m, 0.0);
                        for (int j = 0; j < m; ++j) da[j] = dx[obs_dim + j] * 0.5;
                        g = nn::backward(a.actor, actor_cache, da);
                      });
}

}  // namespace comma::losses
