#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "comma/losses.hpp"

using namespace comma;
using losses::Kernel;
using losses::Sample;

namespace {

constexpr int kObsDim = 10;
constexpr int kM = 3;

std::vector<Sample> make_batch(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> dur(15.0, 90.0);
  std::vector<Sample> batch(n);
  for (auto& s : batch) {
    s.obs.resize(kObsDim);
    s.next_obs.resize(kObsDim);
    for (auto& x : s.obs) x = u(rng);
    for (auto& x : s.next_obs) x = u(rng);
    s.actions_s.resize(kM);
    for (auto& a : s.actions_s) a = dur(rng);
    s.rewards.resize(kM);
    for (auto& r : s.rewards) r = u(rng);
    s.global_reward = u(rng);
  }
  return batch;
}

agents::LocalAgent make_local(std::mt19937_64& rng, double gamma = 0.9) {
  agents::ActionBounds b;
  auto a = agents::LocalAgent::make(1, kObsDim, kM, b, {8, 8}, rng);
  a.gamma = gamma;
  return a;
}

agents::GlobalAgent make_global(std::mt19937_64& rng, double gamma = 0.9) {
  agents::ActionBounds b;
  auto a = agents::GlobalAgent::make(kObsDim, kM, b, {8, 8}, rng);
  a.gamma = gamma;
  return a;
}

bool close(double a, double b, double rel = 1e-4, double abs = 1e-7) {
  return std::abs(a - b) <= abs + rel * std::max(std::abs(a), std::abs(b));
}

}  // namespace

TEST_CASE("gamma = 0 collapses critic targets to the stored rewards") {
  std::mt19937_64 rng(3);
  auto local = make_local(rng, 0.0);
  auto global = make_global(rng, 0.0);
  const auto batch = make_batch(16, rng);
  const auto yl = losses::local_critic_targets(local, batch);
  const auto yg = losses::global_critic_targets(global, batch);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    CHECK(yl[i] == doctest::Approx(batch[i].rewards[local.intersection]).epsilon(1e-14));
    CHECK(yg[i] == doctest::Approx(batch[i].global_reward).epsilon(1e-14));
  }
}

TEST_CASE("critic targets recompute from target networks within 1e-10") {
  std::mt19937_64 rng(4);
  auto a = make_local(rng);
  const auto batch = make_batch(8, rng);
  const auto y = losses::local_critic_targets(a, batch);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto raw = nn::forward(a.target_actor, batch[i].next_obs);
    auto acts = batch[i].actions_s;
    acts[a.intersection] = agents::squash_duration(raw[0], a.bounds);
    const double q =
        nn::forward(a.target_critic, agents::critic_input(batch[i].next_obs, acts, a.bounds))[0];
    CHECK(std::abs(y[i] - (batch[i].rewards[a.intersection] + a.gamma * q)) < 1e-10);
  }
}

TEST_CASE("critic loss equals the recomputed mean squared Bellman error") {
  std::mt19937_64 rng(5);
  auto a = make_local(rng);
  const auto batch = make_batch(12, rng);
  const auto y = losses::local_critic_targets(a, batch);
  const auto lg = losses::local_critic_loss(a, batch, y);
  double manual = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double q =
        nn::forward(a.critic, agents::critic_input(batch[i].obs, batch[i].actions_s, a.bounds))[0];
    manual += (q - y[i]) * (q - y[i]);
  }
  manual /= batch.size();
  CHECK(std::abs(lg.loss - manual) < 1e-10);
}

TEST_CASE("actor loss equals minus the mean critic value at the actor's action") {
  std::mt19937_64 rng(6);
  auto a = make_local(rng);
  const auto batch = make_batch(12, rng);
  const auto lg = losses::local_actor_loss(a, batch);
  double manual = 0.0;
  for (const auto& s : batch) {
    auto acts = s.actions_s;
    acts[a.intersection] = agents::squash_duration(nn::forward(a.actor, s.obs)[0], a.bounds);
    manual -= nn::forward(a.critic, agents::critic_input(s.obs, acts, a.bounds))[0];
  }
  manual /= batch.size();
  CHECK(std::abs(lg.loss - manual) < 1e-10);
}

TEST_CASE("critic gradient matches central finite differences") {
  std::mt19937_64 rng(7);
  auto a = make_local(rng);
  const auto batch = make_batch(6, rng);
  const auto y = losses::local_critic_targets(a, batch);
  const auto lg = losses::local_critic_loss(a, batch, y);
  const double h = 1e-6;
  int checked = 0;
  for (std::size_t l = 0; l < a.critic.num_layers(); ++l) {
    for (std::size_t i = 0; i < a.critic.weights[l].size(); i += 7) {
      const double keep = a.critic.weights[l][i];
      a.critic.weights[l][i] = keep + h;
      const double lp = losses::local_critic_loss(a, batch, y).loss;
      a.critic.weights[l][i] = keep - h;
      const double lm = losses::local_critic_loss(a, batch, y).loss;
      a.critic.weights[l][i] = keep;
      CHECK(close(lg.grads.weights[l][i], (lp - lm) / (2 * h)));
      ++checked;
    }
  }
  CHECK(checked > 20);
}

TEST_CASE("actor gradient matches central finite differences through the critic") {
  std::mt19937_64 rng(8);
  auto a = make_local(rng);
  const auto batch = make_batch(6, rng);
  const auto lg = losses::local_actor_loss(a, batch);
  const double h = 1e-6;
  int checked = 0;
  for (std::size_t l = 0; l < a.actor.num_layers(); ++l) {
    for (std::size_t i = 0; i < a.actor.weights[l].size(); i += 5) {
      const double keep = a.actor.weights[l][i];
      a.actor.weights[l][i] = keep + h;
      const double lp = losses::local_actor_loss(a, batch).loss;
      a.actor.weights[l][i] = keep - h;
      const double lm = losses::local_actor_loss(a, batch).loss;
      a.actor.weights[l][i] = keep;
      CHECK(close(lg.grads.weights[l][i], (lp - lm) / (2 * h)));
      ++checked;
    }
  }
  CHECK(checked > 20);
}

TEST_CASE("global actor gradient matches finite differences and spares the weight head") {
  std::mt19937_64 rng(9);
  auto a = make_global(rng);
  const auto batch = make_batch(6, rng);
  const auto lg = losses::global_actor_loss(a, batch);
  const double h = 1e-6;
  for (std::size_t l = 0; l < a.actor.num_layers(); ++l) {
    for (std::size_t i = 0; i < a.actor.weights[l].size(); i += 9) {
      const double keep = a.actor.weights[l][i];
      a.actor.weights[l][i] = keep + h;
      const double lp = losses::global_actor_loss(a, batch).loss;
      a.actor.weights[l][i] = keep - h;
      const double lm = losses::global_actor_loss(a, batch).loss;
      a.actor.weights[l][i] = keep;
      CHECK(close(lg.grads.weights[l][i], (lp - lm) / (2 * h)));
    }
  }
  // Output rows feeding only the importance weights receive zero gradient.
  const std::size_t last = a.actor.num_layers() - 1;
  const int hidden = a.actor.layer_sizes[last];
  for (int row = a.num_intersections; row < 2 * a.num_intersections; ++row)
    for (int col = 0; col < hidden; ++col)
      CHECK(lg.grads.weights[last][row * hidden + col] == 0.0);
}

TEST_CASE("targets are insulated from the online networks and vice versa") {
  std::mt19937_64 rng(10);
  auto a = make_local(rng);
  const auto batch = make_batch(8, rng);
  const auto y0 = losses::local_critic_targets(a, batch);

  auto perturbed = a;
  for (auto& w : perturbed.critic.weights)
    for (auto& v : w) v += 0.5;
  for (auto& w : perturbed.actor.weights)
    for (auto& v : w) v += 0.5;
  const auto y1 = losses::local_critic_targets(perturbed, batch);
  for (std::size_t i = 0; i < y0.size(); ++i) CHECK(y0[i] == y1[i]);

  auto perturbed_targets = a;
  for (auto& w : perturbed_targets.target_critic.weights)
    for (auto& v : w) v += 0.5;
  for (auto& w : perturbed_targets.target_actor.weights)
    for (auto& v : w) v += 0.5;
  CHECK(losses::local_critic_loss(a, batch, y0).loss ==
        losses::local_critic_loss(perturbed_targets, batch, y0).loss);
  CHECK(losses::local_actor_loss(a, batch).loss ==
        losses::local_actor_loss(perturbed_targets, batch).loss);
}

TEST_CASE("the actor's own stored action slot is overwritten, other slots matter") {
  std::mt19937_64 rng(11);
  auto a = make_local(rng);
  auto batch = make_batch(8, rng);
  const double base = losses::local_actor_loss(a, batch).loss;

  auto own = batch;
  for (auto& s : own) s.actions_s[a.intersection] = 42.0;
  CHECK(losses::local_actor_loss(a, own).loss == base);

  auto other = batch;
  for (auto& s : other) s.actions_s[(a.intersection + 1) % kM] += 10.0;
  CHECK(losses::local_actor_loss(a, other).loss != base);
}

TEST_CASE("serial and OpenMP kernels agree bitwise") {
  std::mt19937_64 rng(12);
  auto local = make_local(rng);
  auto global = make_global(rng);
  const auto batch = make_batch(257, rng);  // odd size exercises uneven chunks
  const auto y = losses::local_critic_targets(local, batch);
  const auto yg = losses::global_critic_targets(global, batch);

  auto check_equal = [](const losses::LossGrad& s, const losses::LossGrad& p) {
    CHECK(s.loss == p.loss);
    for (std::size_t l = 0; l < s.grads.weights.size(); ++l) {
      CHECK(s.grads.weights[l] == p.grads.weights[l]);
      CHECK(s.grads.biases[l] == p.grads.biases[l]);
    }
  };
  check_equal(losses::local_critic_loss(local, batch, y, Kernel::Serial),
              losses::local_critic_loss(local, batch, y, Kernel::OpenMP));
  check_equal(losses::local_actor_loss(local, batch, Kernel::Serial),
              losses::local_actor_loss(local, batch, Kernel::OpenMP));
  check_equal(losses::global_critic_loss(global, batch, yg, Kernel::Serial),
              losses::global_critic_loss(global, batch, yg, Kernel::OpenMP));
  check_equal(losses::global_actor_loss(global, batch, Kernel::Serial),
              losses::global_actor_loss(global, batch, Kernel::OpenMP));
}

TEST_CASE("one gradient step descends both losses") {
  std::mt19937_64 rng(13);
  auto a = make_local(rng);
  const auto batch = make_batch(32, rng);
  const auto y = losses::local_critic_targets(a, batch);

  const auto c0 = losses::local_critic_loss(a, batch, y);
  nn::sgd_step(a.critic, c0.grads, 1e-3);
  CHECK(losses::local_critic_loss(a, batch, y).loss < c0.loss);

  const auto a0 = losses::local_actor_loss(a, batch);
  nn::sgd_step(a.actor, a0.grads, 1e-3);
  CHECK(losses::local_actor_loss(a, batch).loss < a0.loss);
}

TEST_CASE("empty batches and target mismatches are rejected") {
  std::mt19937_64 rng(14);
  auto a = make_local(rng);
  const auto batch = make_batch(4, rng);
  const std::vector<losses::Sample> empty;
  CHECK_THROWS(losses::local_critic_targets(a, empty));
  CHECK_THROWS(losses::local_actor_loss(a, empty));
  const std::vector<double> bad_targets(3, 0.0);
  CHECK_THROWS(losses::local_critic_loss(a, batch, bad_targets));
}
