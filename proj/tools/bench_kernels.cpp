// Benchmarks the serial gradient kernels against the OpenMP ones on a
// synthetic replay batch and checks that the results agree bitwise.

#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#include <omp.h>

#include "comma/agents.hpp"
#include "comma/losses.hpp"

using namespace comma;
using Clock = std::chrono::steady_clock;

namespace {

std::vector<losses::Sample> make_batch(int n, int obs_dim, int m_count, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> dur(15.0, 90.0);
  std::vector<losses::Sample> batch(n);
  for (auto& s : batch) {
    s.obs.resize(obs_dim);
    s.next_obs.resize(obs_dim);
    for (auto& x : s.obs) x = u(rng);
    for (auto& x : s.next_obs) x = u(rng);
    s.actions_s.resize(m_count);
    for (auto& a : s.actions_s) a = dur(rng);
    s.rewards.assign(m_count, u(rng));
    s.global_reward = u(rng);
  }
  return batch;
}

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  const int batch_size = argc > 1 ? std::atoi(argv[1]) : 4096;
  const int reps = argc > 2 ? std::atoi(argv[2]) : 20;
  const int m_count = 5;
  const int obs_dim = 23;

  std::mt19937_64 rng(11);
  agents::ActionBounds b;
  auto local = agents::LocalAgent::make(2, obs_dim, m_count, b, {128, 128}, rng);
  const auto batch = make_batch(batch_size, obs_dim, m_count, rng);
  const auto targets = losses::local_critic_targets(local, batch);

  std::printf("batch %d, reps %d, threads %d\n", batch_size, reps, omp_get_max_threads());
  for (const char* name : {"critic", "actor"}) {
    const bool is_critic = name[0] == 'c';
    double serial_ms = 0.0, omp_ms = 0.0;
    losses::LossGrad ref, par;
    for (int r = 0; r < reps; ++r) {
      auto t0 = Clock::now();
      ref = is_critic ? losses::local_critic_loss(local, batch, targets, losses::Kernel::Serial)
                      : losses::local_actor_loss(local, batch, losses::Kernel::Serial);
      serial_ms += ms_since(t0);
      t0 = Clock::now();
      par = is_critic ? losses::local_critic_loss(local, batch, targets, losses::Kernel::OpenMP)
                      : losses::local_actor_loss(local, batch, losses::Kernel::OpenMP);
      omp_ms += ms_since(t0);
    }
    bool identical = ref.loss == par.loss;
    for (std::size_t l = 0; identical && l < ref.grads.weights.size(); ++l)
      identical = ref.grads.weights[l] == par.grads.weights[l] &&
                  ref.grads.biases[l] == par.grads.biases[l];
    std::printf("%-6s serial %8.2f ms  openmp %8.2f ms  speedup %5.2fx  bitwise %s\n", name,
                serial_ms / reps, omp_ms / reps, serial_ms / omp_ms,
                identical ? "equal" : "DIFFERENT");
    if (!identical) return 1;
  }
  return 0;
}
