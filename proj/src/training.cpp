#include "comma/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace comma::train {

double ExplorationSchedule::epsilon(int epoch) const {
  const int span = std::max(1, decay_epochs - 1);
  const double f = std::clamp(static_cast<double>(epoch - 1) / span, 0.0, 1.0);
  return eps_start + (eps_end - eps_start) * f;
}

bool ExplorationSchedule::explores(double p, int epoch) const {
  const double eps = epsilon(epoch);
  return literal_rule ? (p > eps) : (p < eps);
}

void TrainConfig::validate() const {
  if (epochs < 1 || episodes_per_epoch < 1 || minibatch < 1)
    throw std::invalid_argument("train config: counts must be positive");
  if (!(rollout_seconds > 0.0)) throw std::invalid_argument("train config: rollout_seconds must be > 0");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("train config: gamma must be in [0,1)");
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("train config: tau must be in [0,1]");
  if (critic_lr < 0.0 || actor_lr < 0.0) throw std::invalid_argument("train config: learning rates must be >= 0");
  if (!(decay_base > 0.0 && decay_base <= 1.0))
    throw std::invalid_argument("train config: decay_base must be in (0,1]");
}

ReplayBuffer::ReplayBuffer(int num_intersections, std::size_t capacity_per_store)
    : stores_(num_intersections), capacity_(capacity_per_store) {}

void ReplayBuffer::clear() {
  for (auto& s : stores_) s.clear();
}

void ReplayBuffer::add(int m, losses::Sample s) {
  auto& store = stores_.at(m);
  if (store.size() >= capacity_) store.erase(store.begin());
  store.push_back(std::move(s));
}

std::size_t ReplayBuffer::total_size() const {
  std::size_t n = 0;
  for (const auto& s : stores_) n += s.size();
  return n;
}

namespace {

std::vector<std::size_t> draw_without_replacement(std::size_t n, std::size_t k,
                                                  std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> d(i, n - 1);
    std::swap(idx[i], idx[d(rng)]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace

std::vector<losses::Sample> ReplayBuffer::sample_local(int m, int nb, std::mt19937_64& rng) const {
  const auto& store = stores_.at(m);
  if (store.size() < static_cast<std::size_t>(nb))
    throw std::runtime_error("replay buffer: insufficient data in B^" + std::to_string(m));
  std::vector<losses::Sample> batch;
  for (std::size_t i : draw_without_replacement(store.size(), nb, rng)) batch.push_back(store[i]);
  return batch;
}

std::vector<losses::Sample> ReplayBuffer::sample_union(int nb, std::mt19937_64& rng) const {
  const std::size_t total = total_size();
  if (total < static_cast<std::size_t>(nb))
    throw std::runtime_error("replay buffer: insufficient data in B");
  std::vector<losses::Sample> batch;
  for (std::size_t flat : draw_without_replacement(total, nb, rng)) {
    for (const auto& store : stores_) {
      if (flat < store.size()) {
        batch.push_back(store[flat]);
        break;
      }
      flat -= store.size();
    }
  }
  return batch;
}

namespace {

struct PendingTransition {
  losses::Sample sample;
  std::vector<double> wait_mark;
  bool have_reward = false;
};

// Shared rollout driver: runs the simulator for cfg.rollout_seconds, calling
// `choose(m, obs)` at each cycle boundary, and records (S, A, R, S')
// transitions with the per-cycle local reward and Eq.-(17)-style global
// reward over the cycle interval.
void run_rollout(sim::Simulator& s, const std::vector<agents::LocalAgent>& locals,
                 const TrainConfig& cfg, ReplayBuffer& buf,
                 const std::function<double(int, const std::vector<double>&)>& choose) {
  const int m_count = s.config().num_intersections;
  const double dt = 1.0;
  std::vector<std::optional<PendingTransition>> pending(m_count);
  std::vector<double> current_durations(m_count, s.config().green_min_s);

  const auto wait_snapshot = [&] {
    std::vector<double> w(m_count);
    for (int m = 0; m < m_count; ++m) w[m] = s.cum_wait_at(m);
    return w;
  };

  for (double t = 0.0; t + 1e-9 < cfg.rollout_seconds; t += dt) {
    std::vector<int> decided;
    std::vector<double> obs;
    for (int m = 0; m < m_count; ++m) {
      if (!s.at_cycle_boundary(m, dt)) continue;
      if (obs.empty()) obs = s.observe_local(m);
      if (pending[m] && pending[m]->have_reward) {
        auto& p = *pending[m];
        p.sample.next_obs = obs;
        double wait_sum = 0.0;
        for (int j = 0; j < m_count; ++j) wait_sum += s.cum_wait_at(j) - p.wait_mark[j];
        p.sample.global_reward = -(wait_sum / m_count) * cfg.global_reward_scale;
        buf.add(m, std::move(p.sample));
      }
      pending[m].reset();
      const double a = choose(m, obs);
      s.set_green_duration(m, a, dt);
      current_durations[m] = a;
      decided.push_back(m);
    }
    for (int m : decided) {
      PendingTransition p;
      p.sample.obs = obs;
      p.sample.actions_s = current_durations;
      p.sample.rewards.assign(m_count, 0.0);
      p.sample.time_s = s.sim_time();
      p.wait_mark = wait_snapshot();
      pending[m] = std::move(p);
    }
    s.step(dt);
    for (const auto& ev : s.last_events()) {
      const int m = ev.intersection;
      if (!pending[m]) continue;
      const auto which = ev.n_remaining > 0 ? agents::RewardCase::GreenEndTrafficLeft
                                            : agents::RewardCase::GreenOnNoTraffic;
      const auto& ag = locals[m];
      pending[m]->sample.rewards[m] = agents::local_reward(
          ev.n_remaining, std::min(ev.remnant_green_s, ag.g_max), which, ag.r_max, ag.n_max,
          ag.g_max);
      pending[m]->have_reward = true;
    }
  }
}

}  // namespace

CompetitionState generate_on_policy_data(sim::Simulator& s,
                                         std::vector<agents::LocalAgent>& locals,
                                         const agents::GlobalAgent* global,
                                         const TrainConfig& cfg, int epoch, ReplayBuffer& buf,
                                         std::mt19937_64& rng, const GodOptions& opts) {
  const int m_count = s.config().num_intersections;
  CompetitionState comp;
  comp.consecutive_global_picks.assign(m_count, 0);
  comp.w_global_raw.assign(m_count, 0.0);

  const bool with_global = opts.use_global && global != nullptr;
  if (with_global) {
    const auto w = agents::act_global(*global, s.observe_local(0)).weights;
    comp.w_global_raw = w;
  }
  if (opts.force_w_global) comp.w_global_raw.assign(m_count, *opts.force_w_global);
  if (cfg.decay_mode == DecayMode::Epoch) {
    const double beta = std::pow(cfg.decay_base, epoch);
    for (double& w : comp.w_global_raw) w *= beta;
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> noise(-cfg.schedule.noise_range_s,
                                               cfg.schedule.noise_range_s);
  const auto& scfg = s.config();

  const auto choose = [&](int m, const std::vector<double>& obs) {
    double w_g = comp.w_global_raw[m];
    if (cfg.decay_mode == DecayMode::Consecutive)
      w_g *= std::pow(cfg.decay_base, comp.consecutive_global_picks[m]);
    const double w_l = 1.0 - w_g;
    double a;
    if (with_global && w_g > w_l) {
      a = agents::act_global(*global, obs).durations_s[m];
      ++comp.consecutive_global_picks[m];
      ++comp.global_pick_count;
    } else {
      a = agents::act_local(locals[m], obs);
      if (cfg.decay_mode == DecayMode::Consecutive) comp.consecutive_global_picks[m] = 0;
      ++comp.local_pick_count;
    }
    if (cfg.schedule.explores(unit(rng), epoch)) a += noise(rng);
    return std::clamp(a, scfg.green_min_s, scfg.green_max_s);
  };

  run_rollout(s, locals, cfg, buf, choose);
  return comp;
}

namespace {
double effective_tau(const TrainConfig& cfg, std::mt19937_64& rng) {
  if (cfg.tau_random_lo < 0.0) return cfg.tau;
  std::uniform_real_distribution<double> d(cfg.tau_random_lo, cfg.tau_random_hi);
  return d(rng);
}
}  // namespace

UpdateResult update_local(const ReplayBuffer& buf, agents::LocalAgent& agent,
                          AgentOptimizers& opt, const TrainConfig& cfg, std::mt19937_64& rng) {
  const auto batch = buf.sample_local(agent.intersection, cfg.minibatch, rng);
  const auto targets = losses::local_critic_targets(agent, batch);
  UpdateResult res;
  auto cg = losses::local_critic_loss(agent, batch, targets, cfg.kernel);
  res.critic_loss = cg.loss;
  if (cfg.critic_lr > 0.0) opt.critic.step(agent.critic, cg.grads, cfg.critic_lr);
  auto ag = losses::local_actor_loss(agent, batch, cfg.kernel);
  res.actor_loss = ag.loss;
  if (cfg.actor_lr > 0.0) opt.actor.step(agent.actor, ag.grads, cfg.actor_lr);
  const double tau = effective_tau(cfg, rng);
  nn::soft_update(agent.target_critic, agent.critic, tau);
  nn::soft_update(agent.target_actor, agent.actor, tau);
  return res;
}

UpdateResult update_global(const ReplayBuffer& buf, agents::GlobalAgent& agent,
                           AgentOptimizers& opt, const TrainConfig& cfg, std::mt19937_64& rng) {
  const auto batch = buf.sample_union(cfg.minibatch, rng);
  const auto targets = losses::global_critic_targets(agent, batch);
  UpdateResult res;
  auto cg = losses::global_critic_loss(agent, batch, targets, cfg.kernel);
  res.critic_loss = cg.loss;
  if (cfg.critic_lr > 0.0) opt.critic.step(agent.critic, cg.grads, cfg.critic_lr);
  auto ag = losses::global_actor_loss(agent, batch, cfg.kernel);
  res.actor_loss = ag.loss;
  if (cfg.actor_lr > 0.0) opt.actor.step(agent.actor, ag.grads, cfg.actor_lr);
  const double tau = effective_tau(cfg, rng);
  nn::soft_update(agent.target_critic, agent.critic, tau);
  nn::soft_update(agent.target_actor, agent.actor, tau);
  return res;
}

namespace {

// Copies every layer whose weight/bias shapes agree between the two nets.
void copy_congruent_layers(nn::MlpParams& dst, const nn::MlpParams& src) {
  for (std::size_t l = 0; l < std::min(dst.weights.size(), src.weights.size()); ++l) {
    if (dst.weights[l].size() == src.weights[l].size() &&
        dst.biases[l].size() == src.biases[l].size()) {
      dst.weights[l] = src.weights[l];
      dst.biases[l] = src.biases[l];
    }
  }
}

}  // namespace

AgentSet make_agents(const sim::CorridorConfig& scenario, const TrainConfig& cfg) {
  const int m_count = scenario.num_intersections;
  const int obs_dim = m_count + scenario.total_lanes();
  agents::ActionBounds bounds{scenario.green_min_s, scenario.green_max_s};
  std::mt19937_64 rng(cfg.seed);
  AgentSet set{.locals = {}, .global = agents::GlobalAgent::make(obs_dim, m_count, bounds,
                                                                 cfg.hidden, rng)};
  set.global.gamma = cfg.gamma;
  for (int m = 0; m < m_count; ++m) {
    auto a = agents::LocalAgent::make(m, obs_dim, m_count, bounds, cfg.hidden, rng);
    a.gamma = cfg.gamma;
    a.n_max = static_cast<double>(scenario.lane_capacity) * scenario.lanes_per_intersection[m];
    // Local agents start from the global agent's weights where shapes permit.
    copy_congruent_layers(a.actor, set.global.actor);
    copy_congruent_layers(a.critic, set.global.critic);
    a.target_actor = a.actor;
    a.target_critic = a.critic;
    set.locals.push_back(std::move(a));
  }
  return set;
}

void pretrain_from_fixed_time(AgentSet& agents_set, const SimFactory& factory,
                              double fixed_green_s, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.pretrain_rollouts <= 0) return;
  const int m_count = agents_set.global.num_intersections;
  ReplayBuffer buf(m_count, cfg.buffer_capacity);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  for (int r = 0; r < cfg.pretrain_rollouts; ++r) {
    auto sim = factory(cfg.seed * 1000003ull + 777 + r);
    run_rollout(sim, agents_set.locals, cfg, buf,
                [&](int, const std::vector<double>&) { return fixed_green_s; });
  }

  std::vector<AgentOptimizers> local_opts;
  for (auto& a : agents_set.locals) local_opts.emplace_back(a.critic, a.actor, cfg.momentum);
  AgentOptimizers global_opt(agents_set.global.critic, agents_set.global.actor, cfg.momentum);
  const auto& bounds = agents_set.global.bounds;
  const double range = bounds.d_max - bounds.d_min;

  for (int it = 0; it < cfg.pretrain_updates; ++it) {
    for (int m = 0; m < m_count; ++m) {
      if (buf.size(m) < static_cast<std::size_t>(cfg.minibatch)) continue;
      auto& agent = agents_set.locals[m];
      const auto batch = buf.sample_local(m, cfg.minibatch, rng);
      const auto targets = losses::local_critic_targets(agent, batch);
      auto cg = losses::local_critic_loss(agent, batch, targets, cfg.kernel);
      if (cfg.critic_lr > 0.0) local_opts[m].critic.step(agent.critic, cg.grads, cfg.critic_lr);
      // Supervised actor regression toward the fixed duration.
      auto ag = nn::GradientSet::zeros_like(agent.actor);
      for (const auto& s : batch) {
        nn::ForwardCache cache;
        const auto raw = nn::forward(agent.actor, s.obs, cache);
        const double err = (agents::squash_duration(raw[0], bounds) - fixed_green_s) / range;
        const double og[1] = {err};
        ag.accumulate(nn::backward(agent.actor, cache, og));
      }
      ag.scale(1.0 / cfg.minibatch);
      if (cfg.critic_lr > 0.0) local_opts[m].actor.step(agent.actor, ag, cfg.critic_lr);
      nn::soft_update(agent.target_critic, agent.critic, cfg.tau);
      nn::soft_update(agent.target_actor, agent.actor, cfg.tau);
    }
    if (buf.total_size() >= static_cast<std::size_t>(cfg.minibatch)) {
      auto& g = agents_set.global;
      const auto batch = buf.sample_union(cfg.minibatch, rng);
      const auto targets = losses::global_critic_targets(g, batch);
      auto cg = losses::global_critic_loss(g, batch, targets, cfg.kernel);
      if (cfg.critic_lr > 0.0) global_opt.critic.step(g.critic, cg.grads, cfg.critic_lr);
      auto ag = nn::GradientSet::zeros_like(g.actor);
      for (const auto& s : batch) {
        nn::ForwardCache cache;
        const auto raw = nn::forward(g.actor, s.obs, cache);
        std::vector<double> og(2 * m_count, 0.0);
        for (int j = 0; j < m_count; ++j)
          og[j] = (agents::squash_duration(raw[j], bounds) - fixed_green_s) / range;
        ag.accumulate(nn::backward(g.actor, cache, og));
      }
      ag.scale(1.0 / cfg.minibatch);
      if (cfg.critic_lr > 0.0) global_opt.actor.step(g.actor, ag, cfg.critic_lr);
      nn::soft_update(g.target_critic, g.critic, cfg.tau);
      nn::soft_update(g.target_actor, g.actor, cfg.tau);
    }
  }
}

TrainResult train(const SimFactory& factory, AgentSet agents_set, const TrainConfig& cfg,
                  const GodOptions& god_opts) {
  cfg.validate();
  const int m_count = agents_set.global.num_intersections;
  std::mt19937_64 rng(cfg.seed);
  ReplayBuffer buf(m_count, cfg.buffer_capacity);

  std::vector<AgentOptimizers> local_opts;
  for (auto& a : agents_set.locals) local_opts.emplace_back(a.critic, a.actor, cfg.momentum);
  AgentOptimizers global_opt(agents_set.global.critic, agents_set.global.actor, cfg.momentum);

  TrainResult result{.locals = {}, .global = agents_set.global.clone(), .metrics = {},
                     .last_competition = {}};
  std::vector<EpochMetrics> metrics;
  CompetitionState comp;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.clear_buffer_each_epoch) buf.clear();
    auto sim = factory(cfg.seed * 1000003ull + static_cast<std::uint64_t>(epoch));
    comp = generate_on_policy_data(sim, agents_set.locals,
                                   god_opts.use_global ? &agents_set.global : nullptr, cfg,
                                   epoch, buf, rng, god_opts);
    const auto report = sim.metrics_report();

    EpochMetrics em;
    em.epoch = epoch;
    em.total_wait_s = report.total_wait_s;
    em.avg_speed_mps = report.avg_speed_mps;
    for (double t : report.throughput) em.throughput_total += t;

    double critic_acc = 0.0, actor_acc = 0.0, gcritic_acc = 0.0;
    std::int64_t n_local = 0, n_global = 0;
    for (int episode = 0; episode < cfg.episodes_per_epoch; ++episode) {
      for (int m = 0; m < m_count; ++m) {
        if (buf.size(m) < static_cast<std::size_t>(cfg.minibatch)) continue;
        const auto r = update_local(buf, agents_set.locals[m], local_opts[m], cfg, rng);
        critic_acc += r.critic_loss;
        actor_acc += r.actor_loss;
        ++n_local;
      }
      if (god_opts.use_global && buf.total_size() >= static_cast<std::size_t>(cfg.minibatch)) {
        const auto r = update_global(buf, agents_set.global, global_opt, cfg, rng);
        gcritic_acc += r.critic_loss;
        ++n_global;
      }
    }
    if (n_local > 0) {
      em.critic_loss_mean = critic_acc / n_local;
      em.actor_loss_mean = actor_acc / n_local;
    }
    if (n_global > 0) em.global_critic_loss = gcritic_acc / n_global;
    metrics.push_back(em);
  }

  result.locals = std::move(agents_set.locals);
  result.global = agents_set.global.clone();
  result.metrics = std::move(metrics);
  result.last_competition = comp;
  return result;
}

}  // namespace comma::train
