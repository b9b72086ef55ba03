#include "comma/agents.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace comma::agents {

namespace {

std::vector<int> with_ends(int in, std::vector<int> hidden, int out) {
  std::vector<int> sizes;
  sizes.push_back(in);
  for (int h : hidden) sizes.push_back(h);
  sizes.push_back(out);
  return sizes;
}

}  // namespace

LocalAgent LocalAgent::make(int m, int obs_dim, int num_intersections, const ActionBounds& b,
                            std::vector<int> hidden, std::mt19937_64& rng) {
  LocalAgent a;
  a.intersection = m;
  a.bounds = b;
  a.g_max = b.d_max;
  a.actor = nn::MlpParams::random_init(with_ends(obs_dim, hidden, 1),
                                       nn::OutputActivation::Tanh, rng);
  a.critic = nn::MlpParams::random_init(with_ends(obs_dim + num_intersections, hidden, 1),
                                        nn::OutputActivation::Affine, rng);
  a.target_actor = a.actor;
  a.target_critic = a.critic;
  return a;
}

GlobalAgent GlobalAgent::make(int obs_dim, int num_intersections, const ActionBounds& b,
                              std::vector<int> hidden, std::mt19937_64& rng) {
  GlobalAgent a;
  a.bounds = b;
  a.num_intersections = num_intersections;
  a.actor = nn::MlpParams::random_init(with_ends(obs_dim, hidden, 2 * num_intersections),
                                       nn::OutputActivation::Tanh, rng);
  a.critic = nn::MlpParams::random_init(with_ends(obs_dim + num_intersections, hidden, 1),
                                        nn::OutputActivation::Affine, rng);
  a.target_actor = a.actor;
  a.target_critic = a.critic;
  return a;
}

GlobalAgent GlobalAgent::clone() const {
  GlobalAgent a;
  a.actor = actor;
  a.critic = critic;
  a.target_actor = target_actor;
  a.target_critic = target_critic;
  a.gamma = gamma;
  a.bounds = bounds;
  a.num_intersections = num_intersections;
  a.actor_calls.store(actor_calls.load());
  return a;
}

std::vector<double> critic_input(std::span<const double> obs, std::span<const double> actions_s,
                                 const ActionBounds& b) {
  std::vector<double> x(obs.begin(), obs.end());
  const double range = b.d_max - b.d_min;
  for (double a : actions_s) x.push_back(range > 0.0 ? (a - b.d_min) / range : 0.0);
  return x;
}

double act_local(const LocalAgent& agent, std::span<const double> obs) {
  const auto out = nn::forward(agent.actor, obs);
  return squash_duration(out[0], agent.bounds);
}

GlobalAction act_global(const GlobalAgent& agent, std::span<const double> obs) {
  agent.actor_calls.fetch_add(1, std::memory_order_relaxed);
  const auto out = nn::forward(agent.actor, obs);
  const int m = agent.num_intersections;
  GlobalAction act;
  for (int i = 0; i < m; ++i) act.durations_s.push_back(squash_duration(out[i], agent.bounds));
  for (int i = 0; i < m; ++i) act.weights.push_back(unit_interval(out[m + i]));
  return act;
}

void save_local_agent(const LocalAgent& a, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nn::save_params(a.actor, dir / "actor.ckpt");
  nn::save_params(a.critic, dir / "critic.ckpt");
  nn::save_params(a.target_actor, dir / "target_actor.ckpt");
  nn::save_params(a.target_critic, dir / "target_critic.ckpt");
  std::ofstream os(dir / "meta.txt");
  os << "intersection " << a.intersection << "\n"
     << "gamma " << a.gamma << "\n"
     << "r_max " << a.r_max << "\n"
     << "n_max " << a.n_max << "\n"
     << "g_max " << a.g_max << "\n"
     << "d_min " << a.bounds.d_min << "\n"
     << "d_max " << a.bounds.d_max << "\n";
  if (!os) throw std::runtime_error("agent save: cannot write " + (dir / "meta.txt").string());
}

LocalAgent load_local_agent(const std::filesystem::path& dir) {
  LocalAgent a;
  a.actor = nn::load_params(dir / "actor.ckpt");
  a.critic = nn::load_params(dir / "critic.ckpt");
  a.target_actor = nn::load_params(dir / "target_actor.ckpt");
  a.target_critic = nn::load_params(dir / "target_critic.ckpt");
  std::ifstream is(dir / "meta.txt");
  if (!is) throw std::runtime_error("agent load: cannot open " + (dir / "meta.txt").string());
  std::string key;
  double val;
  while (is >> key >> val) {
    if (key == "intersection") a.intersection = static_cast<int>(val);
    else if (key == "gamma") a.gamma = val;
    else if (key == "r_max") a.r_max = val;
    else if (key == "n_max") a.n_max = val;
    else if (key == "g_max") a.g_max = val;
    else if (key == "d_min") a.bounds.d_min = val;
    else if (key == "d_max") a.bounds.d_max = val;
  }
  return a;
}

}  // namespace comma::agents
