#include "comma/config_file.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace comma::cfg {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

ConfigFile ConfigFile::parse(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_string(ss.str());
}

ConfigFile ConfigFile::parse_string(const std::string& text) {
  ConfigFile f;
  std::istringstream is(text);
  std::string line, section = "global";
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::runtime_error("config: malformed section at line " + std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: expected key=value at line " + std::to_string(lineno));
    f.sections_[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return f;
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key) > 0;
}

std::string ConfigFile::get_str(const std::string& section, const std::string& key,
                                const std::string& fallback) const {
  const auto s = sections_.find(section);
  if (s == sections_.end()) return fallback;
  const auto k = s->second.find(key);
  return k == s->second.end() ? fallback : k->second;
}

double ConfigFile::get_num(const std::string& section, const std::string& key,
                           double fallback) const {
  const auto v = get_str(section, key, "");
  if (v.empty()) return fallback;
  try {
    return std::stod(v);
  } catch (const std::exception&) {
    throw std::runtime_error("config: " + section + "." + key + " is not a number: " + v);
  }
}

std::vector<double> ConfigFile::get_list(const std::string& section, const std::string& key) const {
  std::vector<double> out;
  std::istringstream is(get_str(section, key, ""));
  double v;
  while (is >> v) out.push_back(v);
  return out;
}

sim::CorridorConfig corridor_from_config(const ConfigFile& f) {
  const int m = static_cast<int>(f.get_num("corridor", "intersections", 5));
  std::vector<int> lanes;
  for (double v : f.get_list("corridor", "lanes")) lanes.push_back(static_cast<int>(v));
  if (lanes.empty()) lanes.assign(m, 3);
  if (static_cast<int>(lanes.size()) == 1 && m > 1) lanes.assign(m, lanes[0]);
  auto c = sim::CorridorConfig::uniform(m, lanes);

  auto mains = f.get_list("corridor", "main_lanes");
  if (!mains.empty()) {
    c.main_lanes_per_intersection.clear();
    for (double v : mains) c.main_lanes_per_intersection.push_back(static_cast<int>(v));
    if (c.main_lanes_per_intersection.size() == 1 && m > 1)
      c.main_lanes_per_intersection.assign(m, c.main_lanes_per_intersection[0]);
  }
  const double cycle = f.get_num("corridor", "cycle_length_s", 120.0);
  c.cycle_length_s.assign(m, cycle);
  auto cycles = f.get_list("corridor", "cycle_lengths_s");
  if (static_cast<int>(cycles.size()) == m) c.cycle_length_s = cycles;
  c.yellow_s = f.get_num("corridor", "yellow_s", 5.0);
  const double link = f.get_num("corridor", "link_length_m", 300.0);
  c.link_length_m.assign(std::max(0, m - 1), link);
  c.free_flow_speed_mps = f.get_num("corridor", "free_flow_speed_mps", 13.9);
  c.saturation_headway_s = f.get_num("corridor", "saturation_headway_s", 2.0);
  c.green_min_s = f.get_num("corridor", "green_min_s", 15.0);
  c.green_max_s = f.get_num("corridor", "green_max_s", 90.0);
  c.stop_speed_threshold_mps = f.get_num("corridor", "stop_speed_threshold_mps", 3.0 / 3.6);
  c.lane_capacity = static_cast<int>(f.get_num("corridor", "lane_capacity", 40));
  c.seed = static_cast<std::uint64_t>(f.get_num("corridor", "seed", 0));

  const double main_vph = f.get_num("corridor", "main_arrival_vph", 0.0);
  const double main_down_vph = f.get_num("corridor", "main_arrival_downstream_vph", 0.0);
  const double cross_vph = f.get_num("corridor", "cross_arrival_vph", 0.0);
  for (int i = 0; i < m; ++i)
    for (int lane = 0; lane < c.lanes_per_intersection[i]; ++lane)
      c.arrival_rate_vph[i][lane] = lane < c.main_lanes_per_intersection[i]
                                        ? (i == 0 ? main_vph : main_down_vph)
                                        : cross_vph;

  const double through = f.get_num("corridor", "turn_through", 0.9);
  for (auto& tf : c.turn_fractions) tf = {through, (1.0 - through) / 2.0, (1.0 - through) / 2.0};
  c.validate();
  return c;
}

train::TrainConfig train_from_config(const ConfigFile& f) {
  train::TrainConfig t;
  t.epochs = static_cast<int>(f.get_num("train", "epochs", t.epochs));
  t.episodes_per_epoch =
      static_cast<int>(f.get_num("train", "episodes_per_epoch", t.episodes_per_epoch));
  t.rollout_seconds = f.get_num("train", "rollout_seconds", t.rollout_seconds);
  t.minibatch = static_cast<int>(f.get_num("train", "minibatch", t.minibatch));
  t.gamma = f.get_num("train", "gamma", t.gamma);
  t.tau = f.get_num("train", "tau", t.tau);
  t.critic_lr = f.get_num("train", "critic_lr", t.critic_lr);
  t.actor_lr = f.get_num("train", "actor_lr", t.actor_lr);
  t.momentum = f.get_num("train", "momentum", t.momentum);
  t.global_reward_scale = f.get_num("train", "global_reward_scale", t.global_reward_scale);
  t.decay_base = f.get_num("train", "decay_base", t.decay_base);
  const auto mode = f.get_str("train", "decay_mode", "consecutive");
  if (mode == "epoch") t.decay_mode = train::DecayMode::Epoch;
  else if (mode == "consecutive") t.decay_mode = train::DecayMode::Consecutive;
  else throw std::runtime_error("config: decay_mode must be 'consecutive' or 'epoch'");
  t.clear_buffer_each_epoch = f.get_num("train", "on_policy", 1.0) != 0.0;
  t.seed = static_cast<std::uint64_t>(f.get_num("train", "seed", 0));
  t.schedule.eps_start = f.get_num("train", "eps_start", t.schedule.eps_start);
  t.schedule.eps_end = f.get_num("train", "eps_end", t.schedule.eps_end);
  t.schedule.decay_epochs = static_cast<int>(f.get_num("train", "eps_decay_epochs", t.epochs));
  t.schedule.noise_range_s = f.get_num("train", "noise_range_s", t.schedule.noise_range_s);
  t.schedule.literal_rule = f.get_num("train", "literal_epsilon_rule", 0.0) != 0.0;
  t.pretrain_rollouts = static_cast<int>(f.get_num("train", "pretrain_rollouts", t.pretrain_rollouts));
  t.pretrain_updates = static_cast<int>(f.get_num("train", "pretrain_updates", t.pretrain_updates));
  auto hidden = f.get_list("train", "hidden");
  if (!hidden.empty()) {
    t.hidden.clear();
    for (double h : hidden) t.hidden.push_back(static_cast<int>(h));
  }
  if (f.get_str("train", "kernel", "serial") == "openmp") t.kernel = losses::Kernel::OpenMP;
  t.validate();
  return t;
}

}  // namespace comma::cfg
