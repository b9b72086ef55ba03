#include "comma/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <stdexcept>

#include <omp.h>

namespace comma::exp {

std::string controller_name(Controller c) {
  switch (c) {
    case Controller::FixedTime: return "fixed_time";
    case Controller::CommaDdpg: return "comma_ddpg";
    case Controller::LocalOnlyDdpg: return "local_only_ddpg";
  }
  return "unknown";
}

double ExperimentSpec::fixed_green() const {
  return fixed_green_s > 0.0 ? fixed_green_s : 0.5 * (scenario.green_min_s + scenario.green_max_s);
}

void ExperimentSpec::validate() const {
  scenario.validate();
  train_cfg.validate();
  if (eval_seeds.empty()) throw std::invalid_argument("experiment: eval_seeds must be nonempty");
  if (!(eval_horizon_s > 0.0)) throw std::invalid_argument("experiment: horizon must be > 0");
  const double g = fixed_green();
  if (g < scenario.green_min_s || g > scenario.green_max_s)
    throw std::invalid_argument("experiment: fixed green outside [D_min, D_max]");
}

namespace {

sim::Simulator make_sim(const sim::CorridorConfig& scenario, std::uint64_t seed) {
  auto cfg = scenario;
  cfg.seed = seed;
  return sim::Simulator(cfg);
}

ResultRow row_from_report(const std::string& name, std::uint64_t seed, const sim::SimReport& r) {
  ResultRow row;
  row.controller = name;
  row.seed = seed;
  row.waiting_time_s = r.total_wait_s;
  row.avg_speed_mps = r.avg_speed_mps;
  row.throughput = r.throughput;
  return row;
}

}  // namespace

ResultRow run_fixed_time(const sim::CorridorConfig& scenario, double green_s, double horizon_s,
                         std::uint64_t seed) {
  if (green_s < scenario.green_min_s || green_s > scenario.green_max_s)
    throw std::invalid_argument("fixed-time green outside [D_min, D_max]");
  auto s = make_sim(scenario, seed);
  const double dt = 1.0;
  for (double t = 0.0; t + 1e-9 < horizon_s; t += dt) {
    for (int m = 0; m < scenario.num_intersections; ++m)
      if (s.at_cycle_boundary(m, dt)) s.set_green_duration(m, green_s, dt);
    s.step(dt);
  }
  return row_from_report("fixed_time", seed, s.metrics_report());
}

EvalOutcome evaluate_local_policy(const sim::CorridorConfig& scenario,
                                  const std::vector<agents::LocalAgent>& locals,
                                  const agents::GlobalAgent* purity_probe, double horizon_s,
                                  std::uint64_t seed, std::unique_ptr<sim::Simulator>* keep_sim) {
  if (static_cast<int>(locals.size()) != scenario.num_intersections)
    throw std::invalid_argument("evaluate: agent count does not match scenario");
  const std::uint64_t calls_before = purity_probe ? purity_probe->actor_calls.load() : 0;
  auto s = std::make_unique<sim::Simulator>(make_sim(scenario, seed));
  s->record_trajectories(5.0);
  const double dt = 1.0;
  for (double t = 0.0; t + 1e-9 < horizon_s; t += dt) {
    for (int m = 0; m < scenario.num_intersections; ++m) {
      if (!s->at_cycle_boundary(m, dt)) continue;
      const auto obs = s->observe_local(m);
      s->set_green_duration(m, act_local(locals[m], obs), dt);
    }
    s->step(dt);
  }
  const auto report = s->metrics_report();
  EvalOutcome out;
  out.row = row_from_report("", seed, report);
  out.global_actor_calls = (purity_probe ? purity_probe->actor_calls.load() : 0) - calls_before;
  out.full_traversals_no_stop = report.full_traversals_no_stop;
  if (keep_sim) *keep_sim = std::move(s);
  return out;
}

namespace {

train::TrainResult train_controller(const ExperimentSpec& spec, Controller c,
                                    std::uint64_t seed) {
  auto cfg = spec.train_cfg;
  cfg.seed = seed;
  const auto scenario = spec.scenario;
  train::SimFactory factory = [scenario](std::uint64_t s) { return make_sim(scenario, s); };
  auto agents_set = train::make_agents(scenario, cfg);
  if (spec.pretrain) train::pretrain_from_fixed_time(agents_set, factory, spec.fixed_green(), cfg);
  train::GodOptions opts;
  opts.use_global = (c == Controller::CommaDdpg);
  return train::train(factory, std::move(agents_set), cfg, opts);
}

}  // namespace

std::vector<ResultRow> run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const auto n = spec.eval_seeds.size();
  std::vector<ResultRow> rows(n);
  const std::string name = controller_name(spec.controller);

#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(n); ++i) {
    const std::uint64_t seed = spec.eval_seeds[i];
    if (spec.controller == Controller::FixedTime) {
      rows[i] = run_fixed_time(spec.scenario, spec.fixed_green(), spec.eval_horizon_s, seed);
    } else {
      auto trained = train_controller(spec, spec.controller, seed);
      auto outcome = evaluate_local_policy(spec.scenario, trained.locals, &trained.global,
                                           spec.eval_horizon_s, seed);
      rows[i] = outcome.row;
      rows[i].controller = name;
    }
    rows[i].controller = name;
  }
  return rows;
}

std::vector<TauSweepRow> sweep_tau(const ExperimentSpec& spec) {
  spec.validate();
  struct Variant {
    std::string label;
    double lo, hi, fixed;
  };
  const std::vector<Variant> variants = {
      {"random(0,1)", 0.0, 1.0, -1.0},
      {"random(0.8,1)", 0.8, 1.0, -1.0},
      {"random(0.9,1)", 0.9, 1.0, -1.0},
      {"tau=0.995", -1.0, -1.0, 0.995},
  };
  std::vector<TauSweepRow> out;
  for (const auto& v : variants) {
    auto s = spec;
    s.controller = Controller::CommaDdpg;
    if (v.fixed > 0.0) {
      s.train_cfg.tau = v.fixed;
      s.train_cfg.tau_random_lo = -1.0;
    } else {
      s.train_cfg.tau_random_lo = v.lo;
      s.train_cfg.tau_random_hi = v.hi;
    }
    const auto rows = run_experiment(s);
    TauSweepRow r;
    r.tau_label = v.label;
    for (const auto& row : rows) {
      r.waiting_time_s += row.waiting_time_s / rows.size();
      r.avg_speed_mps += row.avg_speed_mps / rows.size();
    }
    out.push_back(r);
  }
  return out;
}

std::vector<PolicyModeRow> compare_policy_modes(const ExperimentSpec& spec) {
  spec.validate();
  std::vector<PolicyModeRow> out;
  for (bool on_policy : {true, false}) {
    auto s = spec;
    s.controller = Controller::CommaDdpg;
    s.train_cfg.clear_buffer_each_epoch = on_policy;
    const auto rows = run_experiment(s);
    PolicyModeRow r;
    r.mode = on_policy ? "on-policy" : "off-policy";
    for (const auto& row : rows) {
      r.waiting_time_s += row.waiting_time_s / rows.size();
      r.avg_speed_mps += row.avg_speed_mps / rows.size();
    }
    out.push_back(r);
  }
  return out;
}

void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  std::size_t m_count = 0;
  for (const auto& r : rows) m_count = std::max(m_count, r.throughput.size());
  os << "controller,seed,waiting_time_s,avg_speed_mps";
  for (std::size_t i = 0; i < m_count; ++i) os << ",thr_I" << i + 1;
  os << "\n";
  for (const auto& r : rows) {
    os << r.controller << "," << r.seed << "," << r.waiting_time_s << "," << r.avg_speed_mps;
    for (std::size_t i = 0; i < m_count; ++i)
      os << "," << (i < r.throughput.size() ? r.throughput[i] : 0.0);
    os << "\n";
  }
}

void write_summary(const std::filesystem::path& path, const std::vector<ResultRow>& rows) {
  std::map<std::string, std::vector<double>> waits, speeds;
  for (const auto& r : rows) {
    waits[r.controller].push_back(r.waiting_time_s);
    speeds[r.controller].push_back(r.avg_speed_mps);
  }
  const auto stats = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x / v.size();
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean) / v.size();
    return std::pair{mean, std::sqrt(var)};
  };
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  for (const auto& [name, v] : waits) {
    const auto [wm, ws] = stats(v);
    const auto [sm, ss] = stats(speeds[name]);
    os << name << " waiting_time_mean " << wm << " waiting_time_std " << ws
       << " avg_speed_mean " << sm << " avg_speed_std " << ss << " seeds " << v.size() << "\n";
  }
}

void export_time_space_csv(const sim::Simulator& s, const std::filesystem::path& path) {
  const auto& traj = s.trajectories();
  if (traj.empty()) throw std::runtime_error("time-space export: no trajectories recorded");
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  os << "vehicle_id,time_s,distance_m\n";
  for (const auto& p : traj) os << p.vehicle_id << "," << p.time_s << "," << p.distance_m << "\n";
}

void export_metrics_csv(const sim::Simulator& s, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  os << "sim_time_s,intersection,lane,stopped,phase,throughput,total_wait_s\n";
  for (const auto& r : s.metrics_log()) {
    const char* phase = r.phase == sim::Phase::Green   ? "G"
                        : r.phase == sim::Phase::Yellow ? "Y"
                                                        : "R";
    os << r.sim_time_s << "," << r.intersection << "," << r.lane << "," << r.stopped << ","
       << phase << "," << r.throughput << "," << r.total_wait_s << "\n";
  }
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace comma::exp
