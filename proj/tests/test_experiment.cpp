#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "comma/config_file.hpp"
#include "comma/experiment.hpp"

using namespace comma;
namespace fs = std::filesystem;

namespace {

sim::CorridorConfig small_corridor() {
  auto c = sim::CorridorConfig::uniform(2, {2, 2});
  c.arrival_rate_vph[0][0] = 700.0;
  c.arrival_rate_vph[0][1] = 200.0;
  c.arrival_rate_vph[1][1] = 200.0;
  return c;
}

exp::ExperimentSpec quick_spec() {
  exp::ExperimentSpec s;
  s.scenario = small_corridor();
  s.eval_horizon_s = 900.0;
  s.eval_seeds = {1, 2};
  s.train_cfg.epochs = 1;
  s.train_cfg.episodes_per_epoch = 2;
  s.train_cfg.rollout_seconds = 900.0;
  s.train_cfg.minibatch = 4;
  s.train_cfg.hidden = {8};
  s.train_cfg.pretrain_updates = 50;
  s.pretrain = false;
  return s;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream is(p);
  REQUIRE(is.good());
  std::vector<std::string> lines;
  std::string l;
  while (std::getline(is, l)) lines.push_back(l);
  return lines;
}

}  // namespace

TEST_CASE("fixed-time runner reproduces a plain simulator loop") {
  auto scenario = small_corridor();
  const auto row = exp::run_fixed_time(scenario, 30.0, 600.0, 7);

  auto c = scenario;
  c.seed = 7;
  sim::Simulator s(c);
  for (double t = 0.0; t + 1e-9 < 600.0; t += 1.0) {
    for (int m = 0; m < 2; ++m)
      if (s.at_cycle_boundary(m, 1.0)) s.set_green_duration(m, 30.0, 1.0);
    s.step(1.0);
  }
  const auto r = s.metrics_report();
  CHECK(row.controller == "fixed_time");
  CHECK(row.seed == 7);
  CHECK(row.waiting_time_s == r.total_wait_s);
  CHECK(row.avg_speed_mps == r.avg_speed_mps);
  REQUIRE(row.throughput.size() == 2);
  CHECK(row.throughput[0] == r.throughput[0]);

  CHECK_THROWS(exp::run_fixed_time(scenario, 5.0, 600.0, 7));  // below D_min
}

TEST_CASE("the midpoint default fixed green and spec validation") {
  auto spec = quick_spec();
  CHECK(spec.fixed_green() == doctest::Approx(0.5 * (15.0 + 90.0)));
  spec.fixed_green_s = 40.0;
  CHECK(spec.fixed_green() == 40.0);
  spec.fixed_green_s = 10.0;
  CHECK_THROWS(spec.validate());
  spec = quick_spec();
  spec.eval_seeds.clear();
  CHECK_THROWS(spec.validate());
  spec = quick_spec();
  spec.eval_horizon_s = 0.0;
  CHECK_THROWS(spec.validate());
}

TEST_CASE("evaluation never calls the global actor") {
  auto spec = quick_spec();
  auto cfg = spec.train_cfg;
  auto set = train::make_agents(spec.scenario, cfg);
  const auto global = set.global.clone();
  auto outcome =
      exp::evaluate_local_policy(spec.scenario, set.locals, &global, 600.0, 3);
  CHECK(outcome.global_actor_calls == 0);
  CHECK(outcome.row.waiting_time_s >= 0.0);

  // Wrong agent count is rejected.
  std::vector<agents::LocalAgent> one;
  one.push_back(std::move(set.locals[0]));
  CHECK_THROWS(exp::evaluate_local_policy(spec.scenario, one, nullptr, 600.0, 3));
}

TEST_CASE("experiment runner uses paired seeds and labels controllers") {
  auto spec = quick_spec();
  spec.controller = exp::Controller::FixedTime;
  const auto rows = exp::run_experiment(spec);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].seed == 1);
  CHECK(rows[1].seed == 2);
  for (const auto& r : rows) CHECK(r.controller == "fixed_time");

  // Re-running yields identical numbers: evaluation is deterministic.
  const auto rows2 = exp::run_experiment(spec);
  for (std::size_t i = 0; i < rows.size(); ++i)
    CHECK(rows[i].waiting_time_s == rows2[i].waiting_time_s);
}

TEST_CASE("trained controllers produce rows for every seed") {
  auto spec = quick_spec();
  spec.controller = exp::Controller::LocalOnlyDdpg;
  const auto rows = exp::run_experiment(spec);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.controller == "local_only_ddpg");
    CHECK(r.waiting_time_s >= 0.0);
    CHECK(r.throughput.size() == 2);
  }
}

TEST_CASE("results CSV has the documented header and one row per result") {
  std::vector<exp::ResultRow> rows(2);
  rows[0] = {.controller = "fixed_time", .seed = 1, .waiting_time_s = 10.5,
             .avg_speed_mps = 3.25, .throughput = {4.0, 5.0}};
  rows[1] = {.controller = "comma_ddpg", .seed = 2, .waiting_time_s = 7.0,
             .avg_speed_mps = 4.0, .throughput = {6.0, 7.0}};
  const fs::path p = fs::temp_directory_path() / "comma_results.csv";
  exp::write_results_csv(p, rows);
  const auto lines = read_lines(p);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "controller,seed,waiting_time_s,avg_speed_mps,thr_I1,thr_I2");
  CHECK(lines[1] == "fixed_time,1,10.5,3.25,4,5");
  CHECK(lines[2] == "comma_ddpg,2,7,4,6,7");
  fs::remove(p);
}

TEST_CASE("summary reports mean and standard deviation per controller") {
  std::vector<exp::ResultRow> rows(2);
  rows[0] = {.controller = "fixed_time", .seed = 1, .waiting_time_s = 10.0,
             .avg_speed_mps = 2.0, .throughput = {}};
  rows[1] = {.controller = "fixed_time", .seed = 2, .waiting_time_s = 14.0,
             .avg_speed_mps = 4.0, .throughput = {}};
  const fs::path p = fs::temp_directory_path() / "comma_summary.txt";
  exp::write_summary(p, rows);
  const auto lines = read_lines(p);
  REQUIRE(lines.size() == 1);
  CHECK(lines[0].find("fixed_time") != std::string::npos);
  CHECK(lines[0].find("waiting_time_mean 12") != std::string::npos);
  CHECK(lines[0].find("waiting_time_std 2") != std::string::npos);
  CHECK(lines[0].find("seeds 2") != std::string::npos);
  fs::remove(p);
}

TEST_CASE("time-space and metrics CSV exports carry the documented headers") {
  auto scenario = small_corridor();
  scenario.seed = 5;
  sim::Simulator s(scenario);
  s.record_trajectories(5.0);
  s.record_metrics_log(true);
  for (double t = 0.0; t < 600.0; t += 1.0) {
    for (int m = 0; m < 2; ++m)
      if (s.at_cycle_boundary(m, 1.0)) s.set_green_duration(m, 30.0, 1.0);
    s.step(1.0);
  }
  const fs::path ts = fs::temp_directory_path() / "comma_ts.csv";
  const fs::path mx = fs::temp_directory_path() / "comma_mx.csv";
  exp::export_time_space_csv(s, ts);
  exp::export_metrics_csv(s, mx);
  CHECK(read_lines(ts)[0] == "vehicle_id,time_s,distance_m");
  const auto m_lines = read_lines(mx);
  CHECK(m_lines[0] == "sim_time_s,intersection,lane,stopped,phase,throughput,total_wait_s");
  CHECK(m_lines.size() > 1);
  fs::remove(ts);
  fs::remove(mx);

  sim::Simulator bare(scenario);
  CHECK_THROWS(exp::export_time_space_csv(bare, ts));  // nothing recorded
}

TEST_CASE("median helper") {
  CHECK(exp::median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(exp::median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(exp::median({5.0}) == 5.0);
  CHECK_THROWS(exp::median({}));
}

TEST_CASE("config files populate the corridor and training setups") {
  const std::string text = R"(
# corridor under test
[corridor]
intersections = 3
lanes = 3
main_lanes = 2
cycle_length_s = 110
yellow_s = 4
link_length_m = 250
main_arrival_vph = 500
main_arrival_downstream_vph = 250
cross_arrival_vph = 120
green_min_s = 10
green_max_s = 80
lane_capacity = 30
turn_through = 0.8

[train]
epochs = 7
minibatch = 16
gamma = 0.85
tau = 0.9
decay_mode = epoch
on_policy = 0
hidden = 32 32
kernel = openmp
)";
  const auto f = cfg::ConfigFile::parse_string(text);
  const auto c = cfg::corridor_from_config(f);
  CHECK(c.num_intersections == 3);
  CHECK(c.lanes_per_intersection == std::vector<int>{3, 3, 3});
  CHECK(c.main_lanes_per_intersection == std::vector<int>{2, 2, 2});
  CHECK(c.cycle_length_s[0] == 110.0);
  CHECK(c.yellow_s == 4.0);
  CHECK(c.link_length_m.size() == 2);
  CHECK(c.arrival_rate_vph[0][0] == 500.0);   // main source at the first junction
  CHECK(c.arrival_rate_vph[1][0] == 250.0);   // downstream main lanes have their own source
  CHECK(c.arrival_rate_vph[1][2] == 120.0);   // cross lanes everywhere
  CHECK(c.green_min_s == 10.0);
  CHECK(c.turn_fractions[0][0] == doctest::Approx(0.8));

  const auto t = cfg::train_from_config(f);
  CHECK(t.epochs == 7);
  CHECK(t.minibatch == 16);
  CHECK(t.gamma == 0.85);
  CHECK(t.tau == 0.9);
  CHECK(t.decay_mode == train::DecayMode::Epoch);
  CHECK(!t.clear_buffer_each_epoch);
  CHECK(t.hidden == std::vector<int>{32, 32});
  CHECK(t.kernel == losses::Kernel::OpenMP);
}

TEST_CASE("config parse failures carry diagnostics") {
  CHECK_THROWS(cfg::ConfigFile::parse_string("[broken\nkey = 1\n"));
  CHECK_THROWS(cfg::ConfigFile::parse_string("keyvalue\n"));
  const auto f = cfg::ConfigFile::parse_string("[train]\ngamma = oops\n");
  CHECK_THROWS(cfg::train_from_config(f));
  const auto g = cfg::ConfigFile::parse_string("[train]\ndecay_mode = sometimes\n");
  CHECK_THROWS(cfg::train_from_config(g));
  CHECK_THROWS(cfg::ConfigFile::parse("/nonexistent/path.ini"));
}
