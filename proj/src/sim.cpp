#include "comma/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace comma::sim {

namespace {

[[noreturn]] void bad_config(const std::string& what) {
  throw std::invalid_argument("corridor config: " + what);
}

struct Fnv1a {
  std::uint64_t h = 14695981039346656037ull;
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  }
  void f64(double v) { bytes(&v, sizeof v); }
  void i64(std::int64_t v) { bytes(&v, sizeof v); }
};

}  // namespace

CorridorConfig CorridorConfig::uniform(int m, std::vector<int> lanes) {
  CorridorConfig c;
  c.num_intersections = m;
  c.lanes_per_intersection = std::move(lanes);
  for (int n : c.lanes_per_intersection)
    c.main_lanes_per_intersection.push_back(n > 1 ? n - 1 : 1);
  c.cycle_length_s.assign(m, 120.0);
  c.link_length_m.assign(m > 1 ? m - 1 : 0, 300.0);
  for (int n : c.lanes_per_intersection) c.arrival_rate_vph.emplace_back(n, 0.0);
  c.turn_fractions.assign(m, {0.9, 0.05, 0.05});
  return c;
}

int CorridorConfig::total_lanes() const {
  int n = 0;
  for (int l : lanes_per_intersection) n += l;
  return n;
}

void CorridorConfig::validate() const {
  const int m = num_intersections;
  if (m < 1) bad_config("M must be >= 1");
  if (static_cast<int>(lanes_per_intersection.size()) != m)
    bad_config("lanes_per_intersection must have M entries");
  if (static_cast<int>(main_lanes_per_intersection.size()) != m)
    bad_config("main_lanes_per_intersection must have M entries");
  for (int i = 0; i < m; ++i) {
    if (lanes_per_intersection[i] < 1) bad_config("every N_lane must be >= 1");
    if (main_lanes_per_intersection[i] < 1 ||
        main_lanes_per_intersection[i] > lanes_per_intersection[i])
      bad_config("main lane count must be in [1, N_lane]");
  }
  if (static_cast<int>(cycle_length_s.size()) != m) bad_config("cycle_length_s must have M entries");
  if (!(green_min_s > 0.0)) bad_config("green_min_s must be > 0");
  if (green_min_s > green_max_s) bad_config("green_min_s must be <= green_max_s");
  if (yellow_s < 0.0) bad_config("yellow_s must be >= 0");
  for (double c : cycle_length_s)
    if (!(green_max_s + yellow_s < c)) bad_config("green_max_s + yellow_s must be < cycle_length_s");
  if (static_cast<int>(link_length_m.size()) != std::max(0, m - 1))
    bad_config("link_length_m must have M-1 entries");
  for (double l : link_length_m)
    if (!(l > 0.0)) bad_config("link lengths must be > 0");
  if (!(free_flow_speed_mps > 0.0)) bad_config("free_flow_speed_mps must be > 0");
  if (!(saturation_headway_s > 0.0)) bad_config("saturation_headway_s must be > 0");
  if (!(stop_speed_threshold_mps > 0.0)) bad_config("stop_speed_threshold_mps must be > 0");
  if (lane_capacity < 1) bad_config("lane_capacity must be >= 1");
  if (static_cast<int>(arrival_rate_vph.size()) != m) bad_config("arrival_rate_vph must have M entries");
  for (int i = 0; i < m; ++i) {
    if (static_cast<int>(arrival_rate_vph[i].size()) != lanes_per_intersection[i])
      bad_config("arrival_rate_vph row length must equal N_lane");
    for (double r : arrival_rate_vph[i])
      if (r < 0.0) bad_config("arrival rates must be >= 0");
  }
  if (static_cast<int>(turn_fractions.size()) != m) bad_config("turn_fractions must have M entries");
  for (const auto& tf : turn_fractions) {
    double s = tf[0] + tf[1] + tf[2];
    if (std::abs(s - 1.0) > 1e-9) bad_config("turn_fractions must sum to 1");
    for (double f : tf)
      if (f < 0.0) bad_config("turn_fractions must be >= 0");
  }
}

Simulator::Simulator(CorridorConfig config) : cfg_(std::move(config)), rng_(0) {
  cfg_.validate();
  rng_.seed(cfg_.seed);
  const int m = cfg_.num_intersections;
  xs_.resize(m);
  cum_wait_per_m_.assign(m, 0.0);
  eog_by_m_.assign(m, std::nullopt);
  for (int i = 0; i < m; ++i) {
    auto& x = xs_[i];
    x.signal.phase = Phase::Green;
    x.signal.current_green_s = cfg_.green_min_s;
    x.signal.remaining_s = cfg_.green_min_s;
    x.pending_green_s = cfg_.green_min_s;
    x.lanes.resize(cfg_.lanes_per_intersection[i]);
    x.eog_stopped.assign(cfg_.lanes_per_intersection[i], 0);
  }
}

double Simulator::stopline_distance(int m) const {
  double d = 0.0;
  for (int i = 0; i < m; ++i) d += cfg_.link_length_m[i];
  return d;
}

bool Simulator::at_cycle_boundary(int m, double window_s) const {
  if (m < 0 || m >= cfg_.num_intersections)
    throw std::out_of_range("intersection index out of range");
  if (time_s_ == 0.0) return true;
  const auto& s = xs_[m].signal;
  return s.phase == Phase::Red && s.remaining_s <= window_s + 1e-9;
}

void Simulator::set_green_duration(int m, double seconds, double window_s) {
  if (m < 0 || m >= cfg_.num_intersections)
    throw std::out_of_range("intersection index out of range");
  if (seconds < cfg_.green_min_s - 1e-9 || seconds > cfg_.green_max_s + 1e-9)
    throw std::invalid_argument("green duration outside [D_min, D_max]");
  if (!at_cycle_boundary(m, window_s))
    throw std::logic_error("green duration can only be set at a cycle boundary");
  xs_[m].pending_green_s = std::clamp(seconds, cfg_.green_min_s, cfg_.green_max_s);
  if (time_s_ == 0.0) {
    // First cycle starts immediately with the requested duration.
    xs_[m].signal.current_green_s = xs_[m].pending_green_s;
    xs_[m].signal.remaining_s = xs_[m].pending_green_s;
  }
}

void Simulator::apply_green_durations(const std::vector<double>& durations, double window_s) {
  if (static_cast<int>(durations.size()) != cfg_.num_intersections)
    throw std::invalid_argument("need one duration per intersection");
  for (int m = 0; m < cfg_.num_intersections; ++m) set_green_duration(m, durations[m], window_s);
}

void Simulator::spawn_arrivals(double dt) {
  for (int m = 0; m < cfg_.num_intersections; ++m) {
    for (int lane = 0; lane < cfg_.lanes_per_intersection[m]; ++lane) {
      const double rate = cfg_.arrival_rate_vph[m][lane] * dt / 3600.0;
      if (rate <= 0.0) continue;
      std::poisson_distribution<int> dist(rate);
      const int k = dist(rng_);
      for (int i = 0; i < k; ++i) {
        ++entered_;
        auto& q = xs_[m].lanes[lane].queue;
        if (static_cast<int>(q.size()) >= cfg_.lane_capacity) {
          ++blocked_;
          continue;
        }
        Vehicle v;
        v.id = static_cast<std::int64_t>(vehicles_.size());
        v.entry_time_s = time_s_;
        v.main_route = is_main_lane(m, lane);
        v.entry_intersection = m;
        v.distance_m = stopline_distance(m);
        vehicles_.push_back(v);
        q.push_back(v.id);
      }
    }
  }
}

void Simulator::advance_links() {
  for (int m = 0; m < cfg_.num_intersections; ++m) {
    auto& inc = xs_[m].incoming;
    while (!inc.empty() && inc.front().arrive_time_s <= time_s_ + 1e-9) {
      auto lv = inc.front();
      inc.pop_front();
      veh(lv.veh).distance_m = stopline_distance(m);
      xs_[m].lanes[lv.dest_lane].queue.push_back(lv.veh);
    }
  }
}

void Simulator::discharge(int m, bool main_green, double interval, StepMetrics& out) {
  auto& x = xs_[m];
  const int main_ct = cfg_.main_lanes_per_intersection[m];
  const int lane_begin = main_green ? 0 : main_ct;
  const int lane_end = main_green ? main_ct : cfg_.lanes_per_intersection[m];
  int next_main_rr = 0;  // round-robin lane assignment downstream
  for (int lane = lane_begin; lane < lane_end; ++lane) {
    auto& L = x.lanes[lane];
    L.discharge_credit += interval / cfg_.saturation_headway_s;
    while (L.discharge_credit >= 1.0 && !L.queue.empty()) {
      L.discharge_credit -= 1.0;
      const std::int64_t id = L.queue.front();
      L.queue.pop_front();
      x.throughput += 1.0;
      out.throughput[m] += 1.0;
      Vehicle& v = veh(id);
      bool exits = true;
      if (main_green && m + 1 < cfg_.num_intersections) {
        const auto& tf = cfg_.turn_fractions[m];
        std::uniform_real_distribution<double> u(0.0, 1.0);
        if (u(rng_) < tf[0]) {
          exits = false;
          const int dest_mains = cfg_.main_lanes_per_intersection[m + 1];
          const int dest_lane = next_main_rr++ % dest_mains;
          const double travel = cfg_.link_length_m[m] / cfg_.free_flow_speed_mps;
          xs_[m + 1].incoming.push_back({time_s_ + travel, id, dest_lane});
        }
      }
      if (exits) {
        v.exited = true;
        ++exited_;
        if (v.main_route && v.entry_intersection == 0 && m == cfg_.num_intersections - 1 &&
            main_green && v.cumulative_wait_s == 0.0)
          ++full_traversals_no_stop_;
      }
    }
    if (L.queue.empty()) L.discharge_credit = std::min(L.discharge_credit, 1.0);
  }
}

void Simulator::finish_green(int m) {
  auto& x = xs_[m];
  const int main_ct = cfg_.main_lanes_per_intersection[m];
  int n_remaining = 0;
  for (int lane = 0; lane < main_ct; ++lane) {
    const int q = static_cast<int>(x.lanes[lane].queue.size());
    n_remaining += q;
    x.eog_stopped[lane] = q;
  }
  EndOfGreenEvent ev;
  ev.intersection = m;
  ev.n_remaining = n_remaining;
  ev.remnant_green_s = (n_remaining == 0 && x.emptied_during_green) ? x.remnant_green_s : 0.0;
  ev.sim_time_s = time_s_;
  last_events_.push_back(ev);
  eog_by_m_[m] = ev;
  x.emptied_during_green = false;
  x.remnant_green_s = 0.0;
}

void Simulator::snapshot_cross_lanes(int m) {
  auto& x = xs_[m];
  for (int lane = cfg_.main_lanes_per_intersection[m]; lane < cfg_.lanes_per_intersection[m]; ++lane)
    x.eog_stopped[lane] = static_cast<int>(x.lanes[lane].queue.size());
}

StepMetrics Simulator::step(double dt_s) {
  if (!(dt_s > 0.0)) throw std::invalid_argument("step: dt must be > 0");
  StepMetrics out;
  out.throughput.assign(cfg_.num_intersections, 0.0);
  last_events_.clear();
  for (auto& e : eog_by_m_) e.reset();

  spawn_arrivals(dt_s);
  advance_links();

  for (int m = 0; m < cfg_.num_intersections; ++m) {
    auto& x = xs_[m];
    double left = dt_s;
    while (left > 1e-12) {
      const double sub = std::min(left, x.signal.remaining_s);
      if (sub > 1e-12) {
        if (x.signal.phase == Phase::Green) {
          discharge(m, true, sub, out);
          if (!x.emptied_during_green) {
            int queued = 0;
            for (int lane = 0; lane < cfg_.main_lanes_per_intersection[m]; ++lane)
              queued += static_cast<int>(x.lanes[lane].queue.size());
            if (queued == 0) {
              x.emptied_during_green = true;
              x.remnant_green_s = x.signal.remaining_s - sub;
            }
          }
        } else if (x.signal.phase == Phase::Red) {
          discharge(m, false, sub, out);
        }
        x.signal.remaining_s -= sub;
        left -= sub;
      }
      if (x.signal.remaining_s <= 1e-12) {
        switch (x.signal.phase) {
          case Phase::Green:
            finish_green(m);
            x.signal.phase = Phase::Yellow;
            x.signal.remaining_s = cfg_.yellow_s;
            break;
          case Phase::Yellow:
            x.signal.phase = Phase::Red;
            x.signal.remaining_s =
                cfg_.cycle_length_s[m] - x.signal.current_green_s - cfg_.yellow_s;
            for (int lane = cfg_.main_lanes_per_intersection[m];
                 lane < cfg_.lanes_per_intersection[m]; ++lane)
              x.lanes[lane].discharge_credit = 0.0;
            break;
          case Phase::Red:
            snapshot_cross_lanes(m);
            x.signal.phase = Phase::Green;
            x.signal.current_green_s = x.pending_green_s;
            x.signal.remaining_s = x.pending_green_s;
            for (int lane = 0; lane < cfg_.main_lanes_per_intersection[m]; ++lane)
              x.lanes[lane].discharge_credit = 0.0;
            break;
        }
      }
    }
  }

  time_s_ += dt_s;

  // Wait accrual and fleet speed for this step.
  std::int64_t queued_count = 0, link_count = 0;
  for (int m = 0; m < cfg_.num_intersections; ++m) {
    std::int64_t q_here = 0;
    for (auto& L : xs_[m].lanes) {
      for (std::int64_t id : L.queue) {
        veh(id).cumulative_wait_s += dt_s;
        ++q_here;
      }
    }
    cum_wait_per_m_[m] += static_cast<double>(q_here) * dt_s;
    queued_count += q_here;
    link_count += static_cast<std::int64_t>(xs_[m].incoming.size());
  }
  out.total_wait_s = static_cast<double>(queued_count) * dt_s;
  cum_wait_total_ += out.total_wait_s;
  const std::int64_t active = queued_count + link_count;
  out.mean_speed_mps =
      active > 0 ? cfg_.free_flow_speed_mps * static_cast<double>(link_count) / active : 0.0;
  if (active > 0) {
    speed_sum_ += out.mean_speed_mps;
    speed_steps_ += 1.0;
  }

  if (traj_sample_dt_ > 0.0 && time_s_ + 1e-9 >= next_traj_sample_) {
    next_traj_sample_ += traj_sample_dt_;
    for (int m = 0; m < cfg_.num_intersections; ++m) {
      for (int lane = 0; lane < cfg_.main_lanes_per_intersection[m]; ++lane)
        for (std::int64_t id : xs_[m].lanes[lane].queue)
          if (veh(id).main_route) traj_.push_back({id, time_s_, stopline_distance(m)});
      for (const auto& lv : xs_[m].incoming) {
        // A vehicle whose arrival fell inside this step waits at the stop
        // line until the next transfer, so clamp from above as well.
        const double dist = std::clamp(
            stopline_distance(m) - (lv.arrive_time_s - time_s_) * cfg_.free_flow_speed_mps, 0.0,
            stopline_distance(m));
        if (veh(lv.veh).main_route) traj_.push_back({lv.veh, time_s_, dist});
      }
    }
  }

  if (log_metrics_) {
    for (int m = 0; m < cfg_.num_intersections; ++m)
      for (int lane = 0; lane < cfg_.lanes_per_intersection[m]; ++lane)
        metrics_log_.push_back({time_s_, m, lane,
                                static_cast<int>(xs_[m].lanes[lane].queue.size()),
                                xs_[m].signal.phase, out.throughput[m], out.total_wait_s});
  }
  return out;
}

std::vector<double> Simulator::observe_local(int m) const {
  if (m < 0 || m >= cfg_.num_intersections)
    throw std::out_of_range("intersection index out of range");
  std::vector<double> obs;
  obs.reserve(cfg_.num_intersections + cfg_.total_lanes());
  for (const auto& x : xs_) obs.push_back(phase_code(x.signal.phase));
  for (const auto& x : xs_)
    for (int c : x.eog_stopped)
      obs.push_back(std::min(1.0, static_cast<double>(c) / cfg_.lane_capacity));
  return obs;
}

EndOfGreenEvent Simulator::end_of_green_snapshot(int m) const {
  if (m < 0 || m >= cfg_.num_intersections)
    throw std::out_of_range("intersection index out of range");
  if (!eog_by_m_[m])
    throw std::logic_error("no end-of-green event at this intersection during the last step");
  return *eog_by_m_[m];
}

const SignalState& Simulator::signal(int m) const {
  if (m < 0 || m >= cfg_.num_intersections)
    throw std::out_of_range("intersection index out of range");
  return xs_[m].signal;
}

int Simulator::queued_on_green_approach(int m) const {
  int n = 0;
  for (int lane = 0; lane < cfg_.main_lanes_per_intersection[m]; ++lane)
    n += static_cast<int>(xs_[m].lanes[lane].queue.size());
  return n;
}

int Simulator::stopped_on_lane(int m, int lane) const {
  return static_cast<int>(xs_[m].lanes[lane].queue.size());
}

SimReport Simulator::metrics_report() const {
  SimReport r;
  r.total_wait_s = cum_wait_total_;
  for (const auto& x : xs_) r.throughput.push_back(x.throughput);
  r.avg_speed_mps = speed_steps_ > 0.0 ? speed_sum_ / speed_steps_ : 0.0;
  r.vehicles_entered = entered_;
  r.vehicles_exited = exited_;
  r.arrivals_blocked = blocked_;
  std::int64_t active = 0;
  for (const auto& x : xs_) {
    active += static_cast<std::int64_t>(x.incoming.size());
    for (const auto& L : x.lanes) active += static_cast<std::int64_t>(L.queue.size());
  }
  r.vehicles_in_network = active;
  r.cum_wait_per_intersection = cum_wait_per_m_;
  r.full_traversals_no_stop = full_traversals_no_stop_;
  return r;
}

std::uint64_t Simulator::state_digest() const {
  Fnv1a h;
  h.f64(time_s_);
  h.i64(entered_);
  h.i64(exited_);
  h.i64(blocked_);
  h.f64(cum_wait_total_);
  for (const auto& x : xs_) {
    h.i64(static_cast<std::int64_t>(x.signal.phase));
    h.f64(x.signal.remaining_s);
    h.f64(x.signal.current_green_s);
    h.f64(x.pending_green_s);
    for (const auto& L : x.lanes) {
      h.f64(L.discharge_credit);
      for (std::int64_t id : L.queue) {
        h.i64(id);
        h.f64(veh(id).cumulative_wait_s);
      }
    }
    for (const auto& lv : x.incoming) {
      h.f64(lv.arrive_time_s);
      h.i64(lv.veh);
      h.i64(lv.dest_lane);
    }
    for (int c : x.eog_stopped) h.i64(c);
  }
  return h.h;
}

void Simulator::record_trajectories(double sample_dt_s) {
  traj_sample_dt_ = sample_dt_s;
  next_traj_sample_ = time_s_ + sample_dt_s;
}

}  // namespace comma::sim
