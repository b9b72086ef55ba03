#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace comma::sim {

struct CorridorConfig {
  int num_intersections = 5;                    // M
  std::vector<int> lanes_per_intersection;      // N_lane^m (main + cross lanes)
  std::vector<int> main_lanes_per_intersection; // lanes serving the corridor phase
  std::vector<double> cycle_length_s;           // per-intersection, fixed
  double yellow_s = 5.0;
  std::vector<double> link_length_m;            // M-1 links between intersections
  double free_flow_speed_mps = 13.9;
  double saturation_headway_s = 2.0;
  // arrival_rate_vph[m][lane]: external Poisson demand; any lane with a
  // positive rate is a source (main lanes additionally receive vehicles
  // transferred from upstream).
  std::vector<std::vector<double>> arrival_rate_vph;
  // turn_fractions[m] = {through, left, right}; left/right leave the corridor.
  std::vector<std::array<double, 3>> turn_fractions;
  double green_min_s = 15.0;   // D_min
  double green_max_s = 90.0;   // D_max
  double stop_speed_threshold_mps = 3.0 / 3.6;  // 3 km/h
  int lane_capacity = 40;
  std::uint64_t seed = 0;

  // Convenience: uniform defaults for an M-intersection corridor.
  static CorridorConfig uniform(int m, std::vector<int> lanes);
  void validate() const;  // throws std::invalid_argument naming the violation
  int total_lanes() const;
};

enum class Phase : std::uint8_t { Green = 0, Yellow = 1, Red = 2 };

inline double phase_code(Phase p) {
  switch (p) {
    case Phase::Green: return 1.0;
    case Phase::Yellow: return 0.0;
    case Phase::Red: return -1.0;
  }
  return 0.0;
}

struct SignalState {
  Phase phase = Phase::Green;
  double remaining_s = 0.0;
  double current_green_s = 0.0;
};

struct StepMetrics {
  double total_wait_s = 0.0;             // waiting accrued this step
  std::vector<double> throughput;        // vehicles discharged per intersection
  double mean_speed_mps = 0.0;           // mean over active vehicles
};

/// Reward inputs captured at the moment a green phase ends.
struct EndOfGreenEvent {
  int intersection = 0;
  int n_remaining = 0;      // N_mt: vehicles still queued on the green approach
  double remnant_green_s = 0.0;  // g_mt: green seconds left when approach emptied
  double sim_time_s = 0.0;
};

struct SimReport {
  double total_wait_s = 0.0;
  std::vector<double> throughput;
  double avg_speed_mps = 0.0;
  std::int64_t vehicles_entered = 0;
  std::int64_t vehicles_exited = 0;
  std::int64_t vehicles_in_network = 0;
  std::int64_t arrivals_blocked = 0;
  std::vector<double> cum_wait_per_intersection;
  std::int64_t full_traversals_no_stop = 0;  // corridor traversals with zero wait
};

struct TrajectorySample {
  std::int64_t vehicle_id;
  double time_s;
  double distance_m;
};

struct MetricsLogRow {
  double sim_time_s;
  int intersection;
  int lane;
  int stopped;
  Phase phase;
  double throughput;
  double total_wait_s;
};

/// Point-queue corridor microsimulation: Poisson arrivals, free-flow link
/// travel, saturation-rate discharge during green. Fully deterministic for a
/// fixed (config, seed, action sequence).
class Simulator {
 public:
  explicit Simulator(CorridorConfig config);

  const CorridorConfig& config() const { return cfg_; }
  double sim_time() const { return time_s_; }

  // Sets the green duration used by intersection m's next cycle. Only legal
  // at a cycle boundary: sim start, or within `window_s` of the next green.
  void set_green_duration(int m, double seconds, double window_s = 1.0);
  void apply_green_durations(const std::vector<double>& durations, double window_s = 1.0);
  bool at_cycle_boundary(int m, double window_s = 1.0) const;

  StepMetrics step(double dt_s);

  // Actor observation: phases of all intersections then the end-of-green
  // stopped count of every lane, scaled for tanh networks. Length M + sum N.
  std::vector<double> observe_local(int m) const;

  // Valid only during the step in which intersection m's green ended.
  EndOfGreenEvent end_of_green_snapshot(int m) const;
  // End-of-green events that fired during the last step() call.
  const std::vector<EndOfGreenEvent>& last_events() const { return last_events_; }

  const SignalState& signal(int m) const;
  int queued_on_green_approach(int m) const;
  int stopped_on_lane(int m, int lane) const;

  SimReport metrics_report() const;
  std::uint64_t state_digest() const;

  void record_trajectories(double sample_dt_s);
  const std::vector<TrajectorySample>& trajectories() const { return traj_; }
  void record_metrics_log(bool on) { log_metrics_ = on; }
  const std::vector<MetricsLogRow>& metrics_log() const { return metrics_log_; }

  // Cumulative waiting accrued at intersection m (for interval rewards).
  double cum_wait_at(int m) const { return cum_wait_per_m_[m]; }
  double cum_wait_total() const { return cum_wait_total_; }

 private:
  struct Vehicle {
    std::int64_t id;
    double entry_time_s;
    double cumulative_wait_s = 0.0;
    double distance_m = 0.0;   // along the corridor, main-route vehicles
    bool main_route = false;
    bool exited = false;
    int entry_intersection = 0;
  };
  struct Lane {
    std::deque<std::int64_t> queue;  // vehicle ids at the stop line, FIFO
    double discharge_credit = 0.0;
  };
  struct LinkVehicle {
    double arrive_time_s;
    std::int64_t veh;
    int dest_lane;
  };
  struct IntersectionState {
    SignalState signal;
    std::vector<Lane> lanes;
    double pending_green_s = 0.0;
    double remnant_green_s = 0.0;   // g_mt candidate for the running green
    bool emptied_during_green = false;
    std::vector<int> eog_stopped;   // per-lane snapshot for observations
    std::deque<LinkVehicle> incoming;  // vehicles in transit from upstream
    double throughput = 0.0;
  };

  bool is_main_lane(int m, int lane) const { return lane < cfg_.main_lanes_per_intersection[m]; }
  double stopline_distance(int m) const;
  void spawn_arrivals(double dt);
  void advance_links();
  void discharge(int m, bool main_phase_green, double dt, StepMetrics& out);
  void finish_green(int m);
  void snapshot_cross_lanes(int m);
  Vehicle& veh(std::int64_t id) { return vehicles_[static_cast<std::size_t>(id)]; }
  const Vehicle& veh(std::int64_t id) const { return vehicles_[static_cast<std::size_t>(id)]; }

  CorridorConfig cfg_;
  double time_s_ = 0.0;
  std::mt19937_64 rng_;
  std::vector<IntersectionState> xs_;
  std::vector<Vehicle> vehicles_;
  std::vector<EndOfGreenEvent> last_events_;
  std::vector<std::optional<EndOfGreenEvent>> eog_by_m_;

  std::int64_t entered_ = 0, exited_ = 0, blocked_ = 0;
  double cum_wait_total_ = 0.0;
  std::vector<double> cum_wait_per_m_;
  double speed_sum_ = 0.0;
  double speed_steps_ = 0.0;
  std::int64_t full_traversals_no_stop_ = 0;

  double traj_sample_dt_ = 0.0;
  double next_traj_sample_ = 0.0;
  std::vector<TrajectorySample> traj_;
  bool log_metrics_ = false;
  std::vector<MetricsLogRow> metrics_log_;
};

}  // namespace comma::sim
