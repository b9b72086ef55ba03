#pragma once

#include <complex>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

namespace comma::mdp {

/// Explicit tabular MDP. transition[a] is row-major n_states x n_states;
/// reward[a] has n_states entries (R(s,a)).
struct FiniteMdp {
  int n_states = 0;
  int n_actions = 0;
  std::vector<std::vector<double>> transition;
  std::vector<std::vector<double>> reward;
  double gamma = 0.9;

  void validate() const;
  static FiniteMdp random(int n_states, int n_actions, double gamma, std::mt19937_64& rng);
};

/// pi[s*n_actions + a] = pi(a|s). Induces P^pi and R^pi.
struct PolicyMatrix {
  int n = 0;
  std::vector<double> p_pi;  // n x n row-stochastic
  std::vector<double> r_pi;  // n

  static PolicyMatrix induce(const FiniteMdp& mdp, std::span<const double> pi);
  static std::vector<double> uniform_policy(const FiniteMdp& mdp);
  static std::vector<double> random_policy(const FiniteMdp& mdp, std::mt19937_64& rng);
};

/// One application of T^pi: R^pi + lambda * P^pi * v.
std::vector<double> bellman_apply(const PolicyMatrix& pm, std::span<const double> v,
                                  double lambda);

struct ValueIterationResult {
  std::vector<double> value;
  int iterations = 0;
  // sup-norm distance ratio d(Tu,Tv)/d(u,v) against a second trajectory,
  // one entry per iteration while the distance stays resolvable.
  std::vector<double> contraction_trace;
};

ValueIterationResult value_iteration(const PolicyMatrix& pm, double lambda, double tol,
                                     std::span<const double> start = {},
                                     std::span<const double> second_start = {});

struct GershgorinResult {
  std::vector<double> centers;
  std::vector<double> radii;
  double spectral_bound = 0.0;  // max_i |a_ii| + R_i
};
GershgorinResult gershgorin_bound(std::span<const double> matrix, int n);

/// Q(s,a) = R(s,a) + gamma * sum_{s'} P(s'|s,a) V(s').
std::vector<double> q_from_v(const FiniteMdp& mdp, std::span<const double> v);
/// V(s) = sum_a pi(a|s) Q(s,a).
std::vector<double> v_from_q(const FiniteMdp& mdp, std::span<const double> pi,
                             std::span<const double> q);
/// Deterministic greedy policy table from a Q table.
std::vector<double> greedy_policy(const FiniteMdp& mdp, std::span<const double> q);

/// Solves (I - lambda P) x = r by Gaussian elimination with partial pivoting.
std::vector<double> solve_fixed_point(const PolicyMatrix& pm, double lambda);

/// Eigenvalues of a real n x n matrix via the unshifted QR iteration,
/// reading 1x1 and 2x2 diagonal blocks. Intended for small n (<= ~50).
std::vector<std::complex<double>> eigenvalues_qr(std::span<const double> matrix, int n,
                                                 int max_iters = 20000, double tol = 1e-12);

void save_mdp(const FiniteMdp& mdp, const std::filesystem::path& path);
FiniteMdp load_mdp(const std::filesystem::path& path);

}  // namespace comma::mdp
