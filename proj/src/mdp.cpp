#include "comma/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace comma::mdp {

void FiniteMdp::validate() const {
  if (n_states < 1 || n_actions < 1)
    throw std::invalid_argument("mdp: need at least one state and one action");
  if (static_cast<int>(transition.size()) != n_actions ||
      static_cast<int>(reward.size()) != n_actions)
    throw std::invalid_argument("mdp: per-action table count mismatch");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("mdp: gamma must be in [0,1)");
  for (int a = 0; a < n_actions; ++a) {
    if (static_cast<int>(transition[a].size()) != n_states * n_states)
      throw std::invalid_argument("mdp: transition table shape mismatch");
    if (static_cast<int>(reward[a].size()) != n_states)
      throw std::invalid_argument("mdp: reward table shape mismatch");
    for (int s = 0; s < n_states; ++s) {
      double sum = 0.0;
      for (int t = 0; t < n_states; ++t) {
        const double p = transition[a][s * n_states + t];
        if (p < 0.0) throw std::invalid_argument("mdp: negative transition probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-12)
        throw std::invalid_argument("mdp: transition row does not sum to 1");
    }
    for (double r : reward[a])
      if (!std::isfinite(r)) throw std::invalid_argument("mdp: non-finite reward");
  }
}

FiniteMdp FiniteMdp::random(int n_states, int n_actions, double gamma, std::mt19937_64& rng) {
  FiniteMdp m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.gamma = gamma;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_real_distribution<double> ur(-1.0, 1.0);
  for (int a = 0; a < n_actions; ++a) {
    std::vector<double> t(static_cast<std::size_t>(n_states) * n_states);
    for (int s = 0; s < n_states; ++s) {
      double sum = 0.0;
      for (int j = 0; j < n_states; ++j) {
        t[s * n_states + j] = u(rng) + 1e-6;
        sum += t[s * n_states + j];
      }
      for (int j = 0; j < n_states; ++j) t[s * n_states + j] /= sum;
    }
    m.transition.push_back(std::move(t));
    std::vector<double> r(n_states);
    for (double& x : r) x = ur(rng);
    m.reward.push_back(std::move(r));
  }
  m.validate();
  return m;
}

PolicyMatrix PolicyMatrix::induce(const FiniteMdp& mdp, std::span<const double> pi) {
  mdp.validate();
  const int n = mdp.n_states;
  const int na = mdp.n_actions;
  if (static_cast<int>(pi.size()) != n * na)
    throw std::invalid_argument("policy: table shape mismatch");
  PolicyMatrix pm;
  pm.n = n;
  pm.p_pi.assign(static_cast<std::size_t>(n) * n, 0.0);
  pm.r_pi.assign(n, 0.0);
  for (int s = 0; s < n; ++s) {
    double psum = 0.0;
    for (int a = 0; a < na; ++a) {
      const double w = pi[s * na + a];
      if (w < 0.0) throw std::invalid_argument("policy: negative probability");
      psum += w;
      pm.r_pi[s] += w * mdp.reward[a][s];
      for (int t = 0; t < n; ++t) pm.p_pi[s * n + t] += w * mdp.transition[a][s * n + t];
    }
    if (std::abs(psum - 1.0) > 1e-12)
      throw std::invalid_argument("policy: row does not sum to 1");
  }
  return pm;
}

std::vector<double> PolicyMatrix::uniform_policy(const FiniteMdp& mdp) {
  return std::vector<double>(static_cast<std::size_t>(mdp.n_states) * mdp.n_actions,
                             1.0 / mdp.n_actions);
}

std::vector<double> PolicyMatrix::random_policy(const FiniteMdp& mdp, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> pi(static_cast<std::size_t>(mdp.n_states) * mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s) {
    double sum = 0.0;
    for (int a = 0; a < mdp.n_actions; ++a) {
      pi[s * mdp.n_actions + a] = u(rng) + 1e-6;
      sum += pi[s * mdp.n_actions + a];
    }
    for (int a = 0; a < mdp.n_actions; ++a) pi[s * mdp.n_actions + a] /= sum;
  }
  return pi;
}

std::vector<double> bellman_apply(const PolicyMatrix& pm, std::span<const double> v,
                                  double lambda) {
  if (static_cast<int>(v.size()) != pm.n)
    throw std::invalid_argument("bellman_apply: value vector length mismatch");
  std::vector<double> out(pm.n);
  for (int s = 0; s < pm.n; ++s) {
    double acc = 0.0;
    const double* row = pm.p_pi.data() + static_cast<std::size_t>(s) * pm.n;
    for (int t = 0; t < pm.n; ++t) acc += row[t] * v[t];
    out[s] = pm.r_pi[s] + lambda * acc;
  }
  return out;
}

namespace {
double sup_dist(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}
}  // namespace

ValueIterationResult value_iteration(const PolicyMatrix& pm, double lambda, double tol,
                                     std::span<const double> start,
                                     std::span<const double> second_start) {
  if (!(tol > 0.0)) throw std::invalid_argument("value_iteration: tol must be > 0");
  if (!(lambda >= 0.0 && lambda < 1.0))
    throw std::invalid_argument("value_iteration: lambda must be in [0,1)");
  std::vector<double> u(pm.n, 0.0), w(pm.n, 1.0);
  if (!start.empty()) u.assign(start.begin(), start.end());
  if (!second_start.empty()) w.assign(second_start.begin(), second_start.end());
  ValueIterationResult res;
  const int max_iters = 1000000;
  for (int it = 0; it < max_iters; ++it) {
    auto tu = bellman_apply(pm, u, lambda);
    auto tw = bellman_apply(pm, w, lambda);
    // T u - T w = lambda * P (u - w) exactly, so the ratio is measured on the
    // difference vector in extended precision; recorded only while the gap is
    // far enough above the iterates' roundoff floor to be meaningful.
    double mag = 1.0;
    for (int s = 0; s < pm.n; ++s) mag = std::max({mag, std::abs(u[s]), std::abs(w[s])});
    std::vector<long double> delta(pm.n);
    long double den = 0.0L;
    for (int s = 0; s < pm.n; ++s) {
      delta[s] = static_cast<long double>(u[s]) - static_cast<long double>(w[s]);
      den = std::max(den, std::abs(delta[s]));
    }
    if (den > 1e-4L * mag) {
      long double num = 0.0L;
      for (int s = 0; s < pm.n; ++s) {
        long double acc = 0.0L;
        const double* row = pm.p_pi.data() + static_cast<std::size_t>(s) * pm.n;
        for (int t = 0; t < pm.n; ++t) acc += static_cast<long double>(row[t]) * delta[t];
        num = std::max(num, std::abs(acc));
      }
      res.contraction_trace.push_back(static_cast<double>(lambda * num / den));
    }
    const double step = sup_dist(tu, u);
    u = std::move(tu);
    w = std::move(tw);
    res.iterations = it + 1;
    if (step < tol) break;
  }
  res.value = std::move(u);
  return res;
}

GershgorinResult gershgorin_bound(std::span<const double> matrix, int n) {
  if (static_cast<int>(matrix.size()) != n * n)
    throw std::invalid_argument("gershgorin: matrix must be square");
  GershgorinResult g;
  for (int i = 0; i < n; ++i) {
    const double center = matrix[i * n + i];
    double radius = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) radius += std::abs(matrix[i * n + j]);
    g.centers.push_back(center);
    g.radii.push_back(radius);
    g.spectral_bound = std::max(g.spectral_bound, std::abs(center) + radius);
  }
  return g;
}

std::vector<double> q_from_v(const FiniteMdp& mdp, std::span<const double> v) {
  if (static_cast<int>(v.size()) != mdp.n_states)
    throw std::invalid_argument("q_from_v: value vector length mismatch");
  std::vector<double> q(static_cast<std::size_t>(mdp.n_states) * mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      double ev = 0.0;
      for (int t = 0; t < mdp.n_states; ++t)
        ev += mdp.transition[a][s * mdp.n_states + t] * v[t];
      q[s * mdp.n_actions + a] = mdp.reward[a][s] + mdp.gamma * ev;
    }
  return q;
}

std::vector<double> v_from_q(const FiniteMdp& mdp, std::span<const double> pi,
                             std::span<const double> q) {
  if (static_cast<int>(pi.size()) != mdp.n_states * mdp.n_actions ||
      static_cast<int>(q.size()) != mdp.n_states * mdp.n_actions)
    throw std::invalid_argument("v_from_q: table shape mismatch");
  std::vector<double> v(mdp.n_states, 0.0);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      v[s] += pi[s * mdp.n_actions + a] * q[s * mdp.n_actions + a];
  return v;
}

std::vector<double> greedy_policy(const FiniteMdp& mdp, std::span<const double> q) {
  std::vector<double> pi(static_cast<std::size_t>(mdp.n_states) * mdp.n_actions, 0.0);
  for (int s = 0; s < mdp.n_states; ++s) {
    int best = 0;
    for (int a = 1; a < mdp.n_actions; ++a)
      if (q[s * mdp.n_actions + a] > q[s * mdp.n_actions + best]) best = a;
    pi[s * mdp.n_actions + best] = 1.0;
  }
  return pi;
}

std::vector<double> solve_fixed_point(const PolicyMatrix& pm, double lambda) {
  const int n = pm.n;
  std::vector<double> a(static_cast<std::size_t>(n) * (n + 1));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j)
      a[i * (n + 1) + j] = (i == j ? 1.0 : 0.0) - lambda * pm.p_pi[i * n + j];
    a[i * (n + 1) + n] = pm.r_pi[i];
  }
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[r * (n + 1) + col]) > std::abs(a[piv * (n + 1) + col])) piv = r;
    if (std::abs(a[piv * (n + 1) + col]) < 1e-14)
      throw std::runtime_error("solve_fixed_point: singular system");
    if (piv != col)
      for (int j = col; j <= n; ++j) std::swap(a[piv * (n + 1) + j], a[col * (n + 1) + j]);
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r * (n + 1) + col] / a[col * (n + 1) + col];
      for (int j = col; j <= n; ++j) a[r * (n + 1) + j] -= f * a[col * (n + 1) + j];
    }
  }
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = a[i * (n + 1) + n] / a[i * (n + 1) + i];
  return x;
}

std::vector<std::complex<double>> eigenvalues_qr(std::span<const double> matrix, int n,
                                                 int max_iters, double tol) {
  if (static_cast<int>(matrix.size()) != n * n)
    throw std::invalid_argument("eigenvalues_qr: matrix must be square");
  std::vector<double> a(matrix.begin(), matrix.end());
  std::vector<double> q(static_cast<std::size_t>(n) * n), r(static_cast<std::size_t>(n) * n);
  for (int iter = 0; iter < max_iters; ++iter) {
    // Gram-Schmidt QR of a.
    std::fill(r.begin(), r.end(), 0.0);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) q[i * n + j] = a[i * n + j];
      for (int k = 0; k < j; ++k) {
        double dot = 0.0;
        for (int i = 0; i < n; ++i) dot += q[i * n + k] * a[i * n + j];
        r[k * n + j] = dot;
        for (int i = 0; i < n; ++i) q[i * n + j] -= dot * q[i * n + k];
      }
      double norm = 0.0;
      for (int i = 0; i < n; ++i) norm += q[i * n + j] * q[i * n + j];
      norm = std::sqrt(norm);
      r[j * n + j] = norm;
      if (norm > 1e-300)
        for (int i = 0; i < n; ++i) q[i * n + j] /= norm;
    }
    // a <- R Q
    std::vector<double> next(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int k = i; k < n; ++k) {
        const double rv = r[i * n + k];
        if (rv == 0.0) continue;
        for (int j = 0; j < n; ++j) next[i * n + j] += rv * q[k * n + j];
      }
    a = std::move(next);
    // converged when subdiagonals below 2x2 blocks vanish
    bool done = true;
    for (int i = 0; i + 1 < n && done; ++i)
      if (std::abs(a[(i + 1) * n + i]) > tol &&
          (i + 2 >= n || std::abs(a[(i + 2) * n + i + 1]) > tol))
        done = false;
    if (done && iter > 10) break;
  }
  std::vector<std::complex<double>> eigs;
  int i = 0;
  while (i < n) {
    if (i + 1 < n && std::abs(a[(i + 1) * n + i]) > 1e-8) {
      // 2x2 block, possibly a complex pair
      const double p = a[i * n + i], qv = a[i * n + i + 1];
      const double s = a[(i + 1) * n + i], t = a[(i + 1) * n + i + 1];
      const double tr = p + t, det = p * t - qv * s;
      const double disc = tr * tr / 4.0 - det;
      if (disc >= 0.0) {
        const double root = std::sqrt(disc);
        eigs.emplace_back(tr / 2.0 + root, 0.0);
        eigs.emplace_back(tr / 2.0 - root, 0.0);
      } else {
        const double im = std::sqrt(-disc);
        eigs.emplace_back(tr / 2.0, im);
        eigs.emplace_back(tr / 2.0, -im);
      }
      i += 2;
    } else {
      eigs.emplace_back(a[i * n + i], 0.0);
      i += 1;
    }
  }
  return eigs;
}

void save_mdp(const FiniteMdp& mdp, const std::filesystem::path& path) {
  mdp.validate();
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_mdp: cannot open " + path.string());
  os.precision(17);
  os << "states " << mdp.n_states << "\nactions " << mdp.n_actions << "\ngamma " << mdp.gamma
     << "\n";
  for (int a = 0; a < mdp.n_actions; ++a) {
    os << "transition " << a << "\n";
    for (int s = 0; s < mdp.n_states; ++s) {
      for (int t = 0; t < mdp.n_states; ++t)
        os << mdp.transition[a][s * mdp.n_states + t] << (t + 1 == mdp.n_states ? "\n" : " ");
    }
    os << "reward " << a << "\n";
    for (int s = 0; s < mdp.n_states; ++s)
      os << mdp.reward[a][s] << (s + 1 == mdp.n_states ? "\n" : " ");
  }
}

FiniteMdp load_mdp(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_mdp: cannot open " + path.string());
  FiniteMdp m;
  std::string key;
  if (!(is >> key >> m.n_states) || key != "states")
    throw std::runtime_error("load_mdp: expected 'states'");
  if (!(is >> key >> m.n_actions) || key != "actions")
    throw std::runtime_error("load_mdp: expected 'actions'");
  if (!(is >> key >> m.gamma) || key != "gamma") throw std::runtime_error("load_mdp: expected 'gamma'");
  m.transition.assign(m.n_actions, {});
  m.reward.assign(m.n_actions, {});
  int idx;
  while (is >> key >> idx) {
    if (idx < 0 || idx >= m.n_actions) throw std::runtime_error("load_mdp: bad action index");
    if (key == "transition") {
      m.transition[idx].resize(static_cast<std::size_t>(m.n_states) * m.n_states);
      for (auto& v : m.transition[idx])
        if (!(is >> v)) throw std::runtime_error("load_mdp: truncated transition table");
    } else if (key == "reward") {
      m.reward[idx].resize(m.n_states);
      for (auto& v : m.reward[idx])
        if (!(is >> v)) throw std::runtime_error("load_mdp: truncated reward table");
    } else {
      throw std::runtime_error("load_mdp: unknown section " + key);
    }
  }
  m.validate();
  return m;
}

}  // namespace comma::mdp
