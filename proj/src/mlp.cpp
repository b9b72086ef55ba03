#include "comma/mlp.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace comma::nn {

namespace {

void check_sizes(const std::vector<int>& sizes) {
  if (sizes.size() < 2) throw std::invalid_argument("mlp: need at least input and output layer");
  for (int s : sizes)
    if (s < 1) throw std::invalid_argument("mlp: layer width must be >= 1");
}

}  // namespace

MlpParams MlpParams::zeros(std::vector<int> sizes, OutputActivation out) {
  check_sizes(sizes);
  MlpParams p;
  p.layer_sizes = std::move(sizes);
  p.output = out;
  for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
    p.weights.emplace_back(static_cast<std::size_t>(p.layer_sizes[l + 1]) * p.layer_sizes[l], 0.0);
    p.biases.emplace_back(p.layer_sizes[l + 1], 0.0);
  }
  return p;
}

MlpParams MlpParams::random_init(std::vector<int> sizes, OutputActivation out,
                                 std::mt19937_64& rng) {
  MlpParams p = zeros(std::move(sizes), out);
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.layer_sizes[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : p.weights[l]) w = dist(rng);
    for (double& b : p.biases[l]) b = dist(rng);
  }
  return p;
}

std::size_t MlpParams::num_params() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

bool MlpParams::all_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (double w : weights[l])
      if (!std::isfinite(w)) return false;
    for (double b : biases[l])
      if (!std::isfinite(b)) return false;
  }
  return true;
}

GradientSet GradientSet::zeros_like(const MlpParams& p) {
  GradientSet g;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    g.weights.emplace_back(p.weights[l].size(), 0.0);
    g.biases.emplace_back(p.biases[l].size(), 0.0);
  }
  return g;
}

void GradientSet::accumulate(const GradientSet& other) {
  if (weights.size() != other.weights.size())
    throw std::invalid_argument("gradient accumulate: layer count mismatch");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].size() != other.weights[l].size() || biases[l].size() != other.biases[l].size())
      throw std::invalid_argument("gradient accumulate: shape mismatch");
    for (std::size_t i = 0; i < weights[l].size(); ++i) weights[l][i] += other.weights[l][i];
    for (std::size_t i = 0; i < biases[l].size(); ++i) biases[l][i] += other.biases[l][i];
  }
}

void GradientSet::scale(double c) {
  for (auto& w : weights)
    for (double& x : w) x *= c;
  for (auto& b : biases)
    for (double& x : b) x *= c;
}

bool GradientSet::all_finite() const {
  for (const auto& w : weights)
    for (double x : w)
      if (!std::isfinite(x)) return false;
  for (const auto& b : biases)
    for (double x : b)
      if (!std::isfinite(x)) return false;
  return true;
}

std::vector<double> forward(const MlpParams& p, std::span<const double> input) {
  ForwardCache cache;
  return forward(p, input, cache);
}

std::vector<double> forward(const MlpParams& p, std::span<const double> input,
                            ForwardCache& cache) {
  if (static_cast<int>(input.size()) != p.input_size())
    throw std::invalid_argument("forward: input length " + std::to_string(input.size()) +
                                " != " + std::to_string(p.input_size()));
  cache.activations.assign(1, std::vector<double>(input.begin(), input.end()));
  const std::size_t L = p.num_layers();
  for (std::size_t l = 0; l < L; ++l) {
    const auto& prev = cache.activations.back();
    const int rows = p.layer_sizes[l + 1];
    const int cols = p.layer_sizes[l];
    std::vector<double> next(rows);
    for (int r = 0; r < rows; ++r) {
      double z = p.biases[l][r];
      const double* wr = p.weights[l].data() + static_cast<std::size_t>(r) * cols;
      for (int c = 0; c < cols; ++c) z += wr[c] * prev[c];
      const bool is_output = (l + 1 == L);
      next[r] = (!is_output || p.output == OutputActivation::Tanh) ? std::tanh(z) : z;
    }
    cache.activations.push_back(std::move(next));
  }
  return cache.activations.back();
}

GradientSet backward(const MlpParams& p, const ForwardCache& cache,
                     std::span<const double> output_grad, std::vector<double>* input_grad) {
  const std::size_t L = p.num_layers();
  if (cache.activations.size() != L + 1)
    throw std::invalid_argument("backward: cache does not match network depth");
  if (static_cast<int>(output_grad.size()) != p.output_size())
    throw std::invalid_argument("backward: output_grad length mismatch");

  GradientSet g = GradientSet::zeros_like(p);
  // delta = dL/dz at the current layer.
  std::vector<double> delta(output_grad.begin(), output_grad.end());
  if (p.output == OutputActivation::Tanh) {
    const auto& out = cache.activations.back();
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= 1.0 - out[i] * out[i];
  }
  for (std::size_t li = L; li-- > 0;) {
    const int rows = p.layer_sizes[li + 1];
    const int cols = p.layer_sizes[li];
    const auto& prev = cache.activations[li];
    for (int r = 0; r < rows; ++r) {
      g.biases[li][r] = delta[r];
      double* gw = g.weights[li].data() + static_cast<std::size_t>(r) * cols;
      for (int c = 0; c < cols; ++c) gw[c] = delta[r] * prev[c];
    }
    if (li == 0 && input_grad == nullptr) break;
    std::vector<double> prev_delta(cols, 0.0);
    for (int r = 0; r < rows; ++r) {
      const double* wr = p.weights[li].data() + static_cast<std::size_t>(r) * cols;
      for (int c = 0; c < cols; ++c) prev_delta[c] += wr[c] * delta[r];
    }
    if (li > 0) {
      // chain through the hidden tanh of layer li-1
      for (int c = 0; c < cols; ++c) prev_delta[c] *= 1.0 - prev[c] * prev[c];
    } else if (input_grad != nullptr) {
      *input_grad = std::move(prev_delta);
      break;
    }
    delta = std::move(prev_delta);
  }
  return g;
}

void sgd_step(MlpParams& p, const GradientSet& g, double lr) {
  if (lr <= 0.0) throw std::invalid_argument("sgd_step: lr must be > 0");
  if (!g.all_finite()) throw std::runtime_error("sgd_step: non-finite gradients");
  if (g.weights.size() != p.weights.size())
    throw std::invalid_argument("sgd_step: shape mismatch");
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    for (std::size_t i = 0; i < p.weights[l].size(); ++i) p.weights[l][i] -= lr * g.weights[l][i];
    for (std::size_t i = 0; i < p.biases[l].size(); ++i) p.biases[l][i] -= lr * g.biases[l][i];
  }
}

void SgdMomentum::step(MlpParams& p, const GradientSet& g, double lr) {
  if (beta == 0.0) {
    sgd_step(p, g, lr);
    return;
  }
  if (!g.all_finite()) throw std::runtime_error("sgd_step: non-finite gradients");
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    for (std::size_t i = 0; i < p.weights[l].size(); ++i) {
      velocity.weights[l][i] = beta * velocity.weights[l][i] + g.weights[l][i];
      p.weights[l][i] -= lr * velocity.weights[l][i];
    }
    for (std::size_t i = 0; i < p.biases[l].size(); ++i) {
      velocity.biases[l][i] = beta * velocity.biases[l][i] + g.biases[l][i];
      p.biases[l][i] -= lr * velocity.biases[l][i];
    }
  }
}

void soft_update(MlpParams& target, const MlpParams& online, double tau) {
  if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("soft_update: tau must be in [0,1]");
  if (target.layer_sizes != online.layer_sizes)
    throw std::invalid_argument("soft_update: shape mismatch");
  for (std::size_t l = 0; l < target.weights.size(); ++l) {
    for (std::size_t i = 0; i < target.weights[l].size(); ++i)
      target.weights[l][i] = (1.0 - tau) * online.weights[l][i] + tau * target.weights[l][i];
    for (std::size_t i = 0; i < target.biases[l].size(); ++i)
      target.biases[l][i] = (1.0 - tau) * online.biases[l][i] + tau * target.biases[l][i];
  }
}

namespace {
constexpr char kMagic[4] = {'C', 'M', 'L', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
}
}  // namespace

void save_params(const MlpParams& p, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path.string());
  os.write(kMagic, 4);
  write_pod(os, kVersion);
  write_pod(os, static_cast<std::uint8_t>(p.output));
  write_pod(os, static_cast<std::uint32_t>(p.layer_sizes.size()));
  for (int s : p.layer_sizes) write_pod(os, static_cast<std::uint32_t>(s));
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    os.write(reinterpret_cast<const char*>(p.weights[l].data()),
             static_cast<std::streamsize>(p.weights[l].size() * sizeof(double)));
    os.write(reinterpret_cast<const char*>(p.biases[l].data()),
             static_cast<std::streamsize>(p.biases[l].size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

MlpParams load_params(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  std::uint32_t version;
  read_pod(is, version);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  std::uint8_t out;
  read_pod(is, out);
  if (out > 1) throw std::runtime_error("checkpoint: bad output activation tag");
  std::uint32_t n_layers;
  read_pod(is, n_layers);
  if (n_layers < 2 || n_layers > 64) throw std::runtime_error("checkpoint: bad layer count");
  std::vector<int> sizes(n_layers);
  for (auto& s : sizes) {
    std::uint32_t v;
    read_pod(is, v);
    if (v < 1 || v > 1u << 20) throw std::runtime_error("checkpoint: bad layer width");
    s = static_cast<int>(v);
  }
  MlpParams p = MlpParams::zeros(sizes, static_cast<OutputActivation>(out));
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    is.read(reinterpret_cast<char*>(p.weights[l].data()),
            static_cast<std::streamsize>(p.weights[l].size() * sizeof(double)));
    is.read(reinterpret_cast<char*>(p.biases[l].data()),
            static_cast<std::streamsize>(p.biases[l].size() * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated file " + path.string());
  }
  if (!p.all_finite()) throw std::runtime_error("checkpoint: non-finite parameters");
  return p;
}

}  // namespace comma::nn
