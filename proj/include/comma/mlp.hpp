#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace comma::nn {

enum class OutputActivation : std::uint8_t { Affine = 0, Tanh = 1 };

/// Fully-connected network parameters. Hidden layers use tanh; the output
/// layer is affine or tanh depending on `output`.
struct MlpParams {
  std::vector<int> layer_sizes;
  // weights[l] is (layer_sizes[l+1] x layer_sizes[l]), row-major.
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  OutputActivation output = OutputActivation::Affine;

  static MlpParams zeros(std::vector<int> sizes,
                         OutputActivation out = OutputActivation::Affine);
  // Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static MlpParams random_init(std::vector<int> sizes, OutputActivation out,
                               std::mt19937_64& rng);

  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return weights.size(); }
  std::size_t num_params() const;
  bool all_finite() const;
};

/// Per-parameter partials, shape-congruent with an MlpParams.
struct GradientSet {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  static GradientSet zeros_like(const MlpParams& p);
  void accumulate(const GradientSet& other);
  void scale(double c);
  bool all_finite() const;
};

/// Layer activations kept from a forward pass for backprop.
/// activations[0] is the input; activations.back() is the output.
struct ForwardCache {
  std::vector<std::vector<double>> activations;
};

std::vector<double> forward(const MlpParams& p, std::span<const double> input);
std::vector<double> forward(const MlpParams& p, std::span<const double> input,
                            ForwardCache& cache);

/// Backprop dL/d(output) through the cached pass. If input_grad is non-null
/// it receives dL/d(input), needed to chain the critic into the actor.
GradientSet backward(const MlpParams& p, const ForwardCache& cache,
                     std::span<const double> output_grad,
                     std::vector<double>* input_grad = nullptr);

void sgd_step(MlpParams& p, const GradientSet& g, double lr);

/// Plain momentum buffer; with beta=0 this is identical to sgd_step.
struct SgdMomentum {
  double beta = 0.0;
  GradientSet velocity;

  explicit SgdMomentum(const MlpParams& p, double beta_ = 0.0)
      : beta(beta_), velocity(GradientSet::zeros_like(p)) {}
  void step(MlpParams& p, const GradientSet& g, double lr);
};

/// target <- (1-tau)*online + tau*target, elementwise.
void soft_update(MlpParams& target, const MlpParams& online, double tau);

void save_params(const MlpParams& p, const std::filesystem::path& path);
MlpParams load_params(const std::filesystem::path& path);

}  // namespace comma::nn
