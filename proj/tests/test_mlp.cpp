#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "comma/mlp.hpp"

using namespace comma::nn;
namespace fs = std::filesystem;

namespace {

double loss_of(const MlpParams& p, std::span<const double> x, std::span<const double> w) {
  const auto y = forward(p, x);
  double l = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) l += w[i] * y[i];
  return l;
}

}  // namespace

TEST_CASE("forward matches a hand-computed two-layer network") {
  MlpParams p = MlpParams::zeros({2, 2, 1}, OutputActivation::Affine);
  p.weights[0] = {1.0, 0.0, 0.0, 1.0};  // identity
  p.biases[0] = {0.0, 0.5};
  p.weights[1] = {2.0, -1.0};
  p.biases[1] = {0.25};
  const auto y = forward(p, std::vector<double>{0.3, -0.2});
  const double h0 = std::tanh(0.3), h1 = std::tanh(-0.2 + 0.5);
  CHECK(y.size() == 1);
  CHECK(y[0] == doctest::Approx(2.0 * h0 - h1 + 0.25).epsilon(1e-14));
}

TEST_CASE("backward agrees with central finite differences") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double h = 1e-6;
  int cases = 0;
  for (auto out_act : {OutputActivation::Affine, OutputActivation::Tanh}) {
    for (int trial = 0; trial < 8; ++trial) {
      auto p = MlpParams::random_init({4, 6, 5, 2}, out_act, rng);
      std::vector<double> x(4), og(2);
      for (auto& v : x) v = u(rng);
      for (auto& v : og) v = u(rng);

      ForwardCache cache;
      forward(p, x, cache);
      std::vector<double> in_grad;
      const auto g = backward(p, cache, og, &in_grad);

      // Every weight/bias partial, subsampled.
      for (std::size_t l = 0; l < p.num_layers(); ++l) {
        for (std::size_t i = 0; i < p.weights[l].size(); i += 3) {
          const double keep = p.weights[l][i];
          p.weights[l][i] = keep + h;
          const double lp = loss_of(p, x, og);
          p.weights[l][i] = keep - h;
          const double lm = loss_of(p, x, og);
          p.weights[l][i] = keep;
          CHECK(g.weights[l][i] == doctest::Approx((lp - lm) / (2 * h)).epsilon(1e-5));
          ++cases;
        }
        for (std::size_t i = 0; i < p.biases[l].size(); i += 2) {
          const double keep = p.biases[l][i];
          p.biases[l][i] = keep + h;
          const double lp = loss_of(p, x, og);
          p.biases[l][i] = keep - h;
          const double lm = loss_of(p, x, og);
          p.biases[l][i] = keep;
          CHECK(g.biases[l][i] == doctest::Approx((lp - lm) / (2 * h)).epsilon(1e-5));
          ++cases;
        }
      }
      // Input gradient, used to chain the critic into the actor.
      for (std::size_t i = 0; i < x.size(); ++i) {
        auto xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        CHECK(in_grad[i] ==
              doctest::Approx((loss_of(p, xp, og) - loss_of(p, xm, og)) / (2 * h)).epsilon(1e-5));
        ++cases;
      }
    }
  }
  CHECK(cases >= 100);
}

TEST_CASE("soft update algebra") {
  std::mt19937_64 rng(5);
  auto online = MlpParams::random_init({3, 4, 1}, OutputActivation::Affine, rng);
  auto target = MlpParams::random_init({3, 4, 1}, OutputActivation::Affine, rng);

  SUBCASE("tau=1 leaves the target unchanged") {
    auto t = target;
    soft_update(t, online, 1.0);
    for (std::size_t l = 0; l < t.num_layers(); ++l)
      for (std::size_t i = 0; i < t.weights[l].size(); ++i)
        CHECK(t.weights[l][i] == target.weights[l][i]);
  }
  SUBCASE("tau=0 copies the online network") {
    auto t = target;
    soft_update(t, online, 0.0);
    for (std::size_t l = 0; l < t.num_layers(); ++l)
      for (std::size_t i = 0; i < t.weights[l].size(); ++i)
        CHECK(t.weights[l][i] == online.weights[l][i]);
  }
  SUBCASE("intermediate tau blends elementwise") {
    for (double tau : {0.8, 0.995}) {
      auto t = target;
      soft_update(t, online, tau);
      for (std::size_t l = 0; l < t.num_layers(); ++l) {
        for (std::size_t i = 0; i < t.weights[l].size(); ++i)
          CHECK(t.weights[l][i] == doctest::Approx((1 - tau) * online.weights[l][i] +
                                                   tau * target.weights[l][i])
                                       .epsilon(1e-14));
        for (std::size_t i = 0; i < t.biases[l].size(); ++i)
          CHECK(t.biases[l][i] == doctest::Approx((1 - tau) * online.biases[l][i] +
                                                  tau * target.biases[l][i])
                                      .epsilon(1e-14));
      }
    }
  }
  SUBCASE("repeated slow updates converge geometrically toward the online net") {
    auto t = target;
    for (int k = 0; k < 2000; ++k) soft_update(t, online, 0.995);
    const double shrink = std::pow(0.995, 2000);
    for (std::size_t l = 0; l < t.num_layers(); ++l)
      for (std::size_t i = 0; i < t.weights[l].size(); ++i)
        CHECK(t.weights[l][i] - online.weights[l][i] ==
              doctest::Approx(shrink * (target.weights[l][i] - online.weights[l][i]))
                  .epsilon(1e-9));
  }
}

TEST_CASE("sgd on a quadratic reaches the minimum") {
  // Single parameter p, loss (p-3)^2: gradient 2(p-3), lr 0.1 contracts the
  // error by 0.8 each step, so 100 steps from 0 land within 1e-6 of 3.
  MlpParams p = MlpParams::zeros({1, 1}, OutputActivation::Affine);
  p.weights[0] = {0.0};
  GradientSet g = GradientSet::zeros_like(p);
  for (int k = 0; k < 100; ++k) {
    g.weights[0][0] = 2.0 * (p.weights[0][0] - 3.0);
    g.biases[0][0] = 0.0;
    sgd_step(p, g, 0.1);
  }
  CHECK(std::abs(p.weights[0][0] - 3.0) < 1e-6);
}

TEST_CASE("momentum with beta=0 matches plain sgd") {
  std::mt19937_64 rng(9);
  auto p1 = MlpParams::random_init({3, 5, 2}, OutputActivation::Tanh, rng);
  auto p2 = p1;
  SgdMomentum opt(p1, 0.0);
  auto g = GradientSet::zeros_like(p1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 5; ++k) {
    for (auto& w : g.weights)
      for (auto& v : w) v = u(rng);
    for (auto& b : g.biases)
      for (auto& v : b) v = u(rng);
    opt.step(p1, g, 0.01);
    sgd_step(p2, g, 0.01);
  }
  for (std::size_t l = 0; l < p1.num_layers(); ++l)
    for (std::size_t i = 0; i < p1.weights[l].size(); ++i)
      CHECK(p1.weights[l][i] == p2.weights[l][i]);
}

TEST_CASE("sgd_step rejects bad inputs") {
  std::mt19937_64 rng(1);
  auto p = MlpParams::random_init({2, 2}, OutputActivation::Affine, rng);
  auto g = GradientSet::zeros_like(p);
  CHECK_THROWS(sgd_step(p, g, 0.0));
  CHECK_THROWS(sgd_step(p, g, -1.0));
  g.weights[0][0] = std::nan("");
  CHECK_THROWS(sgd_step(p, g, 0.1));
}

TEST_CASE("checkpoint round trip and corruption handling") {
  std::mt19937_64 rng(31);
  auto p = MlpParams::random_init({7, 16, 16, 3}, OutputActivation::Tanh, rng);
  const fs::path path = fs::temp_directory_path() / "comma_mlp_roundtrip.bin";

  save_params(p, path);
  const auto q = load_params(path);
  REQUIRE(q.layer_sizes == p.layer_sizes);
  CHECK(q.output == p.output);
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    CHECK(q.weights[l] == p.weights[l]);
    CHECK(q.biases[l] == p.biases[l]);
  }

  SUBCASE("truncated file is rejected") {
    std::error_code ec;
    const auto size = fs::file_size(path, ec);
    fs::resize_file(path, size / 2, ec);
    CHECK_THROWS(load_params(path));
  }
  SUBCASE("wrong magic is rejected") {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE";
    os.close();
    CHECK_THROWS(load_params(path));
  }
  SUBCASE("missing file is rejected") { CHECK_THROWS(load_params(path / "nope")); }
  fs::remove(path);
}

TEST_CASE("training resumes identically from a checkpoint") {
  std::mt19937_64 rng(77);
  auto p = MlpParams::random_init({3, 8, 1}, OutputActivation::Affine, rng);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto one_step = [&](MlpParams& net, std::uint64_t step_seed) {
    std::mt19937_64 r(step_seed);
    std::vector<double> x(3), og(1, 1.0);
    for (auto& v : x) v = u(r);
    ForwardCache c;
    forward(net, x, c);
    sgd_step(net, backward(net, c, og), 0.01);
  };
  for (int k = 0; k < 10; ++k) one_step(p, 100 + k);

  const fs::path path = fs::temp_directory_path() / "comma_mlp_resume.bin";
  save_params(p, path);
  auto resumed = load_params(path);
  for (int k = 10; k < 20; ++k) {
    one_step(p, 100 + k);
    one_step(resumed, 100 + k);
  }
  for (std::size_t l = 0; l < p.num_layers(); ++l)
    CHECK(p.weights[l] == resumed.weights[l]);
  fs::remove(path);
}
