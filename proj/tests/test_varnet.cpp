#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "test_support.hpp"
#include "varnet_oracle.hpp"
#include "vnsp/varnet.hpp"

namespace vnsp {
namespace {

using testing::random_coils;
using testing::random_image;
using testing::random_pattern;

VnParams random_params(const VnConfig& cfg, std::mt19937_64& rng, double scale = 0.3) {
  VnParams p(cfg);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& v : p.values) v = u(rng);
  for (int j = 0; j < cfg.layers; ++j) p.alpha(j) = 0.2 + 0.5 * std::abs(u(rng));
  return p;
}

Dataset random_dataset(const GridShape& g, int n, std::mt19937_64& rng) {
  Dataset d;
  d.grid = g;
  for (int i = 0; i < n; ++i) d.items.push_back({random_image(g, rng), random_coils(g, rng)});
  return d;
}

TEST(VnForward, ZeroNetworkReturnsZeroFilledImage) {
  std::mt19937_64 rng(1);
  const GridShape g{8, 8, 1, 2};
  const VnParams p(VnConfig{2, 2, 3, 1});
  const CoilMap c = random_coils(g, rng);
  const SamplingPattern sp = random_pattern(g, 0.4, rng);
  const KSpaceData mbar = encode_sampled(random_image(g, rng), c, sp);
  EXPECT_EQ(vn_forward(p, mbar, sp, c).data, adjoint_encode(mbar, c, sp).data);
}

TEST(VnForward, UnitStepAtFullSamplingRecoversImage) {
  std::mt19937_64 rng(2);
  const GridShape g{8, 8, 1, 3};
  VnParams p(VnConfig{3, 2, 3, 1});
  for (int j = 0; j < 3; ++j) p.alpha(j) = 1.0;
  const CoilMap c = random_coils(g, rng);
  const SamplingPattern sp = testing::full_pattern(g);
  const ImageStack x = random_image(g, rng);
  const ImageStack out = vn_forward(p, encode_sampled(x, c, sp), sp, c);
  EXPECT_LT(testing::max_abs_diff(out.data, x.data), 1e-10);
}

TEST(VnForward, MatchesStraightLineOracle) {
  std::mt19937_64 rng(3);
  for (const GridShape& g : {GridShape{8, 8, 1, 2}, GridShape{6, 5, 3, 2}}) {
    const VnParams p = random_params(VnConfig{2, 2, 3, g.nt}, rng);
    const CoilMap c = random_coils(g, rng);
    const SamplingPattern sp = random_pattern(g, 0.5, rng);
    const KSpaceData mbar = encode_sampled(random_image(g, rng), c, sp);
    const auto fast = vn_forward(p, mbar, sp, c).data;
    const auto slow = testing::NaiveNet{p, c, sp, g}.run(mbar.data);
    EXPECT_LT(testing::max_abs_diff(fast, slow), 1e-12);
  }
}

TEST(VnForward, DeterministicBitwise) {
  std::mt19937_64 rng(4);
  const GridShape g{8, 8, 1, 2};
  const VnParams p = random_params(VnConfig{2, 2, 3, 1}, rng);
  const CoilMap c = random_coils(g, rng);
  const SamplingPattern sp = random_pattern(g, 0.5, rng);
  const KSpaceData mbar = encode_sampled(random_image(g, rng), c, sp);
  EXPECT_EQ(vn_forward(p, mbar, sp, c).data, vn_forward(p, mbar, sp, c).data);
}

TEST(VnForward, RejectsFrameMismatchAndNonFinite) {
  std::mt19937_64 rng(5);
  const GridShape g{8, 8, 2, 2};
  const CoilMap c = random_coils(g, rng);
  const SamplingPattern sp = random_pattern(g, 0.5, rng);
  const KSpaceData mbar = encode_sampled(random_image(g, rng), c, sp);
  EXPECT_THROW(vn_forward(VnParams(VnConfig{2, 2, 3, 1}), mbar, sp, c), ShapeError);
  VnParams p(VnConfig{2, 2, 3, 2});
  p.alpha(1) = std::numeric_limits<double>::infinity();
  try {
    vn_forward(p, mbar, sp, c);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 2"), std::string::npos);
  }
}

TEST(Loss, BasicValues) {
  const GridShape g{1, 2, 1, 1};
  ImageStack a(g), b(g);
  EXPECT_EQ(loss(a, b), 0.0);
  a.data = {cplx(3.0, 0.0), cplx(0.0, 4.0)};
  b.data = {cplx{}, cplx{}};
  EXPECT_EQ(loss(a, b), 25.0);
  EXPECT_EQ(loss(b, a), loss(a, b));
  EXPECT_THROW(loss(a, ImageStack(GridShape{2, 1, 1, 1})), ShapeError);
}

TEST(VnBackward, ZeroNetworkAtFixedPointHasZeroLossAndGradient) {
  std::mt19937_64 rng(6);
  const GridShape g{8, 8, 1, 2};
  const CoilMap c = random_coils(g, rng);
  const SamplingPattern sp = testing::full_pattern(g);
  const auto res = vn_backward(VnParams(VnConfig{2, 2, 3, 1}), random_image(g, rng), sp, c);
  EXPECT_LT(res.loss, 1e-20);
  for (double v : res.grads.values) EXPECT_LT(std::abs(v), 1e-9);
}

TEST(VnBackward, AlphaGradientVanishesWhenDataTermIsZero) {
  // Full sampling with alpha_1 = 1 makes x_2 exact, so layer 2's data residual is zero.
  std::mt19937_64 rng(7);
  const GridShape g{8, 8, 1, 2};
  VnParams p(VnConfig{2, 2, 3, 1});
  p.alpha(0) = 1.0;
  p.alpha(1) = 0.4;
  const auto res = vn_backward(p, random_image(g, rng), testing::full_pattern(g), random_coils(g, rng));
  EXPECT_LT(std::abs(res.grads.alpha(1)), 1e-12);
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

TEST(VnBackward, MatchesCentralFiniteDifferences) {
  std::mt19937_64 rng(8);
  const GridShape g{8, 8, 1, 2};
  const VnParams p = random_params(VnConfig{2, 2, 3, 1}, rng);
  const CoilMap c = random_coils(g, rng);
  const SamplingPattern sp = random_pattern(g, 0.4, rng);
  const ImageStack x = random_image(g, rng);
  const auto res = vn_backward(p, x, sp, c);
  const KSpaceData mbar = encode_sampled(x, c, sp);
  auto f = [&](const VnParams& q) { return loss(x, vn_forward(q, mbar, sp, c)); };
  EXPECT_DOUBLE_EQ(res.loss, f(p));
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    VnParams plus = p, minus = p;
    plus.values[i] += h;
    minus.values[i] -= h;
    const double fd = (f(plus) - f(minus)) / (2 * h);
    worst = std::max(worst, relative_error(fd, res.grads.values[i]));
    EXPECT_LT(relative_error(fd, res.grads.values[i]), 1e-5) << "parameter " << i;
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(VnBackward, MatchesFiniteDifferencesWithFrames) {
  std::mt19937_64 rng(9);
  const GridShape g{6, 6, 3, 2};
  const VnParams p = random_params(VnConfig{2, 2, 3, 3}, rng, 0.2);
  const CoilMap c = random_coils(g, rng);
  const SamplingPattern sp = random_pattern(g, 0.4, rng);
  const ImageStack x = random_image(g, rng);
  const auto res = vn_backward(p, x, sp, c);
  const KSpaceData mbar = encode_sampled(x, c, sp);
  auto f = [&](const VnParams& q) { return loss(x, vn_forward(q, mbar, sp, c)); };
  const double h = 1e-5;
  for (std::size_t i = 0; i < p.values.size(); i += 7) {
    VnParams plus = p, minus = p;
    plus.values[i] += h;
    minus.values[i] -= h;
    EXPECT_LT(relative_error((f(plus) - f(minus)) / (2 * h), res.grads.values[i]), 1e-5) << "parameter " << i;
  }
}

TEST(CostOverDataset, FullSamplingZeroNetworkIsZero) {
  std::mt19937_64 rng(10);
  const GridShape g{8, 8, 1, 2};
  const Dataset d = random_dataset(g, 1, rng);
  EXPECT_LT(cost_over_dataset(VnParams(VnConfig{2, 2, 3, 1}), testing::full_pattern(g), d), 1e-20);
}

TEST(CostOverDataset, MeanOfItemLossesAndInvariances) {
  std::mt19937_64 rng(11);
  const GridShape g{8, 8, 1, 2};
  const Dataset d = random_dataset(g, 4, rng);
  const VnParams p = random_params(VnConfig{2, 2, 3, 1}, rng);
  const SamplingPattern sp = random_pattern(g, 0.4, rng);
  double mean = 0.0;
  for (const auto& it : d.items) mean += loss(it.image, reconstruct(p, sp, it));
  mean /= 4.0;
  const double cost = cost_over_dataset(p, sp, d);
  EXPECT_NEAR(cost, mean, 1e-12 * mean);

  Dataset doubled = d;
  for (const auto& it : d.items) doubled.items.push_back(it);
  EXPECT_NEAR(cost_over_dataset(p, sp, doubled), cost, 1e-12 * cost);

  Dataset reversed = d;
  std::reverse(reversed.items.begin(), reversed.items.end());
  EXPECT_NEAR(cost_over_dataset(p, sp, reversed), cost, 1e-12 * cost);

  EXPECT_THROW(cost_over_dataset(p, sp, Dataset{}), std::invalid_argument);
}

TEST(ParamFile, RoundTripIsBitExact) {
  const VnParams p = init_params(VnConfig{3, 4, 5, 2}, 99);
  const auto path = std::filesystem::temp_directory_path() / "vnsp_params_roundtrip.vnp";
  write_params(p, path);
  const VnParams q = read_params(path);
  EXPECT_EQ(q.config, p.config);
  EXPECT_EQ(encode_params(q), encode_params(p));
  EXPECT_TRUE(q == p);
  std::filesystem::remove(path);

  std::string bad = encode_params(p);
  bad.pop_back();
  EXPECT_THROW(decode_params(bad), ParseError);
  EXPECT_THROW(decode_params("vnp2" + bad.substr(4)), ParseError);
}

TEST(InitParams, ScaleAndAlpha) {
  const VnConfig cfg{3, 4, 5, 1};
  const VnParams p = init_params(cfg, 5);
  const double bound = 1.0 / std::sqrt(5.0 * 5.0 * 1.0 * 4.0);
  for (int j = 0; j < cfg.layers; ++j) {
    EXPECT_EQ(p.alpha(j), 0.1);
    for (int f = 0; f < cfg.filters; ++f)
      for (int ch = 0; ch < 2; ++ch)
        for (double v : p.k(j, f, ch)) EXPECT_LE(std::abs(v), bound);
  }
  EXPECT_TRUE(init_params(cfg, 5) == p);
  EXPECT_FALSE(init_params(cfg, 6) == p);
}

}  // namespace
}  // namespace vnsp
