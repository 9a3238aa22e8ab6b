#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "grad_check.hpp"
#include "oracles.hpp"
#include "silnet/dpn.hpp"
#include "silnet/losses.hpp"
#include "silnet/rpn.hpp"

using namespace silnet;
using namespace silnet::test;

namespace {

Dpn small_dpn(int views, std::uint64_t seed = 1) {
  torch::manual_seed(seed);
  return Dpn(DpnOptions::scaled(views, 0.25));
}

Rpn small_rpn(int views, std::uint64_t seed = 1) {
  torch::manual_seed(seed);
  auto o = RpnOptions::scaled(views, 0.25);
  o.hidden = 32;
  return Rpn(o);
}

bool all_finite(const torch::Tensor& t) { return torch::isfinite(t).all().item<bool>(); }

}  // namespace

class ViewCounts : public ::testing::TestWithParam<int> {};

TEST_P(ViewCounts, DpnShapes) {
  const int v = GetParam();
  const auto shape = guidance_shape(v);
  auto dpn = small_dpn(v);
  for (const auto& input : {random_silhouettes(2, v, 3), torch::zeros({2, v, 128, 128})}) {
    const auto out = dpn->forward(input);
    EXPECT_EQ(out.phi_dp.sizes(), (std::vector<std::int64_t>{2, shape.channels, shape.scale, shape.scale}));
    EXPECT_EQ(out.fake_depth.sizes(), (std::vector<std::int64_t>{2, 1, 128, 128}));
    EXPECT_EQ(out.level_features[0].size(2), 16);
    EXPECT_EQ(out.level_features[1].size(2), 32);
    EXPECT_EQ(out.level_features[2].size(2), 64);
    for (const auto& g : out.level_guidance) EXPECT_EQ(g.sizes(), out.phi_dp.sizes());
  }
}

TEST_P(ViewCounts, RpnShapes) {
  const int v = GetParam();
  const auto shape = guidance_shape(v);
  auto rpn = small_rpn(v);
  const auto out = rpn->forward(random_silhouettes(3, v, 4));
  ASSERT_EQ(out.heatmaps.size(), 2u);
  for (const auto& h : out.heatmaps) {
    EXPECT_EQ(h.sizes(), (std::vector<std::int64_t>{3, shape.channels, shape.scale, shape.scale}));
  }
  EXPECT_EQ(out.pose.sizes(), (std::vector<std::int64_t>{3, kNumJoints, 3}));
}

TEST_P(ViewCounts, HeatmapsMatchGuidanceShape) {
  const int v = GetParam();
  auto dpn = small_dpn(v);
  auto rpn = small_rpn(v);
  const auto input = random_silhouettes(2, v, 5);
  const auto guidance = dpn->forward(input).phi_dp;
  for (const auto& h : rpn->forward(input).heatmaps) EXPECT_EQ(h.sizes(), guidance.sizes());
}

TEST_P(ViewCounts, ZeroInputGivesFiniteOutputs) {
  const int v = GetParam();
  auto dpn = small_dpn(v);
  auto rpn = small_rpn(v);
  const auto zero = torch::zeros({2, v, 128, 128});
  for (bool training : {true, false}) {
    dpn->train(training);
    rpn->train(training);
    const auto d = dpn->forward(zero);
    EXPECT_TRUE(all_finite(d.phi_dp));
    EXPECT_TRUE(all_finite(d.fake_depth));
    const auto r = rpn->forward(zero);
    EXPECT_TRUE(all_finite(r.pose));
    for (const auto& h : r.heatmaps) EXPECT_TRUE(all_finite(h));
  }
}

TEST_P(ViewCounts, DuplicateRowsGiveIdenticalOutputs) {
  const int v = GetParam();
  auto rpn = small_rpn(v);
  auto dpn = small_dpn(v);
  const auto one = random_silhouettes(1, v, 6);
  const auto batch = torch::cat({one, one});
  for (bool training : {true, false}) {
    rpn->train(training);
    dpn->train(training);
    const auto r = rpn->forward(batch);
    EXPECT_TRUE(torch::equal(r.pose[0], r.pose[1]));
    const auto d = dpn->forward(batch);
    EXPECT_TRUE(torch::equal(d.phi_dp[0], d.phi_dp[1]));
  }
  // In eval mode a row does not depend on its batch mates.
  rpn->eval();
  const auto mixed = torch::cat({one, random_silhouettes(1, v, 7)});
  EXPECT_TRUE(torch::allclose(rpn->forward(mixed).pose[0], rpn->forward(one).pose[0], 1e-5, 1e-4));
}

INSTANTIATE_TEST_SUITE_P(Views, ViewCounts, ::testing::Values(1, 3));

TEST(Dpn, UnsupportedViewCountFailsAtConstruction) {
  DpnOptions o;
  o.view_count = 2;
  EXPECT_THROW(Dpn{o}, Error);
  RpnOptions r;
  r.view_count = 2;
  EXPECT_THROW(Rpn{r}, Error);
}

TEST(Dpn, FakeDepthInUnitRange) {
  auto dpn = small_dpn(3);
  const auto fake = dpn->forward(random_silhouettes(2, 3, 8)).fake_depth;
  EXPECT_GE(fake.min().item<float>(), 0.0f);
  EXPECT_LE(fake.max().item<float>(), 1.0f);
}

TEST(GuidanceVariant, Definitions) {
  auto dpn = small_dpn(3);
  const auto out = dpn->forward(random_silhouettes(2, 3, 9));
  const auto& l = out.level_guidance;
  const auto fdp = guidance_variant(out, DpLevels::fdp, false);
  const auto hdp = guidance_variant(out, DpLevels::hdp, false);
  EXPECT_TRUE(torch::allclose(fdp, l[0] + l[1] + l[2]));
  EXPECT_TRUE(torch::allclose(fdp, out.phi_dp));
  EXPECT_TRUE(torch::allclose(hdp, l[0] + l[1]));
  EXPECT_GT((fdp - hdp).abs().max().item<float>(), 0.0f);
  EXPECT_FALSE(guidance_variant(out, DpLevels::none, false).defined());

  // The generated depth is pooled to S x S and added to every channel.
  const auto with_fake = guidance_variant(out, DpLevels::fdp, true);
  const auto pooled = torch::nn::functional::adaptive_avg_pool2d(
      out.fake_depth, torch::nn::functional::AdaptiveAvgPool2dFuncOptions({64, 64}));
  for (int c : {0, 31, 62}) EXPECT_TRUE(torch::allclose(with_fake.select(1, c) - fdp.select(1, c), pooled.select(1, 0), 1e-5, 1e-6));
  const auto fake_only = guidance_variant(out, DpLevels::none, true);
  EXPECT_EQ(fake_only.sizes(), fdp.sizes());
}

TEST(GuidanceVariant, ZeroFakeDepthIsNeutral) {
  auto dpn = small_dpn(1);
  auto out = dpn->forward(random_silhouettes(2, 1, 10));
  out.fake_depth = torch::zeros_like(out.fake_depth);
  for (auto levels : {DpLevels::hdp, DpLevels::fdp}) {
    EXPECT_TRUE(torch::equal(guidance_variant(out, levels, true), guidance_variant(out, levels, false)));
  }
}

TEST(Dpn, ParametersReachedByDepthAndGuidanceLosses) {
  auto dpn = small_dpn(3);
  const auto input = random_silhouettes(4, 3, 11);
  const auto out = dpn->forward(input);
  const auto real = torch::rand({4, 1, 128, 128});
  const auto target = torch::randn_like(out.phi_dp);
  (loss_p(out.fake_depth, real, real > 0.3) + loss_dp({target}, out.phi_dp)).backward();
  for (const auto& p : dpn->named_parameters()) {
    ASSERT_TRUE(p.value().grad().defined()) << p.key();
    EXPECT_GT(p.value().grad().abs().max().item<float>(), 0.0f) << p.key();
  }
}

// The per-scale transforms only feed the guidance; everything else on the
// generator path is reached by the depth loss alone.
TEST(Dpn, DepthLossReachesGeneratorPath) {
  auto dpn = small_dpn(1);
  const auto out = dpn->forward(random_silhouettes(4, 1, 12));
  const auto real = torch::rand({4, 1, 128, 128});
  loss_p(out.fake_depth, real, real > 0.3).backward();
  for (const auto& p : dpn->named_parameters()) {
    if (p.key().rfind("transform_", 0) == 0) continue;
    ASSERT_TRUE(p.value().grad().defined()) << p.key();
    EXPECT_GT(p.value().grad().abs().max().item<float>(), 0.0f) << p.key();
  }
}

TEST(Rpn, EveryParameterReceivesGradient) {
  auto rpn = small_rpn(3);
  const auto out = rpn->forward(random_silhouettes(4, 3, 13));
  const auto gt = torch::randn({4, kNumJoints, 3}) * 30;
  const auto guidance = torch::randn_like(out.heatmaps[0]);
  (loss_reg(out.pose, gt) + loss_dp(out.heatmaps, guidance)).backward();
  for (const auto& p : rpn->named_parameters()) {
    ASSERT_TRUE(p.value().grad().defined()) << p.key();
    EXPECT_GT(p.value().grad().abs().max().item<float>(), 0.0f) << p.key();
  }
}

TEST(Rpn, PoseIsCentered) {
  auto rpn = small_rpn(1);
  const auto pose = rpn->forward(random_silhouettes(3, 1, 14)).pose;
  EXPECT_LT(pose.mean(1).abs().max().item<float>(), 1e-3f);
}

TEST(Rpn, TensorConversionsRoundTrip) {
  HandPose p;
  p.frame = CoordinateFrame::centered;
  for (int j = 0; j < kNumJoints; ++j) p.joints.emplace_back(j - 10.0, 2.0 * (j % 3) - 2.0, 0.5 * (j % 2) - 0.25);
  p = p.centered();
  const auto t = to_pose_tensor({&p});
  const auto back = pose_from_tensor(t, 0);
  for (int j = 0; j < kNumJoints; ++j) EXPECT_LT((back.joints[j] - p.joints[j]).norm(), 1e-5);

  auto s = SilhouetteStack::zeros(3);
  s.at(2, 5, 7) = 1.0f;
  const auto in = to_input_tensor({&s});
  EXPECT_EQ(in[0][2][5][7].item<float>(), 1.0f);
  EXPECT_EQ(in.sum().item<float>(), 1.0f);
}

// Central differences at double precision over a random subset of every
// parameter tensor.
class NetworkGradients : public ::testing::TestWithParam<int> {};

TEST_P(NetworkGradients, Rpn) {
  const int v = GetParam();
  auto rpn = small_rpn(v, 21);
  rpn->to(torch::kDouble);
  rpn->train();
  const auto input = random_silhouettes(2, v, 22).to(torch::kDouble);
  auto objective = [&] {
    const auto out = rpn->forward(input);
    auto value = project(out.pose, 1) * 1e-2;
    for (std::size_t s = 0; s < out.heatmaps.size(); ++s) value = value + project(out.heatmaps[s], 2 + s);
    return value;
  };
  const auto r = test::check_gradients(objective, rpn->parameters(), 3, 23, 1e-6);
  EXPECT_GT(r.checked, 50);
  EXPECT_LT(r.worst_rel, 1e-4) << r.worst_where;
}

TEST_P(NetworkGradients, Dpn) {
  const int v = GetParam();
  auto dpn = small_dpn(v, 31);
  dpn->to(torch::kDouble);
  dpn->train();
  const auto input = random_silhouettes(2, v, 32).to(torch::kDouble);
  auto objective = [&] {
    const auto out = dpn->forward(input);
    return project(out.phi_dp, 3) + project(out.fake_depth, 4) * 10.0;
  };
  const auto r = test::check_gradients(objective, dpn->parameters(), 3, 33, 1e-6);
  EXPECT_GT(r.checked, 30);
  EXPECT_LT(r.worst_rel, 1e-4) << r.worst_where;
}

// Directional derivative of mean(phi_dp) with respect to a real-valued input.
TEST_P(NetworkGradients, DpnInputDirection) {
  const int v = GetParam();
  auto dpn = small_dpn(v, 41);
  dpn->to(torch::kDouble);
  dpn->eval();
  torch::manual_seed(42);
  const auto x = torch::rand({2, v, 128, 128}, torch::kDouble).requires_grad_(true);
  const auto dir = torch::randn({2, v, 128, 128}, torch::kDouble);
  const auto f = [&](const torch::Tensor& in) { return dpn->forward(in).phi_dp.mean(); };
  f(x).backward();
  const double analytic = (x.grad() * dir).sum().item<double>();
  torch::NoGradGuard no_grad;
  const double h = 1e-6;
  const double numeric = (f(x + h * dir).item<double>() - f(x - h * dir).item<double>()) / (2 * h);
  EXPECT_LT(std::abs(analytic - numeric) / std::abs(numeric), 1e-4) << analytic << " vs " << numeric;
}

INSTANTIATE_TEST_SUITE_P(Views, NetworkGradients, ::testing::Values(1, 3));
