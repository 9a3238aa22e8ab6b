#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "silnet/types.hpp"
#include "test_support.hpp"

using namespace silnet;

namespace {

bool contains(const std::vector<std::string>& v, const std::string& needle) {
  return std::any_of(v.begin(), v.end(), [&](const std::string& s) { return s.find(needle) != std::string::npos; });
}

Sample valid_sample(std::mt19937_64& rng, int views = 3) {
  Sample s;
  s.silhouettes = SilhouetteStack::zeros(views);
  s.pose = test::random_centered_pose(rng);
  s.crop = {Point3(10, -5, 600), 300.0};
  return s;
}

}  // namespace

TEST(JointLayout, ParentsFormWristRootedChains) {
  const auto parents = joint_parents();
  EXPECT_EQ(parents[0], -1);
  for (int f = 0; f < kNumFingers; ++f) {
    EXPECT_EQ(parents[mcp_joint(f)], 0);
    EXPECT_EQ(parents[pip_joint(f)], mcp_joint(f));
    EXPECT_EQ(parents[dip_joint(f)], pip_joint(f));
    EXPECT_EQ(parents[tip_joint(f)], dip_joint(f));
  }
  EXPECT_EQ(tip_joint(4), 20);
}

TEST(HandPose, CenteredHasZeroCentroid) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    HandPose p;
    for (int j = 0; j < kNumJoints; ++j) p.joints.push_back(test::random_point(rng, 500.0) + Point3(0, 0, 700));
    const auto c = p.centered();
    EXPECT_EQ(c.frame, CoordinateFrame::centered);
    EXPECT_LT(c.centroid().cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(HandPose, CenteringIsIdempotent) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto once = test::random_centered_pose(rng, 200.0);
    const auto twice = once.centered();
    for (int j = 0; j < kNumJoints; ++j) EXPECT_LE((once.joints[j] - twice.joints[j]).norm(), 1e-6);
  }
}

TEST(CameraIntrinsics, Him2017IsValid) { EXPECT_TRUE(CameraIntrinsics::him2017().violations().empty()); }

TEST(CameraIntrinsics, RejectsBadValues) {
  auto k = CameraIntrinsics::him2017();
  k.fx = 0;
  EXPECT_FALSE(k.violations().empty());
  k = CameraIntrinsics::him2017();
  k.cx = k.width;  // must be < width
  EXPECT_FALSE(k.violations().empty());
  k = CameraIntrinsics::him2017();
  k.cy = -1;
  EXPECT_FALSE(k.violations().empty());
}

TEST(ValidateSample, EmptySilhouetteIsLegal) {
  std::mt19937_64 rng(3);
  EXPECT_TRUE(validate_sample(valid_sample(rng)).empty());
  EXPECT_TRUE(validate_sample(valid_sample(rng, 1)).empty());
}

TEST(ValidateSample, TwentyJoints) {
  std::mt19937_64 rng(4);
  auto s = valid_sample(rng);
  s.pose.joints.pop_back();
  s.pose = s.pose.centered();
  const auto v = validate_sample(s);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0], "joint count 20 != 21");
}

TEST(ValidateSample, NonBinaryPixel) {
  std::mt19937_64 rng(5);
  auto s = valid_sample(rng);
  s.silhouettes.at(1, 7, 9) = 0.5f;
  const auto v = validate_sample(s);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0], "non-binary silhouette value");
}

TEST(ValidateSample, DoesNotMutate) {
  std::mt19937_64 rng(6);
  auto s = valid_sample(rng);
  s.silhouettes.at(0, 1, 1) = 0.25f;
  const auto before = s;
  validate_sample(s);
  EXPECT_EQ(s.silhouettes, before.silhouettes);
  EXPECT_EQ(s.pose.joints, before.pose.joints);
}

TEST(ValidateSample, MissingDepthOnlyWhenRequired) {
  std::mt19937_64 rng(7);
  const auto s = valid_sample(rng);
  EXPECT_TRUE(validate_sample(s, false).empty());
  EXPECT_TRUE(contains(validate_sample(s, true), "missing depth frame"));
}

// Every single-field corruption is flagged.
TEST(ValidateSample, RandomCorruptionAlwaysDetected) {
  std::mt19937_64 rng(8);
  constexpr int kKinds = 11;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int trial = 0; trial < 400; ++trial) {
    auto s = valid_sample(rng, trial % 2 ? 3 : 1);
    s.depth = DepthFrame::zeros({100, 100, 32, 24, 64, 48});
    ASSERT_TRUE(validate_sample(s).empty());
    const int kind = static_cast<int>(rng() % kKinds);
    const auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
    switch (kind) {
      case 0: s.pose.joints.erase(s.pose.joints.begin() + static_cast<long>(pick(kNumJoints))); break;
      case 1: s.pose.joints[pick(kNumJoints)][static_cast<int>(pick(3))] = nan; break;
      case 2: s.pose.joints[pick(kNumJoints)] += Point3(0.5, 0, 0); break;  // breaks centering
      case 3: s.silhouettes.pixels[pick(s.silhouettes.pixels.size())] = 2.0f; break;
      case 4: s.silhouettes.pixels.pop_back(); break;
      case 5: s.silhouettes.view_count = 2; break;
      case 6: s.depth->depth[pick(s.depth->depth.size())] = -1.0f; break;
      case 7: s.depth->depth.pop_back(); break;
      case 8: s.depth->intrinsics.fy = -3; break;
      case 9: s.crop.cube_mm = 0.0; break;
      case 10: s.crop.center_mm.y() = std::numeric_limits<double>::infinity(); break;
    }
    EXPECT_FALSE(validate_sample(s).empty()) << "corruption kind " << kind;
  }
}

TEST(GuidanceShape, MatchesViewCount) {
  EXPECT_EQ(guidance_shape(1), (GuidanceShape{32, 21}));
  EXPECT_EQ(guidance_shape(3), (GuidanceShape{64, 63}));
  EXPECT_THROW(guidance_shape(2), Error);
}

TEST(TrainConfig, Defaults) {
  const TrainConfig c;
  EXPECT_EQ(c.lambda_P, 0.1);
  EXPECT_EQ(c.lambda_dp, 0.1);
  EXPECT_EQ(c.lambda_W, 0.01);
  EXPECT_EQ(c.learning_rate, 1e-2);
  EXPECT_EQ(c.epochs, 30);
  EXPECT_TRUE(c.violations().empty());
}

TEST(TrainConfig, Violations) {
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_FALSE(c.violations().empty());
  c = TrainConfig{};
  c.lambda_W = -1;
  EXPECT_FALSE(c.violations().empty());
  c = TrainConfig{};
  c.view_count = 2;
  EXPECT_FALSE(c.violations().empty());
  c = TrainConfig{};
  c.learning_rate = 0;
  EXPECT_FALSE(c.violations().empty());
}

TEST(DpLevels, ParseRoundTrip) {
  for (auto l : {DpLevels::none, DpLevels::hdp, DpLevels::fdp}) EXPECT_EQ(parse_dp_levels(to_string(l)), l);
  EXPECT_THROW(parse_dp_levels("XDP"), Error);
}
