#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "silnet/dataset_io.hpp"
#include "silnet/preprocessing.hpp"
#include "silnet/synthetic_hand.hpp"
#include "test_support.hpp"

using namespace silnet;
namespace fs = std::filesystem;

namespace {

const HandModelParams kParams = HandModelParams::defaults();

void expect_bone_lengths(const HandPose& pose) {
  const auto parents = joint_parents();
  for (int bone = 0; bone < kNumBones; ++bone) {
    const int child = bone_child_joint(bone);
    const double len = (pose.joints[child] - pose.joints[parents[child]]).norm();
    EXPECT_NEAR(len, kParams.bone_lengths[bone], 1e-6) << "bone " << bone;
  }
}

std::map<std::string, std::string> file_hashes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = io::sha256_hex(io::read_bytes(e.path()));
  }
  return out;
}

}  // namespace

TEST(HandModelParams, DefaultsAreValid) { EXPECT_TRUE(kParams.violations().empty()); }

TEST(HandModelParams, FlagsBadFields) {
  auto p = kParams;
  p.bone_lengths[3] = 0;
  p.joint_angle_ranges[2] = {1.0, 0.5};
  const auto v = p.violations();
  ASSERT_EQ(v.size(), 2u);
  EXPECT_NE(v[0].find("bone_lengths[3]"), std::string::npos);
  EXPECT_NE(v[1].find("joint_angle_ranges[2]"), std::string::npos);
}

TEST(ForwardKinematics, CanonicalPoseHasWristAtOffset) {
  const Point3 wrist(12, -30, 650);
  const auto pose = forward_kinematics(canonical_angles(kParams, wrist), kParams);
  ASSERT_EQ(pose.joints.size(), static_cast<std::size_t>(kNumJoints));
  EXPECT_EQ(pose.joints[kWrist], wrist);
  EXPECT_EQ(pose.frame, CoordinateFrame::camera);
  expect_bone_lengths(pose);
}

TEST(ForwardKinematics, ZeroAnglesGiveStraightFingers) {
  HandAngles a;
  const auto pose = forward_kinematics(a, kParams);
  for (int f = 0; f < kNumFingers; ++f) {
    const Point3 d1 = (pose.joints[pip_joint(f)] - pose.joints[mcp_joint(f)]).normalized();
    const Point3 d2 = (pose.joints[tip_joint(f)] - pose.joints[dip_joint(f)]).normalized();
    EXPECT_NEAR(d1.dot(d2), 1.0, 1e-12);
    EXPECT_NEAR(pose.joints[tip_joint(f)].z(), 0.0, 1e-9);  // flat hand stays in the image plane
  }
}

TEST(SamplePose, Deterministic) {
  for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
    const auto [a1, p1] = sample_pose(kParams, seed);
    const auto [a2, p2] = sample_pose(kParams, seed);
    EXPECT_EQ(p1.joints, p2.joints);
    EXPECT_EQ(a1.articulation, a2.articulation);
  }
  EXPECT_NE(sample_pose(kParams, 1).second.joints, sample_pose(kParams, 2).second.joints);
}

TEST(SamplePose, BoneLengthsAndRanges) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto [angles, pose] = sample_pose(kParams, seed);
    expect_bone_lengths(pose);
    for (int i = 0; i < kNumArticulations; ++i) {
      EXPECT_GE(angles.articulation[i], kParams.joint_angle_ranges[i].min);
      EXPECT_LE(angles.articulation[i], kParams.joint_angle_ranges[i].max);
    }
    const Point3 normal = angles.global_rotation * Point3::UnitZ();
    EXPECT_GE(normal.z(), std::cos(kParams.max_tilt_rad) - 1e-12);
    EXPECT_GE(angles.wrist_position.z(), kParams.distance_mm.min);
    EXPECT_LE(angles.wrist_position.z(), kParams.distance_mm.max);
  }
}

TEST(RenderDepth, SphereOnOpticalAxis) {
  const CameraIntrinsics k{500, 500, 320, 240, 640, 480};
  const std::vector<Capsule> sphere{{Point3(0, 0, 500), Point3(0, 0, 500), 20.0}};
  const auto frame = render_depth(sphere, k);
  EXPECT_FLOAT_EQ(frame.at(240, 320), 480.0f);
  EXPECT_EQ(frame.at(0, 0), 0.0f);
}

TEST(RenderDepth, EmptyGeometryGivesZeroFrame) {
  const auto frame = render_depth(std::span<const Capsule>{}, CameraIntrinsics::him2017());
  EXPECT_TRUE(std::all_of(frame.depth.begin(), frame.depth.end(), [](float d) { return d == 0.0f; }));
}

TEST(RenderDepth, BehindCameraIsAnError) {
  const std::vector<Capsule> g{{Point3(0, 0, 10), Point3(0, 0, 100), 20.0}};
  EXPECT_THROW(render_depth(g, CameraIntrinsics::him2017()), Error);
}

// Every rendered pixel lies on the surface of the nearest capsule.
TEST(RenderDepth, PixelsLieOnCapsuleSurfaces) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto pose = sample_pose(kParams, seed).second;
    const auto geometry = hand_geometry(pose, kParams);
    const auto cloud = backproject(render_depth(geometry, CameraIntrinsics::him2017()));
    ASSERT_GT(cloud.size(), 500u);
    double worst = 0.0;
    for (const auto& p : cloud) {
      double gap = std::numeric_limits<double>::infinity();
      for (const auto& c : geometry) gap = std::min(gap, point_segment_distance(p, c.a, c.b) - c.radius);
      worst = std::max(worst, std::abs(gap));
    }
    EXPECT_LT(worst, 0.01) << "seed " << seed;
  }
}

TEST(PointSegmentDistance, Cases) {
  const Point3 a(0, 0, 0), b(10, 0, 0);
  EXPECT_DOUBLE_EQ(point_segment_distance({5, 3, 0}, a, b), 3.0);
  EXPECT_DOUBLE_EQ(point_segment_distance({-4, 3, 0}, a, b), 5.0);
  EXPECT_DOUBLE_EQ(point_segment_distance({13, 0, 4}, a, b), 5.0);
  EXPECT_DOUBLE_EQ(point_segment_distance({1, 1, 1}, a, a), std::sqrt(3.0));
}

TEST(MakeSample, SilhouettesMatchStoredDepth) {
  const DatasetSpec spec;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = make_sample(kParams, spec, derive_seed(5, seed));
    EXPECT_TRUE(validate_sample(s, true).empty());
    const auto cloud = crop_to(backproject(*s.depth), s.crop);
    EXPECT_EQ(project_views(cloud, 3, s.crop.cube_mm).stack, s.silhouettes);
  }
}

TEST(SplitCounts, EightOneOne) {
  const auto c = split_counts(10);
  EXPECT_EQ(c.train, 8u);
  EXPECT_EQ(c.val, 1u);
  EXPECT_EQ(c.test, 1u);
  EXPECT_EQ(split_counts(100).train, 80u);
  EXPECT_EQ(split_counts(7).train, 7u);
}

TEST(MakeDataset, TenSamplesDeterministic) {
  test::TempDir a("gen_a"), b("gen_b");
  const auto ra = make_dataset(10, kParams, {}, 42, a.path());
  make_dataset(10, kParams, {}, 42, b.path());
  EXPECT_EQ(ra.counts.train, 8u);
  EXPECT_EQ(ra.counts.val, 1u);
  EXPECT_EQ(ra.counts.test, 1u);
  EXPECT_EQ(ra.skipped, 0u);
  const auto ha = file_hashes(a.path());
  EXPECT_EQ(ha.size(), 1u + 10 * 5);
  EXPECT_EQ(ha, file_hashes(b.path()));
  EXPECT_EQ(load_split(a.path(), "test").size(), 1u);
}

// Samples depend only on (seed, index), so any generation order agrees.
TEST(MakeDataset, SamplesIndependentOfOrder) {
  test::TempDir dir("gen_order");
  make_dataset(10, kParams, {}, 3, dir.path());
  const auto val = load_split(dir.path(), "val");
  ASSERT_EQ(val.size(), 1u);
  const auto alone = make_sample(kParams, {}, derive_seed(3, 8));
  EXPECT_EQ(val[0].silhouettes, alone.silhouettes);
  EXPECT_EQ(val[0].pose.joints, alone.pose.joints);
}

TEST(MakeDataset, RejectsBadArguments) {
  test::TempDir dir("gen_bad");
  EXPECT_THROW(make_dataset(0, kParams, {}, 1, dir.path()), Error);
  auto p = kParams;
  p.palm_radius = -1;
  try {
    make_dataset(5, p, {}, 1, dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("palm_radius"), std::string::npos);
  }
}

TEST(MakeDataset, ThousandSamplesAllValid) {
  test::TempDir dir("gen_1000");
  const auto report = make_dataset(1000, kParams, {}, 2024, dir.path());
  EXPECT_EQ(report.counts.total(), 1000u);
  std::size_t n = 0;
  for (const char* split : {"train", "val", "test"}) {
    for (const auto& s : load_split(dir.path(), split)) {
      EXPECT_TRUE(validate_sample(s, true).empty());
      ++n;
    }
  }
  EXPECT_EQ(n, 1000u);
}

// A joint counts as occluded when the visible surface in its frontal bin is
// nearer than the joint by more than the thickest body part, palm included.
TEST(Generator, SelfOcclusionIsCommon) {
  const DatasetSpec spec;
  const double thickest =
      std::max(kParams.palm_radius, *std::max_element(kParams.finger_radii.begin(), kParams.finger_radii.end()));
  const double margin = thickest + 5.0;
  int occluded = 0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const auto s = make_sample(kParams, spec, derive_seed(77, i));
    const auto target = depth_target_for(s);
    bool any = false;
    for (const auto& j : s.pose.joints) {
      const auto bin = project_point(j, ViewPlane::frontal, spec.cube_mm);
      if (!bin.valid()) continue;
      const float surface = target.at(bin.row, bin.col);
      if (surface == 0.0f) continue;
      const double surface_z = (surface - 0.5) * spec.cube_mm;
      if (surface_z < j.z() - margin) any = true;
    }
    occluded += any;
  }
  RecordProperty("occluded_fraction", std::to_string(occluded / 1000.0));
  EXPECT_GE(occluded, 50);
}

TEST(Generator, DistinctPosesGiveDistinctSilhouettes) {
  std::vector<SilhouetteStack> stacks;
  for (std::uint64_t i = 0; i < 200; ++i) stacks.push_back(make_sample(kParams, {}, derive_seed(9, i)).silhouettes);
  std::size_t pairs = 0, equal = 0;
  for (std::size_t a = 0; a < stacks.size(); ++a) {
    for (std::size_t b = a + 1; b < stacks.size(); ++b) {
      ++pairs;
      equal += stacks[a] == stacks[b];
    }
  }
  EXPECT_LE(equal * 100, pairs);
}
