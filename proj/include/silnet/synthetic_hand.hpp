#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "silnet/types.hpp"

namespace silnet {

/// Index of a bone: bones 0..4 connect the wrist to each MCP, then finger f
/// owns bones 5 + 3f (MCP-PIP), 6 + 3f (PIP-DIP), 7 + 3f (DIP-TIP).
constexpr int bone_child_joint(int bone) {
  return bone < kNumFingers ? mcp_joint(bone) : 6 + (bone - kNumFingers);
}
constexpr int bone_finger(int bone) {
  return bone < kNumFingers ? bone : (bone - kNumFingers) / 3;
}
inline constexpr int kNumBones = kNumJoints - 1;

/// Articulations per finger: abduction, MCP flexion, PIP flexion, DIP flexion.
inline constexpr int kAnglesPerFinger = 4;
inline constexpr int kNumArticulations = kNumFingers * kAnglesPerFinger;

struct AngleRange {
  double min = 0.0;
  double max = 0.0;
  double mid() const { return 0.5 * (min + max); }
};

struct HandModelParams {
  std::array<double, kNumBones> bone_lengths{};
  std::array<double, kNumFingers> finger_radii{};
  double palm_radius = 0.0;
  std::array<AngleRange, kNumArticulations> joint_angle_ranges{};

  // Global placement of the hand in front of the camera.
  double max_tilt_rad = 0.0;    // half-angle of the palm-normal cone
  double max_roll_rad = 0.0;    // in-plane rotation range [-max, max]
  AngleRange distance_mm{};     // wrist depth range
  double lateral_range_mm = 0.0;

  /// Adult-hand defaults with loosely anatomical joint ranges.
  static HandModelParams defaults();
  std::vector<std::string> violations() const;
};

struct HandAngles {
  std::array<double, kNumArticulations> articulation{};
  Eigen::Matrix3d global_rotation = Eigen::Matrix3d::Identity();
  Point3 wrist_position = Point3::Zero();
};

/// Forward kinematics of the wrist-rooted five-finger chain (camera frame).
HandPose forward_kinematics(const HandAngles& angles, const HandModelParams& params);

/// Angles at the midpoint of every range, identity rotation, wrist at `wrist`.
HandAngles canonical_angles(const HandModelParams& params, const Point3& wrist);

/// Uniform draw within the articulation ranges and the global-rotation cone.
std::pair<HandAngles, HandPose> sample_pose(const HandModelParams& params, std::uint64_t seed);

/// Sub-seed of sample `index` in a dataset generated from `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// Sphere-swept segment; a sphere when a == b.
struct Capsule {
  Point3 a = Point3::Zero();
  Point3 b = Point3::Zero();
  double radius = 0.0;
};

/// One capsule per bone plus the palm sphere.
std::vector<Capsule> hand_geometry(const HandPose& pose, const HandModelParams& params);

/// Nearest-surface z-buffer of the capsules under the pinhole model.
/// Throws when any capsule reaches z <= 0.
DepthFrame render_depth(std::span<const Capsule> geometry, const CameraIntrinsics& intrinsics);
DepthFrame render_depth(const HandPose& pose, const HandModelParams& params,
                        const CameraIntrinsics& intrinsics);

/// Distance from p to the segment [a, b].
double point_segment_distance(const Point3& p, const Point3& a, const Point3& b);

struct DatasetSpec {
  int view_count = 3;
  double cube_mm = 300.0;
  CameraIntrinsics intrinsics = CameraIntrinsics::him2017();
};

/// Renders one training sample. Depth is quantized to whole millimeters
/// before the silhouettes are derived so the stored 16-bit depth reproduces them.
Sample make_sample(const HandModelParams& params, const DatasetSpec& spec, std::uint64_t seed);

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
  std::size_t total() const { return train + val + test; }
};

/// 8:1:1 split of n samples; the remainder goes to train.
SplitCounts split_counts(std::size_t n);

struct GenerationReport {
  SplitCounts counts;
  std::size_t skipped = 0;
};

/// Generates n samples, splits them 8:1:1 and writes the dataset layout.
/// Failed samples are skipped and logged; more than 1% failures is an error.
GenerationReport make_dataset(std::size_t n, const HandModelParams& params, const DatasetSpec& spec,
                              std::uint64_t seed, const std::filesystem::path& out_dir);

}  // namespace silnet
