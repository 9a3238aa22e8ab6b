#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace silnet {

/// Number of annotated hand joints.
inline constexpr int kNumJoints = 21;
/// Side length, in pixels, of every silhouette view.
inline constexpr int kSilhouetteSize = 128;
inline constexpr int kNumFingers = 5;

/// Joint ordering follows BigHand2.2M / HIM2017:
///   0 wrist, 1..5 MCP of (thumb, index, middle, ring, pinky),
///   then for each finger f in the same order PIP, DIP, TIP at 6 + 3f + {0, 1, 2}.
inline constexpr int kWrist = 0;
constexpr int mcp_joint(int finger) { return 1 + finger; }
constexpr int pip_joint(int finger) { return 6 + 3 * finger; }
constexpr int dip_joint(int finger) { return 7 + 3 * finger; }
constexpr int tip_joint(int finger) { return 8 + 3 * finger; }

/// Parent of every joint in the kinematic tree (-1 for the wrist).
std::array<int, kNumJoints> joint_parents();

enum class ErrorKind { usage, data, runtime };

/// Library error carrying a category that the CLI maps onto an exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error usage_error(const std::string& what) { return {ErrorKind::usage, what}; }
inline Error data_error(const std::string& what) { return {ErrorKind::data, what}; }
inline Error runtime_error(const std::string& what) { return {ErrorKind::runtime, what}; }

using Point3 = Eigen::Vector3d;
using PointCloud = std::vector<Point3>;

enum class CoordinateFrame { camera, centered };

/// 3D hand joints in millimeters.
struct HandPose {
  std::vector<Point3> joints;
  CoordinateFrame frame = CoordinateFrame::camera;

  Point3 centroid() const;
  /// Returns a copy translated so the joint centroid is the origin.
  HandPose centered() const;
};

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Intrinsics of the 640x480 depth sensor used for HIM2017.
  static CameraIntrinsics him2017();
  std::vector<std::string> violations() const;
};

/// Row-major depth image in millimeters; 0 marks a missing measurement.
struct DepthFrame {
  CameraIntrinsics intrinsics;
  std::vector<float> depth;

  float at(int row, int col) const { return depth[static_cast<std::size_t>(row) * intrinsics.width + col]; }
  float& at(int row, int col) { return depth[static_cast<std::size_t>(row) * intrinsics.width + col]; }
  static DepthFrame zeros(const CameraIntrinsics& intrinsics);
};

/// V binary views of 128x128 pixels. For V = 3 the views are ordered
/// (frontal XY, side YZ, top XZ).
struct SilhouetteStack {
  int view_count = 1;
  std::vector<float> pixels;

  static constexpr std::size_t view_pixels() { return std::size_t{kSilhouetteSize} * kSilhouetteSize; }
  static SilhouetteStack zeros(int view_count);

  float at(int view, int row, int col) const {
    return pixels[view * view_pixels() + static_cast<std::size_t>(row) * kSilhouetteSize + col];
  }
  float& at(int view, int row, int col) {
    return pixels[view * view_pixels() + static_cast<std::size_t>(row) * kSilhouetteSize + col];
  }
  bool operator==(const SilhouetteStack&) const = default;
};

/// Crop cube around the joint centroid.
struct CropSpec {
  Point3 center_mm = Point3::Zero();
  double cube_mm = 300.0;
};

struct Sample {
  SilhouetteStack silhouettes;
  HandPose pose;  // centered frame
  std::optional<DepthFrame> depth;
  CropSpec crop;
};

/// Spatial size and channel count of the depth-perception guidance and of
/// the latent heatmaps for a given number of views.
struct GuidanceShape {
  int scale = 0;
  int channels = 0;
  bool operator==(const GuidanceShape&) const = default;
};

/// S = 32 (1/4 of the input) for one view, S = 64 (1/2) for three views.
GuidanceShape guidance_shape(int view_count);

enum class DpLevels { none, hdp, fdp };

std::string to_string(DpLevels levels);
DpLevels parse_dp_levels(const std::string& text);

struct TrainConfig {
  double lambda_P = 0.1;
  double lambda_dp = 0.1;
  double lambda_W = 0.01;
  double learning_rate = 1e-2;
  // Per-epoch learning-rate multiplier.
  double lr_decay = 0.9;
  // Literal L2 weight decay handed to Adam. Off by default; lambda_W already
  // regularizes the weights through the loss.
  double adam_weight_decay = 0.0;
  int epochs = 30;
  int batch_size = 32;
  // Stop after this many optimizer steps; 0 means no limit.
  int max_steps = 0;
  int view_count = 3;
  DpLevels dp_levels = DpLevels::fdp;
  bool include_fake_depth_in_guidance = false;
  bool gt_depth_supervision = true;
  bool stop_gradient_on_guidance = false;
  // Multiplies every convolution width of both networks.
  double width_scale = 1.0;
  std::int64_t seed = 0;

  std::vector<std::string> violations() const;
};

/// Every invariant violation found in the sample; empty when valid.
std::vector<std::string> validate_sample(const Sample& sample, bool require_depth = false);

}  // namespace silnet
