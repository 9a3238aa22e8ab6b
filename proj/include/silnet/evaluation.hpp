#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include <opencv2/core.hpp>

#include "silnet/types.hpp"

namespace silnet {

/// How the max-per-joint error aggregates.
enum class MaxPerJointMode {
  // Maximum over joints of the per-joint mean error (default).
  joint_mean,
  // Mean over frames of the per-frame maximum joint error.
  frame_max,
};

inline constexpr double kCdfMaxMm = 80.0;
inline constexpr double kCdfStepMm = 1.0;

struct EvalReport {
  std::size_t frames = 0;
  double mean_error_mm = 0.0;
  double max_per_joint_error_mm = 0.0;
  std::array<double, kNumJoints> per_joint_mean_mm{};
  // Thumb, index, middle, ring, pinky: mean over MCP, PIP, DIP, TIP.
  std::array<double, kNumFingers> per_finger_mean_mm{};
  // (threshold, fraction of frames whose maximum joint error is <= threshold)
  std::vector<std::pair<double, double>> error_cdf;
};

/// Per-frame, per-joint Euclidean errors (mm).
std::vector<std::array<double, kNumJoints>> joint_errors(const std::vector<HandPose>& preds,
                                                         const std::vector<HandPose>& gts);

EvalReport evaluate(const std::vector<HandPose>& preds, const std::vector<HandPose>& gts,
                    MaxPerJointMode mode = MaxPerJointMode::joint_mean);

inline constexpr std::array<const char*, kNumFingers> kFingerLabels = {"T", "I", "M", "R", "P"};

/// Flat "key value" text.
std::string format_report(const EvalReport& report);
EvalReport parse_report(const std::string& text, const std::string& origin = "report");
std::string format_cdf_csv(const EvalReport& report);
std::vector<std::pair<double, double>> parse_cdf_csv(const std::string& text, const std::string& origin = "cdf");
std::string format_per_frame_csv(const std::vector<std::array<double, kNumJoints>>& errors);

/// Pixel of a centered joint on the frontal plane at `scale` output pixels
/// per silhouette bin; matches the silhouette binning.
cv::Point overlay_pixel(const Point3& joint, double cube_mm, int scale = 1);

/// Silhouette (gray) with the ground-truth skeleton solid (blue) and the
/// predicted skeleton dashed (green), orthographically projected onto the
/// frontal plane.
cv::Mat render_overlay(const Sample& sample, const HandPose& pred, int scale = 4);

}  // namespace silnet
