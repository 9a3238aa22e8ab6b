#include "silnet/types.hpp"

#include <cmath>
#include <sstream>

namespace silnet {

std::array<int, kNumJoints> joint_parents() {
  std::array<int, kNumJoints> parents{};
  parents[kWrist] = -1;
  for (int f = 0; f < kNumFingers; ++f) {
    parents[mcp_joint(f)] = kWrist;
    parents[pip_joint(f)] = mcp_joint(f);
    parents[dip_joint(f)] = pip_joint(f);
    parents[tip_joint(f)] = dip_joint(f);
  }
  return parents;
}

Point3 HandPose::centroid() const {
  Point3 sum = Point3::Zero();
  for (const auto& j : joints) sum += j;
  return joints.empty() ? sum : Point3(sum / static_cast<double>(joints.size()));
}

HandPose HandPose::centered() const {
  HandPose out = *this;
  const Point3 c = centroid();
  for (auto& j : out.joints) j -= c;
  out.frame = CoordinateFrame::centered;
  return out;
}

CameraIntrinsics CameraIntrinsics::him2017() {
  return {475.065948, 475.065857, 315.944855, 245.287079, 640, 480};
}

std::vector<std::string> CameraIntrinsics::violations() const {
  std::vector<std::string> out;
  if (!(fx > 0.0) || !(fy > 0.0)) out.emplace_back("focal lengths must be positive");
  if (width <= 0 || height <= 0) out.emplace_back("image size must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    out.emplace_back("principal point outside image");
  }
  return out;
}

DepthFrame DepthFrame::zeros(const CameraIntrinsics& intrinsics) {
  DepthFrame frame;
  frame.intrinsics = intrinsics;
  frame.depth.assign(static_cast<std::size_t>(intrinsics.width) * intrinsics.height, 0.0f);
  return frame;
}

SilhouetteStack SilhouetteStack::zeros(int view_count) {
  SilhouetteStack stack;
  stack.view_count = view_count;
  stack.pixels.assign(view_count * view_pixels(), 0.0f);
  return stack;
}

GuidanceShape guidance_shape(int view_count) {
  if (view_count == 1) return {kSilhouetteSize / 4, kNumJoints};
  if (view_count == 3) return {kSilhouetteSize / 2, kNumJoints * 3};
  throw usage_error("view_count must be 1 or 3, got " + std::to_string(view_count));
}

std::string to_string(DpLevels levels) {
  switch (levels) {
    case DpLevels::none: return "none";
    case DpLevels::hdp: return "HDP";
    case DpLevels::fdp: return "FDP";
  }
  return "?";
}

DpLevels parse_dp_levels(const std::string& text) {
  if (text == "none") return DpLevels::none;
  if (text == "HDP" || text == "hdp") return DpLevels::hdp;
  if (text == "FDP" || text == "fdp") return DpLevels::fdp;
  throw usage_error("dp_levels must be one of none, HDP, FDP; got '" + text + "'");
}

std::vector<std::string> TrainConfig::violations() const {
  std::vector<std::string> out;
  auto require = [&out](bool ok, const char* message) {
    if (!ok) out.emplace_back(message);
  };
  require(lambda_P >= 0.0, "lambda_P must be nonnegative");
  require(lambda_dp >= 0.0, "lambda_dp must be nonnegative");
  require(lambda_W >= 0.0, "lambda_W must be nonnegative");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(lr_decay > 0.0, "lr_decay must be positive");
  require(adam_weight_decay >= 0.0, "adam_weight_decay must be nonnegative");
  require(epochs > 0, "epochs must be positive");
  require(batch_size > 0, "batch_size must be positive");
  require(max_steps >= 0, "max_steps must be nonnegative");
  require(view_count == 1 || view_count == 3, "view_count must be 1 or 3");
  require(width_scale > 0.0, "width_scale must be positive");
  return out;
}

std::vector<std::string> validate_sample(const Sample& sample, bool require_depth) {
  std::vector<std::string> out;

  const auto& joints = sample.pose.joints;
  if (joints.size() != kNumJoints) {
    std::ostringstream msg;
    msg << "joint count " << joints.size() << " != " << kNumJoints;
    out.push_back(msg.str());
  }
  bool finite = true;
  for (const auto& j : joints) finite = finite && j.allFinite();
  if (!finite) out.emplace_back("non-finite joint coordinate");
  if (finite && sample.pose.frame == CoordinateFrame::centered && !joints.empty() &&
      sample.pose.centroid().cwiseAbs().maxCoeff() > 1e-6) {
    out.emplace_back("centered pose has nonzero joint centroid");
  }

  const auto& sil = sample.silhouettes;
  if (sil.view_count != 1 && sil.view_count != 3) {
    out.push_back("view count " + std::to_string(sil.view_count) + " not in {1, 3}");
  } else if (sil.pixels.size() != sil.view_count * SilhouetteStack::view_pixels()) {
    out.push_back("silhouette size " + std::to_string(sil.pixels.size()) + " != " +
                  std::to_string(sil.view_count) + "x128x128");
  }
  for (float v : sil.pixels) {
    if (v != 0.0f && v != 1.0f) {
      out.emplace_back("non-binary silhouette value");
      break;
    }
  }

  if (sample.depth) {
    const auto& d = *sample.depth;
    for (auto& v : d.intrinsics.violations()) out.push_back("intrinsics: " + v);
    if (d.depth.size() != static_cast<std::size_t>(d.intrinsics.width) * d.intrinsics.height) {
      out.emplace_back("depth shape does not match intrinsics");
    }
    for (float v : d.depth) {
      if (!std::isfinite(v) || v < 0.0f) {
        out.emplace_back("depth values must be finite and nonnegative");
        break;
      }
    }
  } else if (require_depth) {
    out.emplace_back("missing depth frame");
  }

  if (!(sample.crop.cube_mm > 0.0)) out.emplace_back("cube_mm must be positive");
  if (!sample.crop.center_mm.allFinite()) out.emplace_back("non-finite crop center");
  return out;
}

}  // namespace silnet
