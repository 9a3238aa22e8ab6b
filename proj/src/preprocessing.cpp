#include "silnet/preprocessing.hpp"

#include <cmath>
#include <limits>

namespace silnet {

PointCloud backproject(const DepthFrame& frame) {
  const auto& k = frame.intrinsics;
  PointCloud cloud;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const double z = frame.at(v, u);
      if (z <= 0.0) continue;
      cloud.emplace_back((u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z);
    }
  }
  return cloud;
}

namespace {

bool inside_cube(const Point3& p, double half) {
  return p.x() >= -half && p.x() < half && p.y() >= -half && p.y() < half && p.z() >= -half &&
         p.z() < half;
}

}  // namespace

PointCloud crop_to(const PointCloud& cloud, const CropSpec& crop) {
  const double half = crop.cube_mm / 2.0;
  PointCloud out;
  out.reserve(cloud.size());
  for (const auto& p : cloud) {
    Point3 q = p - crop.center_mm;
    if (inside_cube(q, half)) out.push_back(q);
  }
  return out;
}

CenteredHand crop_and_center(const PointCloud& cloud, const HandPose& pose, double cube_mm) {
  if (!(cube_mm > 0.0)) throw usage_error("cube_mm must be positive");
  if (pose.frame != CoordinateFrame::camera) throw usage_error("crop_and_center expects a camera-frame pose");
  CenteredHand out;
  out.crop = {pose.centroid(), cube_mm};
  out.pose = pose.centered();
  out.cloud = crop_to(cloud, out.crop);
  if (out.cloud.empty()) throw data_error("hand not in crop volume");
  return out;
}

int coordinate_bin(double value, double cube_mm, int resolution) {
  const double scaled = std::floor((value / cube_mm + 0.5) * resolution);
  if (!(scaled >= 0.0) || scaled >= resolution) return -1;
  return static_cast<int>(scaled);
}

PixelBin project_point(const Point3& p, ViewPlane plane, double cube_mm, int resolution) {
  double col = 0.0;
  double row = 0.0;
  switch (plane) {
    case ViewPlane::frontal: col = p.x(); row = p.y(); break;
    case ViewPlane::side: col = p.z(); row = p.y(); break;
    case ViewPlane::top: col = p.x(); row = p.z(); break;
  }
  PixelBin bin{coordinate_bin(row, cube_mm, resolution), coordinate_bin(col, cube_mm, resolution)};
  // The point must also lie inside the cube along the projected-away axis.
  const double depth = plane == ViewPlane::frontal ? p.z() : plane == ViewPlane::side ? p.x() : p.y();
  if (!bin.valid() || coordinate_bin(depth, cube_mm, resolution) < 0) return {};
  return bin;
}

Projection project_views(const PointCloud& cloud, int view_count, double cube_mm) {
  if (view_count != 1 && view_count != 3) throw usage_error("view_count must be 1 or 3");
  Projection out;
  out.stack = SilhouetteStack::zeros(view_count);
  std::size_t landed = 0;
  for (const auto& p : cloud) {
    for (int v = 0; v < view_count; ++v) {
      const PixelBin bin = project_point(p, static_cast<ViewPlane>(v), cube_mm);
      if (!bin.valid()) continue;
      out.stack.at(v, bin.row, bin.col) = 1.0f;
      if (v == 0) ++landed;
    }
  }
  out.empty = landed == 0;
  return out;
}

DepthTarget make_depth_target(const PointCloud& cloud, double cube_mm, int resolution) {
  DepthTarget out;
  out.resolution = resolution;
  const std::size_t n = static_cast<std::size_t>(resolution) * resolution;
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  for (const auto& p : cloud) {
    const PixelBin bin = project_point(p, ViewPlane::frontal, cube_mm, resolution);
    if (!bin.valid()) continue;
    auto& slot = nearest[static_cast<std::size_t>(bin.row) * resolution + bin.col];
    slot = std::min(slot, p.z());
  }
  out.values.assign(n, 0.0f);
  out.empty = true;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isinf(nearest[i])) continue;
    out.values[i] = static_cast<float>(nearest[i] / cube_mm + 0.5);
    out.empty = false;
  }
  return out;
}

DepthTarget depth_target_for(const Sample& sample) {
  if (!sample.depth) throw data_error("sample has no depth frame");
  return make_depth_target(crop_to(backproject(*sample.depth), sample.crop), sample.crop.cube_mm);
}

}  // namespace silnet
