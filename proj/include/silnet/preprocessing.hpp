#pragma once

#include <vector>

#include "silnet/types.hpp"

namespace silnet {

inline constexpr double kDefaultCubeMm = 300.0;

/// Pinhole backprojection of every nonzero depth pixel into the camera frame.
PointCloud backproject(const DepthFrame& frame);

struct CenteredHand {
  PointCloud cloud;
  HandPose pose;
  CropSpec crop;
};

/// Translates cloud and pose so the joint centroid is the origin and keeps the
/// points inside the half-open cube [-cube/2, cube/2)^3.
/// Throws a data error when no point survives.
CenteredHand crop_and_center(const PointCloud& cloud, const HandPose& pose,
                             double cube_mm = kDefaultCubeMm);

/// Same crop for a known center, e.g. one recorded in a dataset manifest.
PointCloud crop_to(const PointCloud& cloud, const CropSpec& crop);

/// Half-open bin index of a centered coordinate, or -1 when outside the cube.
int coordinate_bin(double value, double cube_mm, int resolution = kSilhouetteSize);

/// Plane used by each view. Frontal maps (x, y), side (z, y), top (x, z)
/// onto (column, row).
enum class ViewPlane { frontal = 0, side = 1, top = 2 };

struct PixelBin {
  int row = -1;
  int col = -1;
  bool valid() const { return row >= 0 && col >= 0; }
};

PixelBin project_point(const Point3& p, ViewPlane plane, double cube_mm,
                       int resolution = kSilhouetteSize);

struct Projection {
  SilhouetteStack stack;
  // Set when the cloud had no points inside the cube.
  bool empty = false;
};

/// Orthographic occupancy projection onto 1 (frontal) or 3 orthogonal planes.
Projection project_views(const PointCloud& cloud, int view_count, double cube_mm = kDefaultCubeMm);

/// Normalized frontal depth image: the per-bin minimum z mapped from
/// [-cube/2, cube/2] to [0, 1]; empty bins are 0.
struct DepthTarget {
  int resolution = kSilhouetteSize;
  std::vector<float> values;
  bool empty = false;

  float at(int row, int col) const { return values[static_cast<std::size_t>(row) * resolution + col]; }
};

DepthTarget make_depth_target(const PointCloud& cloud, double cube_mm = kDefaultCubeMm,
                              int resolution = kSilhouetteSize);

/// Full pipeline for a sample carrying a depth frame: the depth target in the
/// sample's recorded crop.
DepthTarget depth_target_for(const Sample& sample);

}  // namespace silnet
