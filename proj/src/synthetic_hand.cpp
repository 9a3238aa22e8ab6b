#include "silnet/synthetic_hand.hpp"

#include <cmath>
#include <iostream>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "silnet/dataset_io.hpp"
#include "silnet/preprocessing.hpp"

namespace silnet {

namespace {

constexpr double deg(double d) { return d * std::numbers::pi / 180.0; }

// Direction of the wrist->MCP bone of each finger, measured from +y toward +x.
constexpr std::array<double, kNumFingers> kMetacarpalSpread = {deg(45), deg(12), deg(0), deg(-11), deg(-22)};
// Twist of the thumb about its own axis so it flexes across the palm.
constexpr double kThumbTwist = deg(70);

Eigen::Matrix3d rot(double angle, const Eigen::Vector3d& axis) {
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

// Uniform double in [0, 1) from the top 53 bits; portable across standard libraries.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

HandModelParams HandModelParams::defaults() {
  HandModelParams p;
  p.bone_lengths = {40, 85, 82, 78, 74,   // wrist -> MCP
                    38, 32, 27,           // thumb
                    44, 26, 22,           // index
                    48, 30, 23,           // middle
                    44, 28, 22,           // ring
                    34, 21, 19};          // pinky
  p.finger_radii = {10.0, 9.0, 9.0, 8.5, 7.5};
  p.palm_radius = 38.0;
  for (int f = 0; f < kNumFingers; ++f) {
    auto* r = &p.joint_angle_ranges[f * kAnglesPerFinger];
    if (f == 0) {
      r[0] = {deg(-15), deg(25)};
      r[1] = {deg(0), deg(60)};
      r[2] = {deg(0), deg(60)};
      r[3] = {deg(0), deg(70)};
    } else {
      r[0] = {deg(-15), deg(15)};
      r[1] = {deg(0), deg(90)};
      r[2] = {deg(0), deg(100)};
      r[3] = {deg(0), deg(70)};
    }
  }
  p.max_tilt_rad = deg(40);
  p.max_roll_rad = deg(45);
  p.distance_mm = {500.0, 800.0};
  p.lateral_range_mm = 40.0;
  return p;
}

std::vector<std::string> HandModelParams::violations() const {
  std::vector<std::string> out;
  for (int i = 0; i < kNumBones; ++i) {
    if (!(bone_lengths[i] > 0.0)) out.push_back("bone_lengths[" + std::to_string(i) + "] must be positive");
  }
  for (int i = 0; i < kNumFingers; ++i) {
    if (!(finger_radii[i] > 0.0)) out.push_back("finger_radii[" + std::to_string(i) + "] must be positive");
  }
  if (!(palm_radius > 0.0)) out.emplace_back("palm_radius must be positive");
  for (int i = 0; i < kNumArticulations; ++i) {
    const auto& r = joint_angle_ranges[i];
    if (!(r.min <= r.max)) out.push_back("joint_angle_ranges[" + std::to_string(i) + "] has min > max");
  }
  if (!(max_tilt_rad >= 0.0 && max_tilt_rad <= std::numbers::pi)) out.emplace_back("max_tilt_rad out of [0, pi]");
  if (!(max_roll_rad >= 0.0)) out.emplace_back("max_roll_rad must be nonnegative");
  if (!(distance_mm.min > 0.0 && distance_mm.min <= distance_mm.max)) {
    out.emplace_back("distance_mm must satisfy 0 < min <= max");
  }
  if (!(lateral_range_mm >= 0.0)) out.emplace_back("lateral_range_mm must be nonnegative");
  return out;
}

HandPose forward_kinematics(const HandAngles& angles, const HandModelParams& params) {
  const Eigen::Vector3d x = Eigen::Vector3d::UnitX();
  const Eigen::Vector3d y = Eigen::Vector3d::UnitY();
  const Eigen::Vector3d z = Eigen::Vector3d::UnitZ();

  // Hand frame: fingers along +y, palm facing the camera (-z). Flexion curls
  // the fingers toward the camera.
  HandPose pose;
  pose.frame = CoordinateFrame::camera;
  pose.joints.assign(kNumJoints, Point3::Zero());
  const Eigen::Matrix3d& g = angles.global_rotation;
  pose.joints[kWrist] = angles.wrist_position;

  for (int f = 0; f < kNumFingers; ++f) {
    const double* a = &angles.articulation[f * kAnglesPerFinger];
    // Metacarpal direction rotates +y toward +x by the spread angle.
    Eigen::Matrix3d base = rot(-kMetacarpalSpread[f], z);
    const Point3 mcp_local = base * (params.bone_lengths[f] * y);
    if (f == 0) base = base * rot(kThumbTwist, y);

    Eigen::Matrix3d frame = base * rot(-a[0], z) * rot(-a[1], x);
    Point3 prev = mcp_local;
    pose.joints[mcp_joint(f)] = angles.wrist_position + g * prev;
    const int first_bone = kNumFingers + 3 * f;
    const int chain[3] = {pip_joint(f), dip_joint(f), tip_joint(f)};
    for (int k = 0; k < 3; ++k) {
      prev = prev + frame * (params.bone_lengths[first_bone + k] * y);
      pose.joints[chain[k]] = angles.wrist_position + g * prev;
      if (k < 2) frame = frame * rot(-a[2 + k], x);
    }
  }
  return pose;
}

HandAngles canonical_angles(const HandModelParams& params, const Point3& wrist) {
  HandAngles angles;
  for (int i = 0; i < kNumArticulations; ++i) angles.articulation[i] = params.joint_angle_ranges[i].mid();
  angles.wrist_position = wrist;
  return angles;
}

std::pair<HandAngles, HandPose> sample_pose(const HandModelParams& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  HandAngles angles;
  for (int i = 0; i < kNumArticulations; ++i) {
    const auto& r = params.joint_angle_ranges[i];
    angles.articulation[i] = uniform(rng, r.min, r.max);
  }
  // Palm normal uniform over a spherical cap, then an in-plane roll.
  const double cos_tilt = uniform(rng, std::cos(params.max_tilt_rad), 1.0);
  const double tilt = std::acos(std::clamp(cos_tilt, -1.0, 1.0));
  const double azimuth = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double roll = uniform(rng, -params.max_roll_rad, params.max_roll_rad);
  const Eigen::Vector3d tilt_axis(std::cos(azimuth), std::sin(azimuth), 0.0);
  angles.global_rotation = rot(tilt, tilt_axis) * rot(roll, Eigen::Vector3d::UnitZ());
  const double lx = uniform(rng, -params.lateral_range_mm, params.lateral_range_mm);
  const double ly = uniform(rng, -params.lateral_range_mm, params.lateral_range_mm);
  const double dz = uniform(rng, params.distance_mm.min, params.distance_mm.max);
  angles.wrist_position = Point3(lx, ly, dz);
  HandPose pose = forward_kinematics(angles, params);
  return {angles, std::move(pose)};
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ (index * 0xd1b54a32d192ed03ULL + 1));
}

std::vector<Capsule> hand_geometry(const HandPose& pose, const HandModelParams& params) {
  std::vector<Capsule> geometry;
  geometry.reserve(kNumBones + 1);
  const auto parents = joint_parents();
  for (int bone = 0; bone < kNumBones; ++bone) {
    const int child = bone_child_joint(bone);
    geometry.push_back({pose.joints[parents[child]], pose.joints[child],
                        params.finger_radii[bone_finger(bone)]});
  }
  Point3 palm = pose.joints[kWrist];
  for (int f = 1; f < kNumFingers; ++f) palm += pose.joints[mcp_joint(f)];
  palm /= kNumFingers;
  geometry.push_back({palm, palm, params.palm_radius});
  return geometry;
}

double point_segment_distance(const Point3& p, const Point3& a, const Point3& b) {
  const Point3 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).norm();
}

namespace {

// Ray parameter of the first hit of a ray from the origin along unit `rd`,
// or a negative value on a miss.
double sphere_hit(const Eigen::Vector3d& rd, const Point3& center, double radius) {
  const Eigen::Vector3d oc = -center;
  const double b = rd.dot(oc);
  const double c = oc.squaredNorm() - radius * radius;
  const double h = b * b - c;
  if (h < 0.0) return -1.0;
  return -b - std::sqrt(h);
}

double capsule_hit(const Eigen::Vector3d& rd, const Capsule& cap) {
  const Eigen::Vector3d ba = cap.b - cap.a;
  const double baba = ba.squaredNorm();
  if (baba < 1e-18) return sphere_hit(rd, cap.a, cap.radius);
  const Eigen::Vector3d oa = -cap.a;
  const double bard = ba.dot(rd);
  const double baoa = ba.dot(oa);
  const double rdoa = rd.dot(oa);
  const double oaoa = oa.squaredNorm();
  const double a = baba - bard * bard;
  double best = -1.0;
  if (a > 1e-12) {
    const double b = baba * rdoa - baoa * bard;
    const double c = baba * oaoa - baoa * baoa - cap.radius * cap.radius * baba;
    const double h = b * b - a * c;
    if (h < 0.0) return -1.0;
    const double t = (-b - std::sqrt(h)) / a;
    const double s = baoa + t * bard;
    if (s > 0.0 && s < baba) return t;
  }
  for (const Point3& end : {cap.a, cap.b}) {
    const double t = sphere_hit(rd, end, cap.radius);
    if (t >= 0.0 && (best < 0.0 || t < best)) best = t;
  }
  return best;
}

}  // namespace

DepthFrame render_depth(std::span<const Capsule> geometry, const CameraIntrinsics& k) {
  DepthFrame frame = DepthFrame::zeros(k);
  std::vector<double> zbuf(frame.depth.size(), std::numeric_limits<double>::infinity());
  for (const auto& cap : geometry) {
    const double z_near = std::min(cap.a.z(), cap.b.z()) - cap.radius;
    if (z_near <= 0.0) throw data_error("hand geometry behind the camera");
    const Point3 mid = 0.5 * (cap.a + cap.b);
    const double reach = 0.5 * (cap.b - cap.a).norm() + cap.radius;
    const double z_lo = mid.z() - reach;
    const double z_hi = mid.z() + reach;
    if (z_lo <= 0.0) throw data_error("hand geometry behind the camera");
    // Conservative pixel box of the bounding sphere.
    auto span_of = [&](double c, double f, double pc) {
      const double lo = std::min((c - reach) / z_lo, (c - reach) / z_hi);
      const double hi = std::max((c + reach) / z_lo, (c + reach) / z_hi);
      return std::pair{pc + f * lo, pc + f * hi};
    };
    const auto [u_lo, u_hi] = span_of(mid.x(), k.fx, k.cx);
    const auto [v_lo, v_hi] = span_of(mid.y(), k.fy, k.cy);
    const int u0 = std::max(0, static_cast<int>(std::floor(u_lo)));
    const int u1 = std::min(k.width - 1, static_cast<int>(std::ceil(u_hi)));
    const int v0 = std::max(0, static_cast<int>(std::floor(v_lo)));
    const int v1 = std::min(k.height - 1, static_cast<int>(std::ceil(v_hi)));
    for (int v = v0; v <= v1; ++v) {
      for (int u = u0; u <= u1; ++u) {
        const Eigen::Vector3d ray((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        const double norm = ray.norm();
        const double t = capsule_hit(ray / norm, cap);
        if (t < 0.0) continue;
        const double depth = t / norm;
        auto& slot = zbuf[static_cast<std::size_t>(v) * k.width + u];
        slot = std::min(slot, depth);
      }
    }
  }
  for (std::size_t i = 0; i < zbuf.size(); ++i) {
    if (std::isfinite(zbuf[i])) frame.depth[i] = static_cast<float>(zbuf[i]);
  }
  return frame;
}

DepthFrame render_depth(const HandPose& pose, const HandModelParams& params,
                        const CameraIntrinsics& intrinsics) {
  const auto geometry = hand_geometry(pose, params);
  return render_depth(geometry, intrinsics);
}

Sample make_sample(const HandModelParams& params, const DatasetSpec& spec, std::uint64_t seed) {
  const auto [angles, pose] = sample_pose(params, seed);
  DepthFrame depth = render_depth(pose, params, spec.intrinsics);
  for (auto& d : depth.depth) d = std::round(d);
  auto hand = crop_and_center(backproject(depth), pose, spec.cube_mm);
  Sample sample;
  sample.silhouettes = project_views(hand.cloud, spec.view_count, spec.cube_mm).stack;
  sample.pose = std::move(hand.pose);
  sample.depth = std::move(depth);
  sample.crop = hand.crop;
  return sample;
}

SplitCounts split_counts(std::size_t n) {
  SplitCounts c;
  c.val = n / 10;
  c.test = n / 10;
  c.train = n - c.val - c.test;
  return c;
}

GenerationReport make_dataset(std::size_t n, const HandModelParams& params, const DatasetSpec& spec,
                              std::uint64_t seed, const std::filesystem::path& out_dir) {
  if (n == 0) throw usage_error("dataset size must be positive");
  if (auto bad = params.violations(); !bad.empty()) throw usage_error("invalid hand params: " + bad.front());
  const std::size_t max_skipped = n / 100;

  DatasetWriter writer(out_dir, spec.view_count, spec.cube_mm, spec.intrinsics);
  GenerationReport report;
  for (std::size_t i = 0; i < n; ++i) {
    try {
      writer.add(make_sample(params, spec, derive_seed(seed, i)));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::runtime) throw;
      ++report.skipped;
      std::cerr << "skipping sample " << i << ": " << e.what() << "\n";
      if (report.skipped > max_skipped) {
        throw data_error("too many failed samples (" + std::to_string(report.skipped) + " of " +
                         std::to_string(n) + ")");
      }
    }
  }
  report.counts = split_counts(writer.size());
  writer.finish(report.counts);
  return report;
}

}  // namespace silnet
