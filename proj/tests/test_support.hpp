#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "silnet/types.hpp"

namespace silnet::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("silnet_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Point3 random_point(std::mt19937_64& rng, double half) {
  std::uniform_real_distribution<double> u(-half, half);
  return {u(rng), u(rng), u(rng)};
}

inline HandPose random_centered_pose(std::mt19937_64& rng, double half = 80.0) {
  HandPose pose;
  for (int j = 0; j < kNumJoints; ++j) pose.joints.push_back(random_point(rng, half));
  return pose.centered();
}

}  // namespace silnet::test
