#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <opencv2/core.hpp>

#include "silnet/synthetic_hand.hpp"
#include "silnet/types.hpp"

namespace silnet {

namespace io {

/// Called with the path of every file the library opens for reading.
/// Tests use it to audit which files a code path touches.
using ReadHook = std::function<void(const std::filesystem::path&)>;
void set_read_hook(ReadHook hook);
void notify_read(const std::filesystem::path& path);

std::vector<unsigned char> read_bytes(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const unsigned char> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);

std::string sha256_hex(std::span<const unsigned char> bytes);

/// Encodes an 8- or 16-bit single-channel (or 8-bit BGR) image as PNG.
std::vector<unsigned char> encode_png(const cv::Mat& image);
cv::Mat decode_png(std::span<const unsigned char> bytes, const std::filesystem::path& origin);
void write_png(const std::filesystem::path& path, const cv::Mat& image);
cv::Mat read_png(const std::filesystem::path& path);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace io

inline constexpr int kManifestVersion = 1;

/// File names of one sample inside its split directory.
std::string sample_stem(std::size_t id);
std::string depth_file(std::size_t id);
std::string silhouette_file(std::size_t id, int view);
std::string pose_file(std::size_t id);

struct SampleChecksums {
  std::string silhouettes;
  std::string pose;
  std::string depth;  // empty when the sample carries no depth
};

struct ManifestEntry {
  std::string split;
  std::size_t id = 0;
  Point3 center_mm = Point3::Zero();
  SampleChecksums checksums;
};

struct DatasetManifest {
  int version = kManifestVersion;
  int view_count = 3;
  double cube_mm = 300.0;
  CameraIntrinsics intrinsics = CameraIntrinsics::him2017();
  SplitCounts counts;
  std::vector<ManifestEntry> samples;

  std::vector<const ManifestEntry*> entries(const std::string& split) const;
};

std::string format_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(const std::string& text);
DatasetManifest read_manifest(const std::filesystem::path& root);

/// Writes depth (16-bit PNG, millimeters), V silhouettes (8-bit PNG, {0, 255})
/// and the centered pose (21 lines "x y z") into `dir`.
SampleChecksums write_sample(const std::filesystem::path& dir, std::size_t id, const Sample& sample);

/// Text form of a pose file.
std::string format_pose(const HandPose& pose);
HandPose parse_pose(const std::string& text, const std::string& origin);

/// Reads silhouette images (0 -> 0, 255 -> 1) into a stack.
SilhouetteStack read_silhouettes(std::span<const std::filesystem::path> files);

struct LoadOptions {
  bool load_depth = true;
  bool verify_checksums = true;
};

Sample read_sample(const std::filesystem::path& root, const DatasetManifest& manifest,
                   const ManifestEntry& entry, const LoadOptions& options = {});

/// Every sample of a split in manifest order, validated.
std::vector<Sample> load_split(const std::filesystem::path& root, const std::string& split,
                               const LoadOptions& options = {});

/// Builds a dataset directory. Samples are staged as they arrive and moved
/// into contiguous train/val/test ranges by finish().
class DatasetWriter {
 public:
  DatasetWriter(std::filesystem::path root, int view_count, double cube_mm,
                const CameraIntrinsics& intrinsics);

  std::size_t add(const Sample& sample);
  std::size_t size() const { return staged_.size(); }
  DatasetManifest finish(const SplitCounts& counts);

 private:
  std::filesystem::path root_;
  std::filesystem::path staging_;
  DatasetManifest manifest_;
  std::vector<ManifestEntry> staged_;
};

/// Seeded per-epoch permutations of a split, cut into batches. The last
/// batch may be short.
class BatchSampler {
 public:
  BatchSampler(std::size_t size, std::size_t batch_size, std::uint64_t seed);

  std::vector<std::vector<std::size_t>> epoch(std::uint64_t epoch_index) const;
  std::size_t batches_per_epoch() const;

 private:
  std::size_t size_;
  std::size_t batch_size_;
  std::uint64_t seed_;
};

/// Converts a HIM2017 export (annotation file with one
/// "<image> x1 y1 z1 ... x21 y21 z21" line per frame plus a directory of
/// 16-bit depth PNGs) into the dataset layout.
struct Him2017Options {
  std::filesystem::path annotations;
  std::filesystem::path image_dir;
  std::filesystem::path out_dir;
  int view_count = 3;
  double cube_mm = 300.0;
  CameraIntrinsics intrinsics = CameraIntrinsics::him2017();
  std::size_t limit = 0;  // 0 converts every frame
};

GenerationReport convert_him2017(const Him2017Options& options);

}  // namespace silnet
