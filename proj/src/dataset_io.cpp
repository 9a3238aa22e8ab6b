#include "silnet/dataset_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <random>
#include <sstream>

#include <openssl/evp.h>
#include <opencv2/imgcodecs.hpp>

#include "silnet/preprocessing.hpp"

namespace fs = std::filesystem;

namespace silnet {

namespace io {

namespace {

std::mutex& hook_mutex() {
  static std::mutex m;
  return m;
}

ReadHook& hook_slot() {
  static ReadHook hook;
  return hook;
}

}  // namespace

void set_read_hook(ReadHook hook) {
  std::lock_guard lock(hook_mutex());
  hook_slot() = std::move(hook);
}

void notify_read(const fs::path& path) {
  std::lock_guard lock(hook_mutex());
  if (hook_slot()) hook_slot()(path);
}

std::vector<unsigned char> read_bytes(const fs::path& path) {
  notify_read(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_bytes(path);
  return {bytes.begin(), bytes.end()};
}

void write_bytes(const fs::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw runtime_error("write failed: " + path.string());
}

void write_text(const fs::path& path, std::string_view text) {
  write_bytes(path, {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

std::string sha256_hex(std::span<const unsigned char> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw runtime_error("sha256 failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < length; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::vector<unsigned char> encode_png(const cv::Mat& image) {
  std::vector<unsigned char> buffer;
  if (!cv::imencode(".png", image, buffer, {cv::IMWRITE_PNG_COMPRESSION, 6})) {
    throw runtime_error("PNG encoding failed");
  }
  return buffer;
}

cv::Mat decode_png(std::span<const unsigned char> bytes, const fs::path& origin) {
  cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<unsigned char*>(bytes.data()));
  cv::Mat image = cv::imdecode(raw, cv::IMREAD_UNCHANGED);
  if (image.empty()) throw data_error("cannot decode image " + origin.string());
  return image;
}

void write_png(const fs::path& path, const cv::Mat& image) { write_bytes(path, encode_png(image)); }

cv::Mat read_png(const fs::path& path) { return decode_png(read_bytes(path), path); }

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return {buf, end};
}

}  // namespace io

namespace {

double parse_double(std::string_view token, const std::string& origin) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw data_error(origin + ": bad number '" + std::string(token) + "'");
  }
  return value;
}

std::string sha_of_files(std::span<const std::vector<unsigned char>> parts) {
  std::vector<unsigned char> all;
  for (const auto& p : parts) all.insert(all.end(), p.begin(), p.end());
  return io::sha256_hex(all);
}

}  // namespace

std::string sample_stem(std::size_t id) {
  std::ostringstream s;
  s << std::setw(6) << std::setfill('0') << id;
  return s.str();
}
std::string depth_file(std::size_t id) { return sample_stem(id) + "_depth.png"; }
std::string silhouette_file(std::size_t id, int view) {
  return sample_stem(id) + "_sil_" + std::to_string(view) + ".png";
}
std::string pose_file(std::size_t id) { return sample_stem(id) + "_pose.txt"; }

std::string format_pose(const HandPose& pose) {
  std::string out;
  for (const auto& j : pose.joints) {
    out += io::format_double(j.x()) + " " + io::format_double(j.y()) + " " + io::format_double(j.z()) + "\n";
  }
  return out;
}

HandPose parse_pose(const std::string& text, const std::string& origin) {
  HandPose pose;
  pose.frame = CoordinateFrame::centered;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string x, y, z, extra;
    if (!(fields >> x >> y >> z) || (fields >> extra)) throw data_error(origin + ": expected 'x y z' per line");
    pose.joints.emplace_back(parse_double(x, origin), parse_double(y, origin), parse_double(z, origin));
  }
  return pose;
}

namespace {

struct EncodedSample {
  std::vector<std::vector<unsigned char>> silhouettes;
  std::string pose;
  std::vector<unsigned char> depth;
};

EncodedSample encode_sample(const Sample& sample) {
  EncodedSample enc;
  const auto& sil = sample.silhouettes;
  for (int v = 0; v < sil.view_count; ++v) {
    cv::Mat img(kSilhouetteSize, kSilhouetteSize, CV_8UC1);
    for (int r = 0; r < kSilhouetteSize; ++r) {
      for (int c = 0; c < kSilhouetteSize; ++c) img.at<std::uint8_t>(r, c) = sil.at(v, r, c) != 0.0f ? 255 : 0;
    }
    enc.silhouettes.push_back(io::encode_png(img));
  }
  enc.pose = format_pose(sample.pose);
  if (sample.depth) {
    const auto& d = *sample.depth;
    cv::Mat img(d.intrinsics.height, d.intrinsics.width, CV_16UC1);
    for (int r = 0; r < d.intrinsics.height; ++r) {
      for (int c = 0; c < d.intrinsics.width; ++c) {
        const double mm = std::round(d.at(r, c));
        if (mm > 65535.0) throw data_error("depth exceeds 16-bit range");
        if (!(mm >= 0.0)) throw data_error("depth must be nonnegative");
        img.at<std::uint16_t>(r, c) = static_cast<std::uint16_t>(mm);
      }
    }
    enc.depth = io::encode_png(img);
  }
  return enc;
}

}  // namespace

SampleChecksums write_sample(const fs::path& dir, std::size_t id, const Sample& sample) {
  // Encode everything first so a bad field leaves no partial sample behind.
  const EncodedSample enc = encode_sample(sample);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw runtime_error("cannot create " + dir.string() + ": " + ec.message());

  SampleChecksums sums;
  for (int v = 0; v < sample.silhouettes.view_count; ++v) {
    io::write_bytes(dir / silhouette_file(id, v), enc.silhouettes[v]);
  }
  sums.silhouettes = sha_of_files(enc.silhouettes);
  io::write_text(dir / pose_file(id), enc.pose);
  sums.pose = io::sha256_hex({reinterpret_cast<const unsigned char*>(enc.pose.data()), enc.pose.size()});
  if (sample.depth) {
    io::write_bytes(dir / depth_file(id), enc.depth);
    sums.depth = io::sha256_hex(enc.depth);
  }
  return sums;
}

SilhouetteStack read_silhouettes(std::span<const fs::path> files) {
  SilhouetteStack stack = SilhouetteStack::zeros(static_cast<int>(files.size()));
  for (std::size_t v = 0; v < files.size(); ++v) {
    const cv::Mat img = io::read_png(files[v]);
    if (img.type() != CV_8UC1 || img.rows != kSilhouetteSize || img.cols != kSilhouetteSize) {
      throw data_error(files[v].string() + ": expected an 8-bit 128x128 single-channel image");
    }
    for (int r = 0; r < kSilhouetteSize; ++r) {
      for (int c = 0; c < kSilhouetteSize; ++c) {
        const auto byte = img.at<std::uint8_t>(r, c);
        if (byte != 0 && byte != 255) throw data_error(files[v].string() + ": non-binary pixel value");
        stack.at(static_cast<int>(v), r, c) = byte ? 1.0f : 0.0f;
      }
    }
  }
  return stack;
}

std::vector<const ManifestEntry*> DatasetManifest::entries(const std::string& split) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : samples) {
    if (e.split == split) out.push_back(&e);
  }
  return out;
}

std::string format_manifest(const DatasetManifest& m) {
  using io::format_double;
  std::ostringstream out;
  out << "silnet-dataset " << m.version << "\n";
  out << "view_count " << m.view_count << "\n";
  out << "cube_mm " << format_double(m.cube_mm) << "\n";
  const auto& k = m.intrinsics;
  out << "intrinsics " << format_double(k.fx) << " " << format_double(k.fy) << " " << format_double(k.cx) << " "
      << format_double(k.cy) << " " << k.width << " " << k.height << "\n";
  out << "counts " << m.counts.train << " " << m.counts.val << " " << m.counts.test << "\n";
  for (const auto& e : m.samples) {
    out << "sample " << e.split << " " << sample_stem(e.id) << " " << format_double(e.center_mm.x()) << " "
        << format_double(e.center_mm.y()) << " " << format_double(e.center_mm.z()) << " "
        << e.checksums.silhouettes << " " << e.checksums.pose << " "
        << (e.checksums.depth.empty() ? "-" : e.checksums.depth) << "\n";
  }
  return out.str();
}

DatasetManifest parse_manifest(const std::string& text) {
  const std::string origin = "manifest.txt";
  DatasetManifest m;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream f(line);
    std::string key;
    f >> key;
    if (key == "silnet-dataset") {
      f >> m.version;
      if (m.version != kManifestVersion) throw data_error("unsupported manifest version " + std::to_string(m.version));
      header = true;
    } else if (key == "view_count") {
      f >> m.view_count;
    } else if (key == "cube_mm") {
      std::string v;
      f >> v;
      m.cube_mm = parse_double(v, origin);
    } else if (key == "intrinsics") {
      std::string fx, fy, cx, cy;
      f >> fx >> fy >> cx >> cy >> m.intrinsics.width >> m.intrinsics.height;
      m.intrinsics.fx = parse_double(fx, origin);
      m.intrinsics.fy = parse_double(fy, origin);
      m.intrinsics.cx = parse_double(cx, origin);
      m.intrinsics.cy = parse_double(cy, origin);
    } else if (key == "counts") {
      f >> m.counts.train >> m.counts.val >> m.counts.test;
    } else if (key == "sample") {
      ManifestEntry e;
      std::string id, x, y, z, depth;
      f >> e.split >> id >> x >> y >> z >> e.checksums.silhouettes >> e.checksums.pose >> depth;
      e.id = static_cast<std::size_t>(parse_double(id, origin));
      e.center_mm = Point3(parse_double(x, origin), parse_double(y, origin), parse_double(z, origin));
      e.checksums.depth = depth == "-" ? "" : depth;
      m.samples.push_back(std::move(e));
    } else {
      throw data_error("manifest.txt: unknown key '" + key + "'");
    }
    if (f.fail()) throw data_error("manifest.txt: malformed line '" + line + "'");
  }
  if (!header) throw data_error("manifest.txt: missing header");
  return m;
}

DatasetManifest read_manifest(const fs::path& root) {
  const fs::path path = root / "manifest.txt";
  if (!fs::exists(path)) throw data_error("no dataset manifest at " + path.string());
  return parse_manifest(io::read_text(path));
}

Sample read_sample(const fs::path& root, const DatasetManifest& manifest, const ManifestEntry& entry,
                   const LoadOptions& options) {
  const fs::path dir = root / entry.split;
  const std::string name = entry.split + "/" + sample_stem(entry.id);
  auto load = [&](const std::string& file) {
    const fs::path path = dir / file;
    if (!fs::exists(path)) throw data_error("sample " + name + ": missing file " + file);
    return io::read_bytes(path);
  };
  auto verify = [&](const std::string& expected, const std::string& actual, const char* what) {
    if (options.verify_checksums && expected != actual) {
      throw data_error("sample " + name + ": checksum mismatch in " + what);
    }
  };

  Sample sample;
  std::vector<std::vector<unsigned char>> views;
  for (int v = 0; v < manifest.view_count; ++v) views.push_back(load(silhouette_file(entry.id, v)));
  verify(entry.checksums.silhouettes, sha_of_files(views), "silhouettes");
  sample.silhouettes = SilhouetteStack::zeros(manifest.view_count);
  for (int v = 0; v < manifest.view_count; ++v) {
    const cv::Mat img = io::decode_png(views[v], dir / silhouette_file(entry.id, v));
    if (img.type() != CV_8UC1 || img.rows != kSilhouetteSize || img.cols != kSilhouetteSize) {
      throw data_error("sample " + name + ": bad silhouette image");
    }
    for (int r = 0; r < kSilhouetteSize; ++r) {
      for (int c = 0; c < kSilhouetteSize; ++c) {
        const auto byte = img.at<std::uint8_t>(r, c);
        // Anything but 0/255 surfaces as a validation failure below.
        sample.silhouettes.at(v, r, c) = byte == 255 ? 1.0f : byte == 0 ? 0.0f : 0.5f;
      }
    }
  }

  const auto pose_bytes = load(pose_file(entry.id));
  verify(entry.checksums.pose, io::sha256_hex(pose_bytes), "pose");
  sample.pose = parse_pose({pose_bytes.begin(), pose_bytes.end()}, name);

  if (options.load_depth && !entry.checksums.depth.empty()) {
    const auto bytes = load(depth_file(entry.id));
    verify(entry.checksums.depth, io::sha256_hex(bytes), "depth");
    const cv::Mat img = io::decode_png(bytes, dir / depth_file(entry.id));
    if (img.type() != CV_16UC1 || img.cols != manifest.intrinsics.width || img.rows != manifest.intrinsics.height) {
      throw data_error("sample " + name + ": bad depth image");
    }
    DepthFrame depth = DepthFrame::zeros(manifest.intrinsics);
    for (int r = 0; r < img.rows; ++r) {
      for (int c = 0; c < img.cols; ++c) depth.at(r, c) = img.at<std::uint16_t>(r, c);
    }
    sample.depth = std::move(depth);
  }
  sample.crop = {entry.center_mm, manifest.cube_mm};
  return sample;
}

std::vector<Sample> load_split(const fs::path& root, const std::string& split, const LoadOptions& options) {
  if (split != "train" && split != "val" && split != "test") throw usage_error("unknown split '" + split + "'");
  const DatasetManifest manifest = read_manifest(root);
  std::vector<Sample> out;
  for (const ManifestEntry* e : manifest.entries(split)) {
    Sample s = read_sample(root, manifest, *e, options);
    if (auto bad = validate_sample(s); !bad.empty()) {
      throw data_error("sample " + split + "/" + sample_stem(e->id) + ": " + bad.front());
    }
    out.push_back(std::move(s));
  }
  return out;
}

DatasetWriter::DatasetWriter(fs::path root, int view_count, double cube_mm, const CameraIntrinsics& intrinsics)
    : root_(std::move(root)), staging_(root_ / ".staging") {
  manifest_.view_count = view_count;
  manifest_.cube_mm = cube_mm;
  manifest_.intrinsics = intrinsics;
  std::error_code ec;
  fs::remove_all(staging_, ec);
  fs::create_directories(staging_, ec);
  if (ec) throw runtime_error("cannot create " + staging_.string() + ": " + ec.message());
}

std::size_t DatasetWriter::add(const Sample& sample) {
  if (sample.silhouettes.view_count != manifest_.view_count) throw usage_error("sample view count mismatch");
  const std::size_t id = staged_.size();
  ManifestEntry e;
  e.id = id;
  e.center_mm = sample.crop.center_mm;
  e.checksums = write_sample(staging_, id, sample);
  staged_.push_back(std::move(e));
  return id;
}

DatasetManifest DatasetWriter::finish(const SplitCounts& counts) {
  if (counts.total() != staged_.size()) throw usage_error("split counts do not cover the staged samples");
  manifest_.counts = counts;
  for (const char* split : {"train", "val", "test"}) {
    std::error_code ec;
    fs::remove_all(root_ / split, ec);
    fs::create_directories(root_ / split);
  }
  for (auto& e : staged_) {
    e.split = e.id < counts.train ? "train" : e.id < counts.train + counts.val ? "val" : "test";
    std::vector<std::string> files{pose_file(e.id)};
    for (int v = 0; v < manifest_.view_count; ++v) files.push_back(silhouette_file(e.id, v));
    if (!e.checksums.depth.empty()) files.push_back(depth_file(e.id));
    for (const auto& f : files) fs::rename(staging_ / f, root_ / e.split / f);
    manifest_.samples.push_back(e);
  }
  fs::remove_all(staging_);
  io::write_text(root_ / "manifest.txt", format_manifest(manifest_));
  return manifest_;
}

BatchSampler::BatchSampler(std::size_t size, std::size_t batch_size, std::uint64_t seed)
    : size_(size), batch_size_(batch_size), seed_(seed) {
  if (batch_size == 0) throw usage_error("batch_size must be at least 1");
}

std::size_t BatchSampler::batches_per_epoch() const { return (size_ + batch_size_ - 1) / batch_size_; }

std::vector<std::vector<std::size_t>> BatchSampler::epoch(std::uint64_t epoch_index) const {
  std::vector<std::size_t> order(size_);
  for (std::size_t i = 0; i < size_; ++i) order[i] = i;
  std::mt19937_64 rng(derive_seed(seed_, epoch_index));
  for (std::size_t i = size_; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < size_; start += batch_size_) {
    const std::size_t end = std::min(size_, start + batch_size_);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

GenerationReport convert_him2017(const Him2017Options& options) {
  const std::string text = io::read_text(options.annotations);
  DatasetWriter writer(options.out_dir, options.view_count, options.cube_mm, options.intrinsics);
  GenerationReport report;
  std::istringstream in(text);
  std::string line;
  std::size_t frames = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (options.limit && frames >= options.limit) break;
    ++frames;
    std::istringstream f(line);
    std::string image;
    f >> image;
    HandPose pose;
    pose.frame = CoordinateFrame::camera;
    for (int j = 0; j < kNumJoints; ++j) {
      std::string x, y, z;
      if (!(f >> x >> y >> z)) throw data_error(options.annotations.string() + ": short annotation for " + image);
      pose.joints.emplace_back(parse_double(x, image), parse_double(y, image), parse_double(z, image));
    }
    try {
      const cv::Mat img = io::read_png(options.image_dir / image);
      if (img.type() != CV_16UC1 || img.cols != options.intrinsics.width || img.rows != options.intrinsics.height) {
        throw data_error(image + ": expected a 16-bit depth image matching the intrinsics");
      }
      DepthFrame depth = DepthFrame::zeros(options.intrinsics);
      for (int r = 0; r < img.rows; ++r) {
        for (int c = 0; c < img.cols; ++c) depth.at(r, c) = img.at<std::uint16_t>(r, c);
      }
      auto hand = crop_and_center(backproject(depth), pose, options.cube_mm);
      Sample sample;
      sample.silhouettes = project_views(hand.cloud, options.view_count, options.cube_mm).stack;
      sample.pose = std::move(hand.pose);
      sample.depth = std::move(depth);
      sample.crop = hand.crop;
      writer.add(sample);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::runtime) throw;
      ++report.skipped;
      std::cerr << "skipping " << image << ": " << e.what() << "\n";
    }
  }
  if (writer.size() == 0) throw data_error("no convertible frames in " + options.annotations.string());
  report.counts = split_counts(writer.size());
  writer.finish(report.counts);
  return report;
}

}  // namespace silnet
