#include "silnet/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include <opencv2/imgproc.hpp>

#include "silnet/dataset_io.hpp"
#include "silnet/preprocessing.hpp"

namespace silnet {

std::vector<std::array<double, kNumJoints>> joint_errors(const std::vector<HandPose>& preds,
                                                         const std::vector<HandPose>& gts) {
  if (preds.size() != gts.size()) throw usage_error("evaluate: prediction and ground-truth counts differ");
  if (preds.empty()) throw data_error("evaluate: empty input");
  std::vector<std::array<double, kNumJoints>> errors(preds.size());
  for (std::size_t f = 0; f < preds.size(); ++f) {
    const auto& p = preds[f];
    const auto& g = gts[f];
    if (p.joints.size() != kNumJoints || g.joints.size() != kNumJoints) {
      throw data_error("evaluate: frame " + std::to_string(f) + " does not have 21 joints");
    }
    if (p.frame != CoordinateFrame::centered || g.frame != CoordinateFrame::centered) {
      throw usage_error("evaluate: poses must be in the centered frame");
    }
    for (int j = 0; j < kNumJoints; ++j) errors[f][j] = (p.joints[j] - g.joints[j]).norm();
  }
  return errors;
}

EvalReport evaluate(const std::vector<HandPose>& preds, const std::vector<HandPose>& gts, MaxPerJointMode mode) {
  const auto errors = joint_errors(preds, gts);
  const double frames = static_cast<double>(errors.size());

  EvalReport r;
  r.frames = errors.size();
  std::vector<double> frame_max(errors.size());
  for (std::size_t f = 0; f < errors.size(); ++f) {
    for (int j = 0; j < kNumJoints; ++j) r.per_joint_mean_mm[j] += errors[f][j];
    frame_max[f] = *std::max_element(errors[f].begin(), errors[f].end());
  }
  double total = 0.0;
  for (auto& m : r.per_joint_mean_mm) {
    m /= frames;
    total += m;
  }
  r.mean_error_mm = total / kNumJoints;

  if (mode == MaxPerJointMode::joint_mean) {
    r.max_per_joint_error_mm = *std::max_element(r.per_joint_mean_mm.begin(), r.per_joint_mean_mm.end());
  } else {
    double sum = 0.0;
    for (double m : frame_max) sum += m;
    r.max_per_joint_error_mm = sum / frames;
  }

  for (int f = 0; f < kNumFingers; ++f) {
    r.per_finger_mean_mm[f] = (r.per_joint_mean_mm[mcp_joint(f)] + r.per_joint_mean_mm[pip_joint(f)] +
                               r.per_joint_mean_mm[dip_joint(f)] + r.per_joint_mean_mm[tip_joint(f)]) /
                              4.0;
  }

  std::sort(frame_max.begin(), frame_max.end());
  const int steps = static_cast<int>(std::lround(kCdfMaxMm / kCdfStepMm));
  for (int i = 0; i <= steps; ++i) {
    const double t = i * kCdfStepMm;
    const auto below = std::upper_bound(frame_max.begin(), frame_max.end(), t) - frame_max.begin();
    r.error_cdf.emplace_back(t, static_cast<double>(below) / frames);
  }
  return r;
}

std::string format_report(const EvalReport& r) {
  using io::format_double;
  std::ostringstream out;
  out << "frames " << r.frames << "\n";
  out << "mean_error_mm " << format_double(r.mean_error_mm) << "\n";
  out << "max_per_joint_error_mm " << format_double(r.max_per_joint_error_mm) << "\n";
  for (int j = 0; j < kNumJoints; ++j) {
    out << "joint_" << j << "_mean_mm " << format_double(r.per_joint_mean_mm[j]) << "\n";
  }
  for (int f = 0; f < kNumFingers; ++f) {
    out << "finger_" << kFingerLabels[f] << "_mean_mm " << format_double(r.per_finger_mean_mm[f]) << "\n";
  }
  return out.str();
}

namespace {

double parse_number(const std::string& token, const std::string& origin) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw data_error(origin + ": bad number '" + token + "'");
  }
  return v;
}

}  // namespace

EvalReport parse_report(const std::string& text, const std::string& origin) {
  std::map<std::string, double> values;
  std::istringstream in(text);
  std::string key, value;
  while (in >> key >> value) values[key] = parse_number(value, origin);
  auto get = [&](const std::string& k) {
    const auto it = values.find(k);
    if (it == values.end()) throw data_error(origin + ": missing '" + k + "'");
    return it->second;
  };
  EvalReport r;
  r.frames = static_cast<std::size_t>(get("frames"));
  r.mean_error_mm = get("mean_error_mm");
  r.max_per_joint_error_mm = get("max_per_joint_error_mm");
  for (int j = 0; j < kNumJoints; ++j) r.per_joint_mean_mm[j] = get("joint_" + std::to_string(j) + "_mean_mm");
  for (int f = 0; f < kNumFingers; ++f) {
    r.per_finger_mean_mm[f] = get(std::string("finger_") + kFingerLabels[f] + "_mean_mm");
  }
  return r;
}

std::string format_cdf_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "threshold_mm,fraction\n";
  for (const auto& [t, frac] : r.error_cdf) out << io::format_double(t) << "," << io::format_double(frac) << "\n";
  return out.str();
}

std::vector<std::pair<double, double>> parse_cdf_csv(const std::string& text, const std::string& origin) {
  std::vector<std::pair<double, double>> out;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (line.rfind("threshold_mm,fraction", 0) != 0) throw data_error(origin + ": missing CDF header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw data_error(origin + ": malformed row '" + line + "'");
    out.emplace_back(parse_number(line.substr(0, comma), origin), parse_number(line.substr(comma + 1), origin));
  }
  return out;
}

std::string format_per_frame_csv(const std::vector<std::array<double, kNumJoints>>& errors) {
  std::ostringstream out;
  out << "frame";
  for (int j = 0; j < kNumJoints; ++j) out << ",joint_" << j;
  out << ",mean,max\n";
  for (std::size_t f = 0; f < errors.size(); ++f) {
    out << f;
    double sum = 0.0;
    for (double e : errors[f]) {
      out << "," << io::format_double(e);
      sum += e;
    }
    out << "," << io::format_double(sum / kNumJoints) << ","
        << io::format_double(*std::max_element(errors[f].begin(), errors[f].end())) << "\n";
  }
  return out.str();
}

cv::Point overlay_pixel(const Point3& joint, double cube_mm, int scale) {
  // Same mapping as coordinate_bin, without discarding points outside the cube.
  auto bin = [&](double v) { return static_cast<int>(std::floor((v / cube_mm + 0.5) * kSilhouetteSize)); };
  return {bin(joint.x()) * scale + scale / 2, bin(joint.y()) * scale + scale / 2};
}

namespace {

void draw_dashed(cv::Mat& img, cv::Point a, cv::Point b, const cv::Scalar& color, int thickness, int dash) {
  const double len = std::hypot(b.x - a.x, b.y - a.y);
  if (len < 1.0) {
    cv::line(img, a, b, color, thickness);
    return;
  }
  const int pieces = std::max(1, static_cast<int>(len / dash));
  for (int i = 0; i < pieces; i += 2) {
    const double t0 = static_cast<double>(i) / pieces;
    const double t1 = std::min(1.0, static_cast<double>(i + 1) / pieces);
    const cv::Point p0(static_cast<int>(std::lround(a.x + (b.x - a.x) * t0)),
                       static_cast<int>(std::lround(a.y + (b.y - a.y) * t0)));
    const cv::Point p1(static_cast<int>(std::lround(a.x + (b.x - a.x) * t1)),
                       static_cast<int>(std::lround(a.y + (b.y - a.y) * t1)));
    cv::line(img, p0, p1, color, thickness);
  }
}

}  // namespace

cv::Mat render_overlay(const Sample& sample, const HandPose& pred, int scale) {
  const int size = kSilhouetteSize * scale;
  cv::Mat img(size, size, CV_8UC3, cv::Scalar(0, 0, 0));
  for (int r = 0; r < kSilhouetteSize; ++r) {
    for (int c = 0; c < kSilhouetteSize; ++c) {
      if (sample.silhouettes.at(0, r, c) == 0.0f) continue;
      cv::rectangle(img, cv::Rect(c * scale, r * scale, scale, scale), cv::Scalar(110, 110, 110), cv::FILLED);
    }
  }
  const auto parents = joint_parents();
  const double cube = sample.crop.cube_mm;
  const int thickness = std::max(1, scale / 2);
  auto draw = [&](const HandPose& pose, const cv::Scalar& color, bool dashed) {
    for (int j = 1; j < kNumJoints; ++j) {
      const cv::Point a = overlay_pixel(pose.joints[parents[j]], cube, scale);
      const cv::Point b = overlay_pixel(pose.joints[j], cube, scale);
      if (dashed) {
        draw_dashed(img, a, b, color, thickness, std::max(2, 2 * scale));
      } else {
        cv::line(img, a, b, color, thickness);
      }
    }
    for (const auto& j : pose.joints) cv::circle(img, overlay_pixel(j, cube, scale), thickness, color, cv::FILLED);
  };
  draw(sample.pose, cv::Scalar(255, 80, 0), false);
  draw(pred, cv::Scalar(0, 200, 0), true);
  return img;
}

}  // namespace silnet
