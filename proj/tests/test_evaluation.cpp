#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "silnet/evaluation.hpp"
#include "silnet/preprocessing.hpp"
#include "silnet/synthetic_hand.hpp"
#include "test_support.hpp"

using namespace silnet;

namespace {

std::vector<HandPose> random_poses(std::mt19937_64& rng, std::size_t n) {
  std::vector<HandPose> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(test::random_centered_pose(rng));
  return out;
}

HandPose shifted(HandPose p, const Point3& t) {
  for (auto& j : p.joints) j += t;
  return p;
}

// Straight loops over frames and joints.
struct Naive {
  double mean = 0.0;
  std::array<double, kNumJoints> per_joint{};
  std::vector<double> frame_max;
};

Naive naive(const std::vector<HandPose>& preds, const std::vector<HandPose>& gts) {
  Naive n;
  double sum = 0.0;
  for (std::size_t f = 0; f < preds.size(); ++f) {
    double worst = 0.0;
    for (int j = 0; j < kNumJoints; ++j) {
      const auto& a = preds[f].joints[j];
      const auto& b = gts[f].joints[j];
      const double d = std::sqrt((a.x() - b.x()) * (a.x() - b.x()) + (a.y() - b.y()) * (a.y() - b.y()) +
                                 (a.z() - b.z()) * (a.z() - b.z()));
      sum += d;
      n.per_joint[j] += d / preds.size();
      worst = std::max(worst, d);
    }
    n.frame_max.push_back(worst);
  }
  n.mean = sum / (preds.size() * kNumJoints);
  return n;
}

void expect_rel(double actual, double expected, double tol) {
  EXPECT_LE(std::abs(actual - expected), tol * std::max(1.0, std::abs(expected))) << actual << " vs " << expected;
}

}  // namespace

TEST(Evaluate, IdenticalPosesScoreZero) {
  std::mt19937_64 rng(1);
  const auto gts = random_poses(rng, 5);
  const auto r = evaluate(gts, gts);
  EXPECT_EQ(r.frames, 5u);
  EXPECT_EQ(r.mean_error_mm, 0.0);
  EXPECT_EQ(r.max_per_joint_error_mm, 0.0);
  for (const auto& [t, frac] : r.error_cdf) EXPECT_EQ(frac, 1.0) << t;
}

TEST(Evaluate, SingleDisplacedJoint) {
  std::mt19937_64 rng(2);
  const auto gts = random_poses(rng, 1);
  auto preds = gts;
  preds[0].joints[0] += Point3(3, 4, 0);
  const auto r = evaluate(preds, gts);
  EXPECT_NEAR(r.mean_error_mm, 5.0 / 21.0, 1e-12);
  EXPECT_NEAR(r.max_per_joint_error_mm, 5.0, 1e-12);
  EXPECT_NEAR(r.per_joint_mean_mm[0], 5.0, 1e-12);
  ASSERT_EQ(r.error_cdf.size(), 81u);
  EXPECT_EQ(r.error_cdf[4].second, 0.0);
  EXPECT_EQ(r.error_cdf[5].second, 1.0);
  EXPECT_EQ(r.error_cdf.front().first, 0.0);
  EXPECT_EQ(r.error_cdf.back().first, kCdfMaxMm);
}

TEST(Evaluate, MatchesNaiveLoops) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 30;
    const auto gts = random_poses(rng, n);
    auto preds = gts;
    std::normal_distribution<double> noise(0.0, 1.0 + trial);
    for (auto& p : preds) {
      for (auto& j : p.joints) j += Point3(noise(rng), noise(rng), noise(rng));
    }
    const auto r = evaluate(preds, gts);
    const auto o = naive(preds, gts);
    expect_rel(r.mean_error_mm, o.mean, 1e-9);
    for (int j = 0; j < kNumJoints; ++j) expect_rel(r.per_joint_mean_mm[j], o.per_joint[j], 1e-9);
    expect_rel(r.max_per_joint_error_mm, *std::max_element(o.per_joint.begin(), o.per_joint.end()), 1e-9);
    for (int f = 0; f < kNumFingers; ++f) {
      const double m = (o.per_joint[mcp_joint(f)] + o.per_joint[pip_joint(f)] + o.per_joint[dip_joint(f)] +
                        o.per_joint[tip_joint(f)]) /
                       4.0;
      expect_rel(r.per_finger_mean_mm[f], m, 1e-9);
    }
    for (const auto& [t, frac] : r.error_cdf) {
      const auto below = std::count_if(o.frame_max.begin(), o.frame_max.end(), [&](double m) { return m <= t; });
      EXPECT_EQ(frac, static_cast<double>(below) / n) << "threshold " << t;
    }
    // CDF never decreases.
    for (std::size_t i = 1; i < r.error_cdf.size(); ++i) EXPECT_GE(r.error_cdf[i].second, r.error_cdf[i - 1].second);
  }
}

TEST(Evaluate, FrameMaxMode) {
  std::mt19937_64 rng(4);
  const auto gts = random_poses(rng, 7);
  const auto preds = random_poses(rng, 7);
  const auto o = naive(preds, gts);
  const auto r = evaluate(preds, gts, MaxPerJointMode::frame_max);
  expect_rel(r.max_per_joint_error_mm, std::accumulate(o.frame_max.begin(), o.frame_max.end(), 0.0) / 7, 1e-9);
  // Mean of frame maxima bounds the maximum joint mean from above.
  EXPECT_GE(r.max_per_joint_error_mm, evaluate(preds, gts).max_per_joint_error_mm - 1e-9);
}

TEST(Evaluate, FrameOrderDoesNotMatter) {
  std::mt19937_64 rng(5);
  const auto gts = random_poses(rng, 12);
  const auto preds = random_poses(rng, 12);
  std::vector<std::size_t> order(12);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<HandPose> pg, pp;
  for (auto i : order) {
    pg.push_back(gts[i]);
    pp.push_back(preds[i]);
  }
  const auto a = evaluate(preds, gts), b = evaluate(pp, pg);
  expect_rel(a.mean_error_mm, b.mean_error_mm, 1e-12);
  expect_rel(a.max_per_joint_error_mm, b.max_per_joint_error_mm, 1e-12);
  EXPECT_EQ(a.error_cdf, b.error_cdf);
  const auto ea = joint_errors(preds, gts), eb = joint_errors(pp, pg);
  for (std::size_t k = 0; k < order.size(); ++k) EXPECT_EQ(eb[k], ea[order[k]]);
}

TEST(Evaluate, CommonTranslationCancelsAndOffsetIsBounded) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto gts = random_poses(rng, 6);
    const auto preds = random_poses(rng, 6);
    const Point3 t = test::random_point(rng, 50);
    std::vector<HandPose> tg, tp, only;
    for (std::size_t i = 0; i < gts.size(); ++i) {
      tg.push_back(shifted(gts[i], t));
      tp.push_back(shifted(preds[i], t));
      only.push_back(shifted(preds[i], t));
    }
    const double base = evaluate(preds, gts).mean_error_mm;
    expect_rel(evaluate(tp, tg).mean_error_mm, base, 1e-9);
    EXPECT_LE(std::abs(evaluate(only, gts).mean_error_mm - base), t.norm() + 1e-9);
  }
}

TEST(Evaluate, RejectsBadInput) {
  std::mt19937_64 rng(7);
  const auto gts = random_poses(rng, 3);
  const auto fewer = random_poses(rng, 2);
  EXPECT_THROW(evaluate(fewer, gts), Error);
  EXPECT_THROW(evaluate({}, {}), Error);
  auto broken = gts;
  broken[1].joints.pop_back();
  EXPECT_THROW(evaluate(broken, gts), Error);
  auto camera = gts;
  camera[0].frame = CoordinateFrame::camera;
  EXPECT_THROW(evaluate(camera, gts), Error);
}

TEST(Report, RoundTrip) {
  std::mt19937_64 rng(8);
  const auto gts = random_poses(rng, 9);
  const auto preds = random_poses(rng, 9);
  const auto r = evaluate(preds, gts);
  const auto back = parse_report(format_report(r));
  EXPECT_EQ(back.frames, r.frames);
  EXPECT_EQ(back.mean_error_mm, r.mean_error_mm);
  EXPECT_EQ(back.max_per_joint_error_mm, r.max_per_joint_error_mm);
  EXPECT_EQ(back.per_joint_mean_mm, r.per_joint_mean_mm);
  EXPECT_EQ(back.per_finger_mean_mm, r.per_finger_mean_mm);
  EXPECT_EQ(parse_cdf_csv(format_cdf_csv(r)), r.error_cdf);
  EXPECT_THROW(parse_report("frames 3\n"), Error);
  EXPECT_THROW(parse_cdf_csv("x,y\n0,1\n"), Error);
  EXPECT_THROW(parse_cdf_csv("threshold_mm,fraction\n0;1\n"), Error);
}

TEST(Report, FingerLabels) {
  const std::vector<std::string> labels(kFingerLabels.begin(), kFingerLabels.end());
  EXPECT_EQ(labels, (std::vector<std::string>{"T", "I", "M", "R", "P"}));
  const auto text = format_report(EvalReport{});
  for (const auto& l : labels) EXPECT_NE(text.find("finger_" + l + "_mean_mm"), std::string::npos);
}

TEST(Report, PerFrameCsvAgreesWithSummary) {
  std::mt19937_64 rng(9);
  const auto gts = random_poses(rng, 4);
  const auto preds = random_poses(rng, 4);
  const auto errors = joint_errors(preds, gts);
  std::istringstream in(format_per_frame_csv(errors));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 14), "frame,joint_0,");
  EXPECT_EQ(line.substr(line.size() - 9), ",mean,max");
  double sum_of_means = 0.0;
  int rows = 0;
  while (std::getline(in, line)) {
    std::vector<double> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(std::stod(cell));
    ASSERT_EQ(cells.size(), 1u + kNumJoints + 2);
    EXPECT_EQ(cells[0], rows);
    for (int j = 0; j < kNumJoints; ++j) EXPECT_EQ(cells[1 + j], errors[rows][j]);
    EXPECT_EQ(cells.back(), *std::max_element(errors[rows].begin(), errors[rows].end()));
    sum_of_means += cells[kNumJoints + 1];
    ++rows;
  }
  EXPECT_EQ(rows, 4);
  expect_rel(sum_of_means / rows, evaluate(preds, gts).mean_error_mm, 1e-12);
}

TEST(Overlay, PixelFollowsSilhouetteBinning) {
  EXPECT_EQ(overlay_pixel({-150, -150, 0}, 300, 4), cv::Point(2, 2));
  EXPECT_EQ(overlay_pixel({149.99, 149.99, 0}, 300, 4), cv::Point(127 * 4 + 2, 127 * 4 + 2));
  std::mt19937_64 rng(10);
  for (int i = 0; i < 1000; ++i) {
    const auto p = test::random_point(rng, 149.9);
    const auto bin = project_point(p, ViewPlane::frontal, 300);
    ASSERT_TRUE(bin.valid());
    EXPECT_EQ(overlay_pixel(p, 300, 1), cv::Point(bin.col, bin.row));
  }
}

TEST(Overlay, PredictionDrawnOverGroundTruth) {
  const auto s = make_sample(HandModelParams::defaults(), {}, 21);
  const auto same = render_overlay(s, s.pose, 4);
  ASSERT_EQ(same.rows, 512);
  ASSERT_EQ(same.cols, 512);
  ASSERT_EQ(same.type(), CV_8UC3);
  const cv::Vec3b green(0, 200, 0), blue(255, 80, 0), gray(110, 110, 110);
  // Coinciding skeletons: every joint shows the prediction colour.
  for (const auto& j : s.pose.joints) EXPECT_EQ(same.at<cv::Vec3b>(overlay_pixel(j, s.crop.cube_mm, 4)), green);

  // Far-off prediction: ground-truth joints stay blue.
  const auto away = render_overlay(s, shifted(s.pose, {400, 400, 0}), 4);
  for (const auto& j : s.pose.joints) EXPECT_EQ(away.at<cv::Vec3b>(overlay_pixel(j, s.crop.cube_mm, 4)), blue);

  // Silhouette bins away from the skeleton are gray.
  int gray_cells = 0;
  for (int r = 0; r < kSilhouetteSize; ++r) {
    for (int c = 0; c < kSilhouetteSize; ++c) {
      const auto px = away.at<cv::Vec3b>(r * 4, c * 4);
      if (s.silhouettes.at(0, r, c) == 0.0f) {
        EXPECT_NE(px, gray);
      } else {
        gray_cells += px == gray;
      }
    }
  }
  EXPECT_GT(gray_cells, 100);
}
