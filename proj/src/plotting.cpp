#include "silnet/plotting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <opencv2/imgproc.hpp>

#include "silnet/evaluation.hpp"

namespace silnet {

namespace {

const std::array<cv::Scalar, 6> kPalette = {
    cv::Scalar(180, 119, 31), cv::Scalar(14, 127, 255), cv::Scalar(44, 160, 44),
    cv::Scalar(40, 39, 214),  cv::Scalar(189, 103, 148), cv::Scalar(75, 86, 140),
};

constexpr int kWidth = 640;
constexpr int kHeight = 420;
constexpr int kLeft = 60, kRight = 20, kTop = 20, kBottom = 50;

void text(cv::Mat& img, const std::string& s, cv::Point at, double scale = 0.4) {
  cv::putText(img, s, at, cv::FONT_HERSHEY_SIMPLEX, scale, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

struct Axes {
  double x0, x1, y0, y1;
  cv::Point map(double x, double y) const {
    const double px = kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight);
    const double py = kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom);
    return {static_cast<int>(std::lround(px)), static_cast<int>(std::lround(py))};
  }
};

cv::Mat blank() { return cv::Mat(kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255)); }

void frame(cv::Mat& img, const Axes& ax, const std::string& ylabel) {
  cv::rectangle(img, ax.map(ax.x0, ax.y1), ax.map(ax.x1, ax.y0), cv::Scalar(0, 0, 0), 1);
  for (int i = 0; i <= 4; ++i) {
    const double y = ax.y0 + (ax.y1 - ax.y0) * i / 4.0;
    const auto p = ax.map(ax.x0, y);
    cv::line(img, p, p - cv::Point(4, 0), cv::Scalar(0, 0, 0));
    text(img, fmt(y), p + cv::Point(-45, 4));
  }
  text(img, ylabel, {4, kTop - 6});
}

void legend(cv::Mat& img, const std::vector<std::string>& labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const cv::Point at(kLeft + 10, kTop + 15 + 16 * static_cast<int>(i));
    cv::line(img, at, at + cv::Point(20, 0), kPalette[i % kPalette.size()], 2);
    text(img, labels[i], at + cv::Point(26, 4));
  }
}

}  // namespace

Figure plot_guidance_grid(const torch::Tensor& guidance, int tile_scale) {
  if (guidance.dim() != 3) throw usage_error("guidance grid: expected a C x S x S tensor");
  const auto g = guidance.detach().to(torch::kFloat).contiguous();
  const int channels = static_cast<int>(g.size(0));
  const int size = static_cast<int>(g.size(1));
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(channels))));
  const int rows = (channels + cols - 1) / cols;
  const int tile = size * tile_scale;
  const int gap = 2;

  Figure fig;
  fig.tiles = channels;
  fig.image = cv::Mat(rows * (tile + gap) + gap, cols * (tile + gap) + gap, CV_8UC3, cv::Scalar(255, 255, 255));
  const auto acc = g.accessor<float, 3>();
  for (int c = 0; c < channels; ++c) {
    float lo = acc[c][0][0], hi = lo;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        lo = std::min(lo, acc[c][y][x]);
        hi = std::max(hi, acc[c][y][x]);
      }
    }
    cv::Mat gray(size, size, CV_8UC1);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const float t = hi > lo ? (acc[c][y][x] - lo) / (hi - lo) : 0.0f;
        gray.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(std::lround(t * 255.0f));
      }
    }
    cv::Mat color;
    cv::applyColorMap(gray, color, cv::COLORMAP_VIRIDIS);
    if (tile_scale != 1) cv::resize(color, color, {tile, tile}, 0, 0, cv::INTER_NEAREST);
    const int r = c / cols, col = c % cols;
    color.copyTo(fig.image(cv::Rect(gap + col * (tile + gap), gap + r * (tile + gap), tile, tile)));
  }
  return fig;
}

Figure plot_error_cdf(const std::vector<CdfCurve>& curves) {
  if (curves.empty()) throw usage_error("CDF plot: no curves");
  Figure fig;
  fig.x_min = 0.0;
  fig.x_max = kCdfMaxMm;
  fig.image = blank();
  const Axes ax{fig.x_min, fig.x_max, 0.0, 1.0};
  frame(fig.image, ax, "fraction of frames");
  for (int x = 0; x <= static_cast<int>(kCdfMaxMm); x += 10) {
    const auto p = ax.map(x, 0.0);
    cv::line(fig.image, p, p + cv::Point(0, 4), cv::Scalar(0, 0, 0));
    text(fig.image, fmt(x), p + cv::Point(-6, 18));
  }
  text(fig.image, "maximum joint error threshold (mm)", {kWidth / 2 - 120, kHeight - 10});

  for (std::size_t i = 0; i < curves.size(); ++i) {
    std::vector<cv::Point> line;
    for (const auto& [t, f] : curves[i].points) {
      if (t < fig.x_min || t > fig.x_max) continue;
      line.push_back(ax.map(t, std::clamp(f, 0.0, 1.0)));
    }
    if (!line.empty()) {
      cv::polylines(fig.image, line, false, kPalette[i % kPalette.size()], 2, cv::LINE_AA);
    }
    fig.labels.push_back(curves[i].label);
  }
  legend(fig.image, fig.labels);
  return fig;
}

Figure plot_finger_bars(const std::vector<FingerSeries>& series) {
  if (series.empty()) throw usage_error("finger chart: no series");
  double top = 0.0;
  for (const auto& s : series) {
    for (double v : s.values) top = std::max(top, v);
  }
  top = top > 0.0 ? std::ceil(top * 1.15) : 1.0;

  Figure fig;
  fig.image = blank();
  fig.x_min = 0.0;
  fig.x_max = kNumFingers;
  const Axes ax{0.0, static_cast<double>(kNumFingers), 0.0, top};
  frame(fig.image, ax, "mean error (mm)");

  const double group = 0.8;
  const double bar = group / static_cast<double>(series.size());
  for (int f = 0; f < kNumFingers; ++f) {
    for (std::size_t i = 0; i < series.size(); ++i) {
      const double x0 = f + 0.1 + bar * static_cast<double>(i);
      cv::rectangle(fig.image, ax.map(x0, series[i].values[f]), ax.map(x0 + bar, 0.0) - cv::Point(1, 0),
                    kPalette[i % kPalette.size()], cv::FILLED);
    }
    fig.labels.emplace_back(kFingerLabels[f]);
    text(fig.image, kFingerLabels[f], ax.map(f + 0.5, 0.0) + cv::Point(-4, 20), 0.5);
  }
  std::vector<std::string> names;
  for (const auto& s : series) names.push_back(s.label);
  legend(fig.image, names);
  return fig;
}

}  // namespace silnet
