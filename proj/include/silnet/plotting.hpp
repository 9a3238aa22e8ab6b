#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include "silnet/types.hpp"

namespace silnet {

struct Figure {
  cv::Mat image;  // 8-bit BGR
  int tiles = 0;
  double x_min = 0.0;
  double x_max = 0.0;
  std::vector<std::string> labels;
};

/// One tile per guidance channel of a C x S x S tensor, each min-max
/// normalized, laid out row-major on a near-square grid.
Figure plot_guidance_grid(const torch::Tensor& guidance, int tile_scale = 1);

struct CdfCurve {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (threshold mm, fraction)
};

/// Fraction of frames within a maximum joint error, x from 0 to 80 mm.
Figure plot_error_cdf(const std::vector<CdfCurve>& curves);

struct FingerSeries {
  std::string label;
  std::array<double, kNumFingers> values{};
};

/// Grouped bars of per-finger mean error, groups labeled T, I, M, R, P.
Figure plot_finger_bars(const std::vector<FingerSeries>& series);

}  // namespace silnet
