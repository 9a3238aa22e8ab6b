#include "silnet/rpn.hpp"

#include <algorithm>
#include <cmath>

namespace silnet {

namespace F = torch::nn::functional;

namespace {

// Spatial size fed to the fully-connected prediction block.
constexpr int kPooledSize = 4;

}  // namespace

InceptionResidualImpl::InceptionResidualImpl(int channels) {
  const int b = std::max(4, channels / 4);
  path1_ = register_module("path1", ConvBnRelu(channels, b, 1));
  path2a_ = register_module("path2a", ConvBnRelu(channels, b, 1));
  path2b_ = register_module("path2b", ConvBnRelu(b, b, 3));
  path3a_ = register_module("path3a", ConvBnRelu(channels, b, 1));
  path3b_ = register_module("path3b", ConvBnRelu(b, b + b / 2, 3));
  path3c_ = register_module("path3c", ConvBnRelu(b + b / 2, 2 * b, 3));
  project_ = register_module("project", torch::nn::Conv2d(torch::nn::Conv2dOptions(4 * b, channels, 1)));
}

torch::Tensor InceptionResidualImpl::forward(const torch::Tensor& x) {
  const auto mixed = torch::cat({path1_(x), path2b_(path2a_(x)), path3c_(path3b_(path3a_(x)))}, 1);
  return torch::relu(x + project_(mixed));
}

HeatmapStageImpl::HeatmapStageImpl(int feature_channels, const GuidanceShape& shape) : shape_(shape) {
  conv1_ = register_module("conv1", ConvBnRelu(feature_channels, feature_channels, 3));
  conv2_ = register_module(
      "conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(feature_channels, shape.channels, 3).padding(1)));
  embed_ = register_module("embed",
                           torch::nn::Conv2d(torch::nn::Conv2dOptions(shape.channels, feature_channels, 1)));
}

HeatmapStageImpl::Output HeatmapStageImpl::forward(const torch::Tensor& features) {
  const auto low = conv2_(conv1_(features));
  return {resize_to(low, shape_.scale), embed_(low)};
}

RpnOptions RpnOptions::scaled(int view_count, double width_scale) {
  RpnOptions o;
  o.view_count = view_count;
  for (auto& w : o.widths) w = std::max(4, static_cast<int>(std::lround(w * width_scale)));
  return o;
}

RpnImpl::RpnImpl(const RpnOptions& options) : options_(options), shape_(guidance_shape(options.view_count)) {
  TORCH_CHECK(options_.stages >= 1, "RPN needs at least one middle stage");
  const auto& w = options_.widths;
  conv1_ = register_module("conv1", ConvBnRelu(options_.view_count, w[0], 3, 2));
  conv2_ = register_module("conv2", ConvBnRelu(w[0], w[1], 3, 2));
  conv3_ = register_module("conv3", ConvBnRelu(w[1], w[2], 3));
  residual_ = register_module("residual", InceptionResidual(w[2]));
  stages_ = register_module("stages", torch::nn::ModuleList());
  for (int s = 0; s < options_.stages; ++s) stages_->push_back(HeatmapStage(w[2], shape_));
  reduce1_ = register_module("reduce1", ConvBnRelu(w[2], w[2], 3, 2));
  reduce2_ = register_module("reduce2", ConvBnRelu(w[2], w[2], 3, 2));
  fc1_ = register_module("fc1", torch::nn::Linear(w[2] * kPooledSize * kPooledSize, options_.hidden));
  fc2_ = register_module("fc2", torch::nn::Linear(options_.hidden, kNumJoints * 3));
  init_parameters(*this);
}

RpnOutput RpnImpl::forward(const torch::Tensor& silhouettes) {
  TORCH_CHECK(silhouettes.dim() == 4 && silhouettes.size(1) == options_.view_count &&
                  silhouettes.size(2) == kSilhouetteSize && silhouettes.size(3) == kSilhouetteSize,
              "RPN expects B x ", options_.view_count, " x 128 x 128 input, got ", silhouettes.sizes());
  RpnOutput out;
  auto features = residual_(conv3_(conv2_(conv1_(silhouettes))));
  for (const auto& module : *stages_) {
    auto stage = module->as<HeatmapStageImpl>()->forward(features);
    features = features + stage.update;
    out.heatmaps.push_back(std::move(stage.heatmap));
  }
  auto x = reduce2_(reduce1_(features));
  x = F::adaptive_avg_pool2d(x, F::AdaptiveAvgPool2dFuncOptions({kPooledSize, kPooledSize}));
  x = torch::relu(fc1_(x.flatten(1)));
  const auto raw = (fc2_(x) * options_.output_scale_mm).view({-1, kNumJoints, 3});
  // Targets are centroid-free, so the prediction is projected onto that subspace.
  out.pose = raw - raw.mean(1, /*keepdim=*/true);
  return out;
}

torch::Tensor to_input_tensor(const std::vector<const SilhouetteStack*>& stacks) {
  TORCH_CHECK(!stacks.empty(), "empty batch");
  const int v = stacks.front()->view_count;
  auto out = torch::empty({static_cast<int64_t>(stacks.size()), v, kSilhouetteSize, kSilhouetteSize});
  float* dst = out.data_ptr<float>();
  for (const auto* s : stacks) {
    TORCH_CHECK(s->view_count == v, "mixed view counts in a batch");
    dst = std::copy(s->pixels.begin(), s->pixels.end(), dst);
  }
  return out;
}

torch::Tensor to_pose_tensor(const std::vector<const HandPose*>& poses) {
  auto out = torch::empty({static_cast<int64_t>(poses.size()), kNumJoints, 3});
  auto acc = out.accessor<float, 3>();
  for (std::size_t b = 0; b < poses.size(); ++b) {
    TORCH_CHECK(poses[b]->joints.size() == kNumJoints, "pose must have 21 joints");
    for (int j = 0; j < kNumJoints; ++j) {
      for (int c = 0; c < 3; ++c) acc[b][j][c] = static_cast<float>(poses[b]->joints[j][c]);
    }
  }
  return out;
}

HandPose pose_from_tensor(const torch::Tensor& poses, std::int64_t row) {
  const auto r = poses[row].to(torch::kDouble).contiguous();
  const auto acc = r.accessor<double, 2>();
  HandPose pose;
  pose.frame = CoordinateFrame::centered;
  for (int j = 0; j < kNumJoints; ++j) pose.joints.emplace_back(acc[j][0], acc[j][1], acc[j][2]);
  // Float rounding leaves a tiny residual centroid.
  return pose.centered();
}

}  // namespace silnet
