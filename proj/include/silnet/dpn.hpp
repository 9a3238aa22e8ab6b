#pragma once

#include <array>
#include <vector>

#include <torch/torch.h>

#include "silnet/types.hpp"

namespace silnet {

/// Conv -> BatchNorm -> ReLU.
class ConvBnReluImpl : public torch::nn::Module {
 public:
  ConvBnReluImpl(int in_channels, int out_channels, int kernel, int stride = 1);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv_{nullptr};
  torch::nn::BatchNorm2d bn_{nullptr};
};
TORCH_MODULE(ConvBnRelu);

/// One top-down stage of the pyramid: 3x3 deconvolution (x2 upsampling),
/// batch norm, ReLU, then a 3x3 convolution whose output is summed with the
/// lateral skip from the bottom-up path.
class UpStageImpl : public torch::nn::Module {
 public:
  UpStageImpl(int in_channels, int out_channels);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& skip);

 private:
  torch::nn::ConvTranspose2d deconv_{nullptr};
  torch::nn::BatchNorm2d bn_{nullptr};
  torch::nn::Conv2d conv_{nullptr};
};
TORCH_MODULE(UpStage);

struct DpnOptions {
  int view_count = 3;
  // Encoder widths at scales 1/2, 1/4, 1/8.
  std::array<int, 3> widths{32, 64, 128};
  // Width of the full-resolution depth-generator head.
  int head_width = 16;

  static DpnOptions scaled(int view_count, double width_scale);
};

/// Pyramid levels of the decoder, coarsest first.
enum class PyramidLevel { eighth = 0, quarter = 1, half = 2 };

struct DpnOutput {
  // Raw decoder features at scales 1/8, 1/4, 1/2 (NCHW).
  std::array<torch::Tensor, 3> level_features;
  // The same levels after their per-scale transformation: J*V channels at S x S.
  std::array<torch::Tensor, 3> level_guidance;
  // Full-level guidance (sum of the three transformed levels), B x J*V x S x S.
  torch::Tensor phi_dp;
  // Generated depth, B x 1 x 128 x 128 in [0, 1].
  torch::Tensor fake_depth;
};

/// FPN-style depth perceptive network over the silhouette stack.
class DpnImpl : public torch::nn::Module {
 public:
  explicit DpnImpl(const DpnOptions& options);

  /// `silhouettes` is B x V x 128 x 128.
  DpnOutput forward(const torch::Tensor& silhouettes);

  const DpnOptions& options() const { return options_; }
  GuidanceShape guidance() const { return shape_; }

 private:
  DpnOptions options_;
  GuidanceShape shape_;
  ConvBnRelu enc_half_{nullptr}, enc_quarter_{nullptr}, enc_eighth_{nullptr};
  UpStage up_quarter_{nullptr}, up_half_{nullptr};
  std::array<torch::nn::Conv2d, 3> transforms_{nullptr, nullptr, nullptr};
  torch::nn::ConvTranspose2d head_up_{nullptr};
  torch::nn::BatchNorm2d head_bn_{nullptr};
  torch::nn::Conv2d head_conv1_{nullptr}, head_conv2_{nullptr};
};
TORCH_MODULE(Dpn);

/// Guidance variant: HDP sums the 1/8 and 1/4 levels, FDP all three, none
/// uses no pyramid level. With `include_fake_depth` the generated depth,
/// area-downsampled to S x S, is added to every channel.
/// Returns an undefined tensor when no component is selected.
torch::Tensor guidance_variant(const DpnOutput& output, DpLevels levels, bool include_fake_depth);

/// Bilinear resize of NCHW features to size x size.
torch::Tensor resize_to(const torch::Tensor& x, int size);

/// Fan-in variance-scaling init for conv/linear weights, zero biases.
void init_parameters(torch::nn::Module& module);

}  // namespace silnet
