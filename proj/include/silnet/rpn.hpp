#pragma once

#include <array>
#include <vector>

#include <torch/torch.h>

#include "silnet/dpn.hpp"
#include "silnet/types.hpp"

namespace silnet {

/// Inception-ResNet-A style block: parallel 1x1, 1x1->3x3 and
/// 1x1->3x3->3x3 paths, concatenated, projected by a 1x1 convolution and
/// added back to the input.
class InceptionResidualImpl : public torch::nn::Module {
 public:
  explicit InceptionResidualImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  ConvBnRelu path1_{nullptr};
  ConvBnRelu path2a_{nullptr}, path2b_{nullptr};
  ConvBnRelu path3a_{nullptr}, path3b_{nullptr}, path3c_{nullptr};
  torch::nn::Conv2d project_{nullptr};
};
TORCH_MODULE(InceptionResidual);

/// One middle-stage repetition: branch1 predicts the latent heatmap from the
/// branch0 features and re-embeds it for the merge.
class HeatmapStageImpl : public torch::nn::Module {
 public:
  HeatmapStageImpl(int feature_channels, const GuidanceShape& shape);

  struct Output {
    torch::Tensor heatmap;  // B x J*V x S x S
    torch::Tensor update;   // added to the features
  };
  /// The heatmap is predicted at the feature resolution and resized to S;
  /// the 1x1 re-embedding reads the pre-resize map.
  Output forward(const torch::Tensor& features);

 private:
  GuidanceShape shape_;
  ConvBnRelu conv1_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
  torch::nn::Conv2d embed_{nullptr};
};
TORCH_MODULE(HeatmapStage);

struct RpnOptions {
  int view_count = 3;
  // Feature-extractor widths of the three convolutions (1/2, 1/4, 1/4 scale).
  std::array<int, 3> widths{16, 32, 64};
  int hidden = 1024;
  // Middle-stage executions: the initial one plus identity repetitions.
  int stages = 2;
  // Network outputs are multiplied by this to give millimeters.
  double output_scale_mm = 100.0;

  static RpnOptions scaled(int view_count, double width_scale);
};

struct RpnOutput {
  torch::Tensor pose;                   // B x 21 x 3, millimeters, centered frame
  std::vector<torch::Tensor> heatmaps;  // one B x J*V x S x S tensor per stage
};

/// Residual prediction network: silhouettes -> latent heatmaps -> joints.
class RpnImpl : public torch::nn::Module {
 public:
  explicit RpnImpl(const RpnOptions& options);

  /// `silhouettes` is B x V x 128 x 128.
  RpnOutput forward(const torch::Tensor& silhouettes);

  const RpnOptions& options() const { return options_; }
  GuidanceShape guidance() const { return shape_; }

 private:
  RpnOptions options_;
  GuidanceShape shape_;
  ConvBnRelu conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr};
  InceptionResidual residual_{nullptr};
  torch::nn::ModuleList stages_{nullptr};
  ConvBnRelu reduce1_{nullptr}, reduce2_{nullptr};
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(Rpn);

/// B x V x 128 x 128 float tensor of a batch of stacks.
torch::Tensor to_input_tensor(const std::vector<const SilhouetteStack*>& stacks);

/// B x 21 x 3 float tensor of centered poses.
torch::Tensor to_pose_tensor(const std::vector<const HandPose*>& poses);

/// Converts row b of a B x 21 x 3 tensor back to a centered pose.
HandPose pose_from_tensor(const torch::Tensor& poses, std::int64_t row);

}  // namespace silnet
