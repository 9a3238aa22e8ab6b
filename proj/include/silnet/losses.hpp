#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

#include "silnet/types.hpp"

namespace silnet {

/// Mean absolute difference between generated and real depth over the
/// pixels where `mask` is nonzero; 0 when the mask is empty.
torch::Tensor loss_p(const torch::Tensor& fake, const torch::Tensor& real, const torch::Tensor& mask);

/// Sum over joints of the squared Euclidean joint error (mm^2), averaged
/// over the batch. Inputs are B x 21 x 3.
torch::Tensor loss_reg(const torch::Tensor& pred, const torch::Tensor& gt);
/// Single-pose form; both poses must be in the centered frame.
double loss_reg(const HandPose& pred, const HandPose& gt);

/// 0.5 z^2 for |z| <= 1, |z| - 0.5 otherwise.
double smooth_l1(double z);
torch::Tensor smooth_l1(const torch::Tensor& z);

/// Element-wise smooth-L1 of |H - guidance| averaged over all elements, then
/// averaged over the supervised heatmaps.
torch::Tensor loss_dp(const std::vector<torch::Tensor>& heatmaps, const torch::Tensor& guidance);

/// Sum of squared convolution and fully-connected weights (biases and
/// normalization parameters excluded).
torch::Tensor weight_penalty(const torch::nn::Module& module);

/// Loss terms of one step; undefined tensors are absent.
struct LossTerms {
  torch::Tensor reg;
  torch::Tensor p;
  torch::Tensor dp;
  torch::Tensor w;
};

struct LossComponent {
  bool present = false;
  double raw = 0.0;
  double weighted = 0.0;
};

struct LossReport {
  torch::Tensor total_tensor;  // differentiable
  double total = 0.0;
  LossComponent reg, p, dp, w;
};

enum class LossPhase { training, inference };

/// Combines the terms as reg + lambda_P p + lambda_dp dp + lambda_W w.
/// Terms disabled by the config contribute exactly zero and are reported
/// absent; in the inference phase the total is reg alone.
LossReport total_loss(const LossTerms& terms, const TrainConfig& config, LossPhase phase = LossPhase::training);

/// Whether the configuration trains the heatmaps toward a guidance tensor.
bool uses_guidance(const TrainConfig& config);

/// CSV header and row of the per-step training log.
std::string loss_csv_header();
std::string loss_csv_row(std::int64_t step, const LossReport& report);

}  // namespace silnet
