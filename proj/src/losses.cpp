#include "silnet/losses.hpp"

#include <cmath>
#include <sstream>

#include "silnet/dataset_io.hpp"

namespace silnet {

torch::Tensor loss_p(const torch::Tensor& fake, const torch::Tensor& real, const torch::Tensor& mask) {
  if (fake.sizes() != real.sizes() || fake.sizes() != mask.sizes()) {
    throw usage_error("loss_p: shape mismatch between generated depth, real depth and mask");
  }
  const auto m = mask.to(fake.scalar_type());
  const auto count = m.sum();
  if (count.item<double>() == 0.0) return (fake * 0.0).sum();
  return ((fake - real).abs() * m).sum() / count;
}

torch::Tensor loss_reg(const torch::Tensor& pred, const torch::Tensor& gt) {
  if (pred.sizes() != gt.sizes() || pred.dim() != 3 || pred.size(1) != kNumJoints || pred.size(2) != 3) {
    throw usage_error("loss_reg: expected matching B x 21 x 3 tensors");
  }
  return (pred - gt).square().sum({1, 2}).mean();
}

double loss_reg(const HandPose& pred, const HandPose& gt) {
  if (pred.frame != gt.frame) throw usage_error("loss_reg: coordinate frame mismatch");
  if (pred.frame != CoordinateFrame::centered) throw usage_error("loss_reg: poses must be centered");
  if (pred.joints.size() != kNumJoints || gt.joints.size() != kNumJoints) {
    throw usage_error("loss_reg: poses must have 21 joints");
  }
  double sum = 0.0;
  for (int j = 0; j < kNumJoints; ++j) sum += (pred.joints[j] - gt.joints[j]).squaredNorm();
  return sum;
}

double smooth_l1(double z) {
  const double a = std::abs(z);
  return a > 1.0 ? a - 0.5 : 0.5 * z * z;
}

torch::Tensor smooth_l1(const torch::Tensor& z) {
  const auto a = z.abs();
  return torch::where(a > 1.0, a - 0.5, 0.5 * z * z);
}

torch::Tensor loss_dp(const std::vector<torch::Tensor>& heatmaps, const torch::Tensor& guidance) {
  if (heatmaps.empty()) throw usage_error("loss_dp: no heatmaps");
  torch::Tensor sum;
  for (const auto& h : heatmaps) {
    if (h.sizes() != guidance.sizes()) throw usage_error("loss_dp: heatmap and guidance shapes differ");
    // smooth_l1(|d|) == smooth_l1(d); the fused kernel is much cheaper than
    // composing the piecewise form on 63-channel maps.
    const auto term = torch::smooth_l1_loss(h, guidance, at::Reduction::Mean, /*beta=*/1.0);
    sum = sum.defined() ? sum + term : term;
  }
  return sum / static_cast<double>(heatmaps.size());
}

torch::Tensor weight_penalty(const torch::nn::Module& module) {
  torch::Tensor sum;
  module.apply([&](const torch::nn::Module& m) {
    torch::Tensor weight;
    if (const auto* conv = m.as<torch::nn::Conv2d>()) {
      weight = conv->weight;
    } else if (const auto* deconv = m.as<torch::nn::ConvTranspose2d>()) {
      weight = deconv->weight;
    } else if (const auto* linear = m.as<torch::nn::Linear>()) {
      weight = linear->weight;
    }
    if (!weight.defined()) return;
    const auto term = weight.square().sum();
    sum = sum.defined() ? sum + term : term;
  });
  return sum.defined() ? sum : torch::zeros({});
}

bool uses_guidance(const TrainConfig& config) {
  return config.dp_levels != DpLevels::none || config.include_fake_depth_in_guidance;
}

LossReport total_loss(const LossTerms& terms, const TrainConfig& config, LossPhase phase) {
  if (!terms.reg.defined()) throw usage_error("total_loss: regression term is required");
  const bool training = phase == LossPhase::training;
  if (training && config.gt_depth_supervision && !terms.p.defined()) {
    throw data_error("gt_depth_supervision is enabled but no depth supervision term was provided");
  }

  LossReport report;
  auto add = [&](LossComponent& slot, const torch::Tensor& value, double weight, bool enabled) {
    if (!enabled || !value.defined()) return;
    slot.present = true;
    slot.raw = value.item<double>();
    slot.weighted = weight * slot.raw;
    const auto weighted = weight == 1.0 ? value : value * weight;
    report.total_tensor = report.total_tensor.defined() ? report.total_tensor + weighted : weighted;
  };
  add(report.reg, terms.reg, 1.0, true);
  add(report.p, terms.p, config.lambda_P, training && config.gt_depth_supervision);
  add(report.dp, terms.dp, config.lambda_dp, training && uses_guidance(config));
  add(report.w, terms.w, config.lambda_W, training);
  report.total = report.reg.weighted + report.p.weighted + report.dp.weighted + report.w.weighted;
  return report;
}

std::string loss_csv_header() { return "step,total,reg,p,dp,w\n"; }

std::string loss_csv_row(std::int64_t step, const LossReport& r) {
  auto cell = [](const LossComponent& c) { return c.present ? io::format_double(c.raw) : std::string(); };
  std::ostringstream row;
  row << step << "," << io::format_double(r.total) << "," << cell(r.reg) << "," << cell(r.p) << "," << cell(r.dp)
      << "," << cell(r.w) << "\n";
  return row.str();
}

}  // namespace silnet
