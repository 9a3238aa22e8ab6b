#include "silnet/dpn.hpp"

#include <algorithm>
#include <cmath>

namespace silnet {

namespace F = torch::nn::functional;

namespace {

int scaled_width(int width, double scale) { return std::max(4, static_cast<int>(std::lround(width * scale))); }

}  // namespace

ConvBnReluImpl::ConvBnReluImpl(int in_channels, int out_channels, int kernel, int stride) {
  conv_ = register_module(
      "conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, out_channels, kernel)
                                    .stride(stride)
                                    .padding(kernel / 2)
                                    .bias(false)));
  bn_ = register_module("bn", torch::nn::BatchNorm2d(out_channels));
}

torch::Tensor ConvBnReluImpl::forward(const torch::Tensor& x) { return torch::relu(bn_(conv_(x))); }

UpStageImpl::UpStageImpl(int in_channels, int out_channels) {
  deconv_ = register_module(
      "deconv", torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(in_channels, out_channels, 3)
                                               .stride(2)
                                               .padding(1)
                                               .output_padding(1)
                                               .bias(false)));
  bn_ = register_module("bn", torch::nn::BatchNorm2d(out_channels));
  conv_ = register_module(
      "conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(out_channels, out_channels, 3).padding(1)));
}

torch::Tensor UpStageImpl::forward(const torch::Tensor& x, const torch::Tensor& skip) {
  return conv_(torch::relu(bn_(deconv_(x)))) + skip;
}

DpnOptions DpnOptions::scaled(int view_count, double width_scale) {
  DpnOptions o;
  o.view_count = view_count;
  for (auto& w : o.widths) w = scaled_width(w, width_scale);
  o.head_width = scaled_width(o.head_width, width_scale);
  return o;
}

DpnImpl::DpnImpl(const DpnOptions& options) : options_(options), shape_(guidance_shape(options.view_count)) {
  const auto& w = options_.widths;
  enc_half_ = register_module("enc_half", ConvBnRelu(options_.view_count, w[0], 3, 2));
  enc_quarter_ = register_module("enc_quarter", ConvBnRelu(w[0], w[1], 3, 2));
  enc_eighth_ = register_module("enc_eighth", ConvBnRelu(w[1], w[2], 3, 2));
  up_quarter_ = register_module("up_quarter", UpStage(w[2], w[1]));
  up_half_ = register_module("up_half", UpStage(w[1], w[0]));
  const std::array<int, 3> level_widths{w[2], w[1], w[0]};
  const char* names[3] = {"transform_eighth", "transform_quarter", "transform_half"};
  for (int i = 0; i < 3; ++i) {
    transforms_[i] = register_module(
        names[i], torch::nn::Conv2d(torch::nn::Conv2dOptions(level_widths[i], shape_.channels, 1)));
  }
  head_up_ = register_module(
      "head_up", torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(w[0], options_.head_width, 3)
                                                .stride(2)
                                                .padding(1)
                                                .output_padding(1)
                                                .bias(false)));
  head_bn_ = register_module("head_bn", torch::nn::BatchNorm2d(options_.head_width));
  head_conv1_ = register_module(
      "head_conv1",
      torch::nn::Conv2d(torch::nn::Conv2dOptions(options_.head_width, options_.head_width, 3).padding(1)));
  head_conv2_ = register_module(
      "head_conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(options_.head_width, 1, 3).padding(1)));
  init_parameters(*this);
}

DpnOutput DpnImpl::forward(const torch::Tensor& silhouettes) {
  TORCH_CHECK(silhouettes.dim() == 4 && silhouettes.size(1) == options_.view_count &&
                  silhouettes.size(2) == kSilhouetteSize && silhouettes.size(3) == kSilhouetteSize,
              "DPN expects B x ", options_.view_count, " x 128 x 128 input, got ", silhouettes.sizes());
  const auto half = enc_half_(silhouettes);
  const auto quarter = enc_quarter_(half);
  const auto eighth = enc_eighth_(quarter);
  const auto up_quarter = up_quarter_(eighth, quarter);
  const auto up_half = up_half_(up_quarter, half);

  DpnOutput out;
  out.level_features = {eighth, up_quarter, up_half};
  for (int i = 0; i < 3; ++i) {
    out.level_guidance[i] = resize_to(transforms_[i](out.level_features[i]), shape_.scale);
  }
  out.phi_dp = out.level_guidance[0] + out.level_guidance[1] + out.level_guidance[2];

  auto head = torch::relu(head_bn_(head_up_(up_half)));
  head = torch::relu(head_conv1_(head));
  out.fake_depth = torch::sigmoid(head_conv2_(head));
  return out;
}

torch::Tensor guidance_variant(const DpnOutput& output, DpLevels levels, bool include_fake_depth) {
  torch::Tensor guidance;
  switch (levels) {
    case DpLevels::none:
      break;
    case DpLevels::hdp:
      guidance = output.level_guidance[0] + output.level_guidance[1];
      break;
    case DpLevels::fdp:
      guidance = output.level_guidance[0] + output.level_guidance[1] + output.level_guidance[2];
      break;
  }
  if (include_fake_depth) {
    const auto& ref = output.level_guidance[0];
    const auto fake = F::adaptive_avg_pool2d(output.fake_depth,
                                             F::AdaptiveAvgPool2dFuncOptions({ref.size(2), ref.size(3)}));
    const auto expanded = fake.expand_as(ref);
    guidance = guidance.defined() ? guidance + expanded : expanded.contiguous();
  }
  return guidance;
}

torch::Tensor resize_to(const torch::Tensor& x, int size) {
  if (x.size(2) == size && x.size(3) == size) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{size, size})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

void init_parameters(torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  module.apply([](torch::nn::Module& m) {
    if (auto* conv = m.as<torch::nn::Conv2d>()) {
      torch::nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanIn, torch::kReLU);
      if (conv->bias.defined()) conv->bias.zero_();
    } else if (auto* deconv = m.as<torch::nn::ConvTranspose2d>()) {
      // Weight layout is (in, out, kh, kw); fan-in is out * kh * kw here.
      const auto& wt = deconv->weight;
      const double fan_in = static_cast<double>(wt.size(1) * wt.size(2) * wt.size(3));
      wt.normal_(0.0, std::sqrt(2.0 / fan_in));
      if (deconv->bias.defined()) deconv->bias.zero_();
    } else if (auto* linear = m.as<torch::nn::Linear>()) {
      torch::nn::init::kaiming_normal_(linear->weight, 0.0, torch::kFanIn, torch::kReLU);
      if (linear->bias.defined()) linear->bias.zero_();
    }
  });
}

}  // namespace silnet
