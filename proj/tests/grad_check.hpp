#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace silnet::test {

struct GradCheck {
  double worst_rel = 0.0;
  int checked = 0;
  std::string worst_where;
};

// Central differences on `count` random entries of each tensor in `wrt`
// (double tensors requiring grad) against autograd. Entries whose analytic
// and numeric derivatives are both below `floor` are skipped as flat.
inline GradCheck check_gradients(const std::function<torch::Tensor()>& objective, std::vector<torch::Tensor> wrt,
                                 int count, std::uint64_t seed, double step = 1e-5, double floor = 1e-7) {
  for (auto& t : wrt) {
    if (t.grad().defined()) t.mutable_grad().zero_();
  }
  objective().backward();
  std::vector<torch::Tensor> analytic;
  for (auto& t : wrt) analytic.push_back(t.grad().defined() ? t.grad().clone() : torch::zeros_like(t));

  std::mt19937_64 rng(seed);
  GradCheck out;
  torch::NoGradGuard no_grad;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    auto flat = wrt[k].view(-1);
    const auto a_flat = analytic[k].view(-1);
    const int n = std::min<int>(count, static_cast<int>(flat.numel()));
    for (int i = 0; i < n; ++i) {
      const auto idx = static_cast<std::int64_t>(rng() % flat.numel());
      const double orig = flat[idx].item<double>();
      flat[idx] = orig + step;
      const double up = objective().item<double>();
      flat[idx] = orig - step;
      const double down = objective().item<double>();
      flat[idx] = orig;
      const double numeric = (up - down) / (2 * step);
      const double a = a_flat[idx].item<double>();
      if (std::abs(a) < floor && std::abs(numeric) < floor) continue;
      const double rel = std::abs(a - numeric) / std::max(std::abs(a), std::abs(numeric));
      ++out.checked;
      if (rel > out.worst_rel) {
        out.worst_rel = rel;
        out.worst_where = "tensor " + std::to_string(k) + " index " + std::to_string(idx) + " analytic " +
                          std::to_string(a) + " numeric " + std::to_string(numeric);
      }
    }
  }
  return out;
}

}  // namespace silnet::test
