#include "zsl/losses.hpp"

#include <algorithm>
#include <cmath>

#include "zsl/errors.hpp"
#include "zsl/ops.hpp"
#include "zsl/vit.hpp"

namespace zsl {

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("mse_loss: prediction " + shape_str(pred.shape()) + " vs target " + shape_str(target.shape()));
  }
  Tensor out = detail::make_output(Shape{}, {&pred});
  const double inv_n = 1.0 / static_cast<double>(pred.numel());
  auto fwd = [pred, target, out, inv_n]() mutable {
    auto p = pred.values();
    auto t = target.values();
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (t[i] - p[i]) * (t[i] - p[i]);
    out.values()[0] = s * inv_n;
  };
  auto bwd = [pred, target, out, inv_n]() mutable {
    const double go = out.grad()[0];
    auto p = pred.values();
    auto t = target.values();
    auto g = pred.grad();
    for (std::size_t i = 0; i < p.size(); ++i) g[i] += go * 2.0 * (p[i] - t[i]) * inv_n;
  };
  detail::run_and_record("mse_loss", {pred, target}, out, fwd, bwd);
  return out;
}

Tensor rotation_ce(const Tensor& logits, std::span<const int> labels) {
  if (logits.dim() != 2 || logits.size(1) != kNumRotations) {
    throw DimensionError("rotation_ce: logits must be [rows x 4], got " + shape_str(logits.shape()));
  }
  const std::size_t rows = logits.size(0);
  if (labels.size() != rows) {
    throw DimensionError("rotation_ce: " + std::to_string(labels.size()) + " labels for " + std::to_string(rows) + " rows");
  }
  if (rows % kNumRotations != 0) throw DimensionError("rotation_ce: rows must come in groups of 4 rotations");
  for (int a : labels) {
    if (a < 0 || a > 3) throw ContractError("rotation label must be in {0,1,2,3}, got " + std::to_string(a));
  }
  std::vector<int> lab(labels.begin(), labels.end());
  const double inv_groups = static_cast<double>(kNumRotations) / static_cast<double>(rows);
  Tensor out = detail::make_output(Shape{}, {&logits});
  auto fwd = [logits, out, lab, rows, inv_groups]() mutable {
    auto x = logits.values();
    double s = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* xr = x.data() + r * kNumRotations;
      const double mx = *std::max_element(xr, xr + kNumRotations);
      double z = 0.0;
      for (std::size_t j = 0; j < kNumRotations; ++j) z += std::exp(xr[j] - mx);
      s += -(xr[lab[r]] - mx - std::log(z));
    }
    out.values()[0] = s * inv_groups;
  };
  auto bwd = [logits, out, lab, rows, inv_groups]() mutable {
    const double go = out.grad()[0] * inv_groups;
    auto x = logits.values();
    auto g = logits.grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* xr = x.data() + r * kNumRotations;
      const double mx = *std::max_element(xr, xr + kNumRotations);
      double z = 0.0;
      for (std::size_t j = 0; j < kNumRotations; ++j) z += std::exp(xr[j] - mx);
      for (std::size_t j = 0; j < kNumRotations; ++j) {
        const double p = std::exp(xr[j] - mx) / z;
        g[r * kNumRotations + j] += go * (p - (static_cast<int>(j) == lab[r] ? 1.0 : 0.0));
      }
    }
  };
  detail::run_and_record("rotation_ce", {logits}, out, fwd, bwd);
  return out;
}

TotalLoss total_loss(const Tensor& ce, const Tensor& mse, double lambda1, double lambda2) {
  TotalLoss out;
  out.breakdown.lambda1 = lambda1;
  out.breakdown.lambda2 = lambda2;
  out.breakdown.l_mse = mse.item();
  if (ce.defined()) {
    out.breakdown.l_ce = ce.item();
    out.total = add(scale(ce, lambda1), scale(mse, lambda2));
  } else {
    out.total = scale(mse, lambda2);
  }
  out.breakdown.l_tot = out.total.item();
  return out;
}

}  // namespace zsl
