#pragma once

#include <span>
#include <vector>

#include "zsl/tensor.hpp"

namespace zsl {

// Mean squared error averaged over attributes and rows: pred and target have
// the same shape, either [M] or [B x M]. target carries no gradient.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

// Rotation cross-entropy. logits is [G*4 x 4]; rows come in groups of four
// rotated copies of one source. Per row: -log softmax(logits)[label]; summed
// within a group, averaged over the G groups.
Tensor rotation_ce(const Tensor& logits, std::span<const int> labels);

struct LossBreakdown {
  double l_mse = 0.0;
  double l_ce = 0.0;
  double l_tot = 0.0;
  double lambda1 = 1.0;  // weight of l_ce
  double lambda2 = 1.0;  // weight of l_mse
};

struct TotalLoss {
  Tensor total;
  LossBreakdown breakdown;
};

// lambda1 * l_ce + lambda2 * l_mse. An undefined ce tensor means the batch has
// no rotation block and contributes 0.
TotalLoss total_loss(const Tensor& ce, const Tensor& mse, double lambda1, double lambda2);

}  // namespace zsl
