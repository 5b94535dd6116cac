#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zsl/tensor.hpp"

namespace zsl {

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<NamedParameter>;

struct AdamState {
  std::uint64_t step_count = 0;
  // One moment entry per trainable element, parameter by parameter.
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState make_adam_state(const ParameterList& params, double lr = 1e-4);

// Bias-corrected Adam update, then zeroes every gradient buffer.
// Throws ContractError naming the first parameter without a gradient.
void adam_step(ParameterList& params, AdamState& state);

}  // namespace zsl
