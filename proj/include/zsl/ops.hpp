#pragma once

#include <cstddef>
#include <vector>

#include "zsl/tensor.hpp"

namespace zsl {

// Differentiable primitives. Every op records a graph node when one of its
// inputs requires a gradient and a graph is active (see GraphScope).

// a[m x k] * b[k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

// x[m x n] + bias[n] on every row.
Tensor add_bias(const Tensor& x, const Tensor& bias);
// x * w + bias; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Stable softmax along `axis` (max subtracted per slice).
Tensor softmax(const Tensor& x, std::size_t axis);
// Softmax along the last axis.
Tensor softmax(const Tensor& x);

inline constexpr double kLayerNormEps = 1e-5;
// Normalizes every length-D slice of the last axis, then applies gain/bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = kLayerNormEps);

// Exact x * Phi(x).
Tensor gelu(const Tensor& x);
double gelu_scalar(double x);

// Gathers rows of a 2-D tensor.
Tensor select_rows(const Tensor& x, const std::vector<std::size_t>& rows);
// Splits x[G*N x D] into G groups of N rows and prepends `token` to each,
// giving [G*(N+1) x D].
Tensor prepend_token(const Tensor& x, const Tensor& token, std::size_t groups);
// x[G*T x D] + pattern[T x D] repeated for every group.
Tensor add_tiled(const Tensor& x, const Tensor& pattern);

Tensor reshape(const Tensor& x, Shape shape);

struct AttentionResult {
  Tensor output;         // [G*T x D], heads concatenated along columns
  Tensor probabilities;  // [G x heads x T x T], no gradient
};

// Multi-head scaled dot-product attention over G independent sequences of
// length T. q, k, v are [G*T x D]; head h uses columns [h*dk, (h+1)*dk) with
// dk = D / heads. Per head: softmax(Q K^T / sqrt(dk)) V.
AttentionResult multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t groups,
                                     std::size_t heads);

}  // namespace zsl
