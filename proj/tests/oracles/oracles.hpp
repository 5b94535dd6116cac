#pragma once

// Independent reference implementations used only by the tests. Nothing here
// calls into the library's math: plain loops over std::vector, written for
// readability rather than speed.

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

// C[m x n] = A[m x k] * B[k x n], scalar triple loop.
Vec matmul(const Vec& a, const Vec& b, std::size_t m, std::size_t k, std::size_t n);

Vec softmax(const Vec& x);

// Population-variance layer norm of one token.
Vec layer_norm(const Vec& x, const Vec& gain, const Vec& bias, double eps);

double gelu(double x);

// Weights of one pre-norm encoder block in plain arrays, row-major, with
// projections stored input-major ([in x out]) like the library.
struct BlockWeights {
  std::size_t dim = 0, heads = 0, hidden = 0;
  Vec norm1_gain, norm1_bias;
  Vec wq, bq, wk, bk, wv, bv, wo, bo;
  Vec norm2_gain, norm2_bias;
  Vec w1, b1, w2, b2;
};

struct BlockResult {
  Vec output;                     // [T x D]
  std::vector<Vec> attention;     // per head, [T x T]
};

// z' = MHA(LN(z)) + z; out = MLP(LN(z')) + z', token by token.
BlockResult encoder_block(const Vec& z, std::size_t tokens, const BlockWeights& w);

// Attention rollout: per layer mean over heads + identity, rows renormalized,
// product A_L ... A_1; returns the class-token row over the patch tokens.
// probs is [layers x heads x T x T].
Vec rollout_class_row(const Vec& probs, std::size_t layers, std::size_t heads, std::size_t tokens);

struct CountingReport {
  std::map<int, double> per_class;  // percent
  double seen = 0, unseen = 0, harmonic = 0;
};

// Brute-force GZSL evaluation: for each sample, counts how many classes beat
// the true class (strictly, or tie with a lower id) after subtracting gamma
// from seen columns; correct iff that count is zero.
CountingReport gzsl_counting(const std::vector<std::vector<double>>& scores, const std::vector<int>& class_ids,
                             const std::vector<bool>& class_seen, const std::vector<int>& true_class, double gamma);

// Central finite difference of f with respect to x[i], step h.
double central_difference(const std::function<double()>& f, double& xi, double h);

// Fourth-order central difference (points x +- h, x +- 2h).
double central_difference4(const std::function<double()>& f, double& xi, double h);

// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-6);

}  // namespace oracle
