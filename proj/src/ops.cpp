#include "zsl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "kernels.hpp"
#include "zsl/errors.hpp"

namespace zsl {

namespace {

void require_2d(const Tensor& t, const char* op) {
  if (t.dim() != 2) throw DimensionError(std::string(op) + " expects a 2-D tensor, got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// Accumulates g into t's gradient when t participates in differentiation.
template <typename F>
void accumulate_into(const Tensor& t, F&& fill) {
  if (!t.requires_grad()) return;
  fill(t.grad());
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.size(0), k = a.size(1), n = b.size(1);
  if (b.size(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
  }
  Tensor out = detail::make_output({m, n}, {&a, &b});
  auto fwd = [a, b, out, m, n, k]() mutable {
    kernels::gemm_nn(m, n, k, a.values().data(), k, b.values().data(), n, out.values().data(), n, false);
  };
  auto bwd = [a, b, out, m, n, k]() mutable {
    const double* go = out.grad().data();
    if (a.requires_grad()) {
      std::vector<double> scratch;
      kernels::gemm_nt(m, k, n, go, n, b.values().data(), n, a.grad().data(), k, true, scratch);
    }
    if (b.requires_grad()) {
      kernels::gemm_tn_acc(m, n, k, a.values().data(), k, go, n, b.grad().data(), n);
    }
  };
  detail::run_and_record("matmul", {a, b}, out, fwd, bwd);
  return out;
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const std::size_t r = a.size(0), c = a.size(1);
  Tensor out = detail::make_output({c, r}, {&a});
  auto fwd = [a, out, r, c]() mutable { kernels::transpose(r, c, a.values().data(), c, out.values().data()); };
  auto bwd = [a, out, r, c]() mutable {
    auto ga = a.grad();
    auto go = out.grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += go[j * r + i];
  };
  detail::run_and_record("transpose", {a}, out, fwd, bwd);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = detail::make_output(a.shape(), {&a, &b});
  auto fwd = [a, b, out]() mutable {
    auto o = out.values();
    auto x = a.values();
    auto y = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  };
  auto bwd = [a, b, out]() mutable {
    auto go = out.grad();
    accumulate_into(a, [&](std::span<double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
    });
    accumulate_into(b, [&](std::span<double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
    });
  };
  detail::run_and_record("add", {a, b}, out, fwd, bwd);
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = detail::make_output(a.shape(), {&a, &b});
  auto fwd = [a, b, out]() mutable {
    auto o = out.values();
    auto x = a.values();
    auto y = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  };
  auto bwd = [a, b, out]() mutable {
    auto go = out.grad();
    accumulate_into(a, [&](std::span<double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
    });
    accumulate_into(b, [&](std::span<double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= go[i];
    });
  };
  detail::run_and_record("sub", {a, b}, out, fwd, bwd);
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = detail::make_output(a.shape(), {&a, &b});
  auto fwd = [a, b, out]() mutable {
    auto o = out.values();
    auto x = a.values();
    auto y = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  };
  auto bwd = [a, b, out]() mutable {
    auto go = out.grad();
    auto x = a.values();
    auto y = b.values();
    accumulate_into(a, [&](std::span<double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * y[i];
    });
    accumulate_into(b, [&](std::span<double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * x[i];
    });
  };
  detail::run_and_record("mul", {a, b}, out, fwd, bwd);
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = detail::make_output(a.shape(), {&a});
  auto fwd = [a, out, s]() mutable {
    auto o = out.values();
    auto x = a.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = s * x[i];
  };
  auto bwd = [a, out, s]() mutable {
    auto go = out.grad();
    auto g = a.grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * go[i];
  };
  detail::run_and_record("scale", {a}, out, fwd, bwd);
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_2d(x, "add_bias");
  const std::size_t m = x.size(0), n = x.size(1);
  if (bias.numel() != n) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not fit rows of " + shape_str(x.shape()));
  }
  Tensor out = detail::make_output(x.shape(), {&x, &bias});
  auto fwd = [x, bias, out, m, n]() mutable {
    auto o = out.values();
    auto xv = x.values();
    auto bv = bias.values();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) o[i * n + j] = xv[i * n + j] + bv[j];
  };
  auto bwd = [x, bias, out, m, n]() mutable {
    auto go = out.grad();
    accumulate_into(x, [&](std::span<double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
    });
    accumulate_into(bias, [&](std::span<double> g) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += go[i * n + j];
    });
  };
  detail::run_and_record("add_bias", {x, bias}, out, fwd, bwd);
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_2d(x, "linear");
  require_2d(w, "linear");
  const std::size_t m = x.size(0), k = x.size(1), n = w.size(1);
  if (w.size(0) != k) {
    throw DimensionError("linear: inner dimensions disagree, " + shape_str(x.shape()) + " * " + shape_str(w.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != n) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match output width " +
                         std::to_string(n));
  }
  Tensor out = detail::make_output({m, n}, {&x, &w, has_bias ? &bias : nullptr});
  auto fwd = [x, w, bias, out, m, n, k, has_bias]() mutable {
    double* o = out.values().data();
    if (has_bias) {
      auto bv = bias.values();
      for (std::size_t i = 0; i < m; ++i) std::copy(bv.begin(), bv.end(), o + i * n);
    }
    kernels::gemm_nn(m, n, k, x.values().data(), k, w.values().data(), n, o, n, has_bias);
  };
  auto bwd = [x, w, bias, out, m, n, k, has_bias]() mutable {
    const double* go = out.grad().data();
    if (x.requires_grad()) {
      std::vector<double> scratch;
      kernels::gemm_nt(m, k, n, go, n, w.values().data(), n, x.grad().data(), k, true, scratch);
    }
    if (w.requires_grad()) kernels::gemm_tn_acc(m, n, k, x.values().data(), k, go, n, w.grad().data(), n);
    if (has_bias && bias.requires_grad()) {
      auto gb = bias.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += go[i * n + j];
    }
  };
  std::vector<Tensor> inputs{x, w};
  if (has_bias) inputs.push_back(bias);
  detail::run_and_record("linear", std::move(inputs), out, fwd, bwd);
  return out;
}

Tensor sum(const Tensor& a) {
  Tensor out = detail::make_output(Shape{}, {&a});
  auto fwd = [a, out]() mutable {
    double s = 0.0;
    for (double v : a.values()) s += v;
    out.values()[0] = s;
  };
  auto bwd = [a, out]() mutable {
    const double go = out.grad()[0];
    for (double& g : a.grad()) g += go;
  };
  detail::run_and_record("sum", {a}, out, fwd, bwd);
  return out;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor softmax(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  const std::size_t n = s[axis];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t outer = x.numel() / (n * inner);
  Tensor out = detail::make_output(s, {&x});
  auto fwd = [x, out, n, inner, outer]() mutable {
    auto xv = x.values();
    auto o = out.values();
    for (std::size_t a = 0; a < outer; ++a) {
      for (std::size_t b = 0; b < inner; ++b) {
        const std::size_t base = a * n * inner + b;
        double mx = xv[base];
        for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, xv[base + i * inner]);
        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double e = std::exp(xv[base + i * inner] - mx);
          o[base + i * inner] = e;
          z += e;
        }
        for (std::size_t i = 0; i < n; ++i) o[base + i * inner] /= z;
      }
    }
  };
  auto bwd = [x, out, n, inner, outer]() mutable {
    auto y = out.values();
    auto go = out.grad();
    auto gx = x.grad();
    for (std::size_t a = 0; a < outer; ++a) {
      for (std::size_t b = 0; b < inner; ++b) {
        const std::size_t base = a * n * inner + b;
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += go[base + i * inner] * y[base + i * inner];
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t idx = base + i * inner;
          gx[idx] += y[idx] * (go[idx] - dot);
        }
      }
    }
  };
  detail::run_and_record("softmax", {x}, out, fwd, bwd);
  return out;
}

Tensor softmax(const Tensor& x) { return softmax(x, x.dim() - 1); }

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.dim() == 0) throw DimensionError("layer_norm on a scalar");
  const std::size_t d = x.shape().back();
  if (d < 2) throw DimensionError("layer_norm needs a normalized width >= 2, got " + shape_str(x.shape()));
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " + shape_str(bias.shape()) +
                         " do not match width " + std::to_string(d));
  }
  const std::size_t rows = x.numel() / d;
  Tensor out = detail::make_output(x.shape(), {&x, &gain, &bias});
  // Normalized activations and inverse std are kept for backward.
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  auto fwd = [x, gain, bias, out, d, rows, eps, xhat, inv_std]() mutable {
    auto xv = x.values();
    auto g = gain.values();
    auto b = bias.values();
    auto o = out.values();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* xr = xv.data() + r * d;
      double mu = 0.0;
      for (std::size_t j = 0; j < d; ++j) mu += xr[j];
      mu /= static_cast<double>(d);
      double var = 0.0;
      for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
      var /= static_cast<double>(d);
      const double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[r] = is;
      for (std::size_t j = 0; j < d; ++j) {
        const double h = (xr[j] - mu) * is;
        (*xhat)[r * d + j] = h;
        o[r * d + j] = h * g[j] + b[j];
      }
    }
  };
  auto bwd = [x, gain, bias, out, d, rows, xhat, inv_std]() mutable {
    auto go = out.grad();
    auto g = gain.values();
    const double inv_d = 1.0 / static_cast<double>(d);
    if (gain.requires_grad()) {
      auto gg = gain.grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) gg[j] += go[r * d + j] * (*xhat)[r * d + j];
    }
    if (bias.requires_grad()) {
      auto gb = bias.grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) gb[j] += go[r * d + j];
    }
    if (x.requires_grad()) {
      auto gx = x.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double dh = go[r * d + j] * g[j];
          m1 += dh;
          m2 += dh * (*xhat)[r * d + j];
        }
        m1 *= inv_d;
        m2 *= inv_d;
        const double is = (*inv_std)[r];
        for (std::size_t j = 0; j < d; ++j) {
          const double dh = go[r * d + j] * g[j];
          gx[r * d + j] += is * (dh - m1 - (*xhat)[r * d + j] * m2);
        }
      }
    }
  };
  detail::run_and_record("layer_norm", {x, gain, bias}, out, fwd, bwd);
  return out;
}

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

Tensor gelu(const Tensor& x) {
  Tensor out = detail::make_output(x.shape(), {&x});
  auto fwd = [x, out]() mutable {
    auto xv = x.values();
    auto o = out.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = gelu_scalar(xv[i]);
  };
  auto bwd = [x, out]() mutable {
    auto xv = x.values();
    auto go = out.grad();
    auto gx = x.grad();
    constexpr double kInvSqrt2Pi = 0.3989422804014327;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      gx[i] += go[i] * (cdf + v * pdf);
    }
  };
  detail::run_and_record("gelu", {x}, out, fwd, bwd);
  return out;
}

Tensor select_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  require_2d(x, "select_rows");
  const std::size_t m = x.size(0), n = x.size(1);
  for (std::size_t r : rows) {
    if (r >= m) throw DimensionError("select_rows: row " + std::to_string(r) + " out of range for " + shape_str(x.shape()));
  }
  if (rows.empty()) throw DimensionError("select_rows: empty row list");
  Tensor out = detail::make_output({rows.size(), n}, {&x});
  auto fwd = [x, out, rows, n]() mutable {
    auto xv = x.values();
    auto o = out.values();
    for (std::size_t i = 0; i < rows.size(); ++i)
      std::copy_n(xv.data() + rows[i] * n, n, o.data() + i * n);
  };
  auto bwd = [x, out, rows, n]() mutable {
    auto go = out.grad();
    auto gx = x.grad();
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < n; ++j) gx[rows[i] * n + j] += go[i * n + j];
  };
  detail::run_and_record("select_rows", {x}, out, fwd, bwd);
  return out;
}

Tensor prepend_token(const Tensor& x, const Tensor& token, std::size_t groups) {
  require_2d(x, "prepend_token");
  const std::size_t d = x.size(1);
  if (groups == 0 || x.size(0) % groups != 0) {
    throw DimensionError("prepend_token: " + std::to_string(x.size(0)) + " rows do not split into " +
                         std::to_string(groups) + " groups");
  }
  if (token.numel() != d) throw DimensionError("prepend_token: token " + shape_str(token.shape()) + " vs width " + std::to_string(d));
  const std::size_t n = x.size(0) / groups;
  Tensor out = detail::make_output({groups * (n + 1), d}, {&x, &token});
  auto fwd = [x, token, out, groups, n, d]() mutable {
    auto xv = x.values();
    auto tv = token.values();
    auto o = out.values();
    for (std::size_t g = 0; g < groups; ++g) {
      double* dst = o.data() + g * (n + 1) * d;
      std::copy(tv.begin(), tv.end(), dst);
      std::copy_n(xv.data() + g * n * d, n * d, dst + d);
    }
  };
  auto bwd = [x, token, out, groups, n, d]() mutable {
    auto go = out.grad();
    accumulate_into(token, [&](std::span<double> gt) {
      for (std::size_t g = 0; g < groups; ++g)
        for (std::size_t j = 0; j < d; ++j) gt[j] += go[g * (n + 1) * d + j];
    });
    accumulate_into(x, [&](std::span<double> gx) {
      for (std::size_t g = 0; g < groups; ++g)
        for (std::size_t i = 0; i < n * d; ++i) gx[g * n * d + i] += go[g * (n + 1) * d + d + i];
    });
  };
  detail::run_and_record("prepend_token", {x, token}, out, fwd, bwd);
  return out;
}

Tensor add_tiled(const Tensor& x, const Tensor& pattern) {
  require_2d(x, "add_tiled");
  require_2d(pattern, "add_tiled");
  const std::size_t t = pattern.size(0), d = pattern.size(1);
  if (x.size(1) != d || x.size(0) % t != 0) {
    throw DimensionError("add_tiled: " + shape_str(pattern.shape()) + " does not tile " + shape_str(x.shape()));
  }
  const std::size_t groups = x.size(0) / t;
  Tensor out = detail::make_output(x.shape(), {&x, &pattern});
  auto fwd = [x, pattern, out, groups, t, d]() mutable {
    auto xv = x.values();
    auto pv = pattern.values();
    auto o = out.values();
    for (std::size_t g = 0; g < groups; ++g)
      for (std::size_t i = 0; i < t * d; ++i) o[g * t * d + i] = xv[g * t * d + i] + pv[i];
  };
  auto bwd = [x, pattern, out, groups, t, d]() mutable {
    auto go = out.grad();
    accumulate_into(x, [&](std::span<double> gx) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
    });
    accumulate_into(pattern, [&](std::span<double> gp) {
      for (std::size_t g = 0; g < groups; ++g)
        for (std::size_t i = 0; i < t * d; ++i) gp[i] += go[g * t * d + i];
    });
  };
  detail::run_and_record("add_tiled", {x, pattern}, out, fwd, bwd);
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
  }
  Tensor out = detail::make_output(std::move(shape), {&x});
  auto fwd = [x, out]() mutable {
    auto xv = x.values();
    std::copy(xv.begin(), xv.end(), out.values().begin());
  };
  auto bwd = [x, out]() mutable {
    auto go = out.grad();
    auto gx = x.grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
  };
  detail::run_and_record("reshape", {x}, out, fwd, bwd);
  return out;
}

AttentionResult multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t groups,
                                     std::size_t heads) {
  require_2d(q, "attention");
  require_same_shape(q, k, "attention");
  require_same_shape(q, v, "attention");
  const std::size_t rows = q.size(0), d = q.size(1);
  if (groups == 0 || rows % groups != 0) {
    throw DimensionError("attention: " + std::to_string(rows) + " rows do not split into " + std::to_string(groups) +
                         " sequences");
  }
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("attention: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t t = rows / groups, dk = d / heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

  Tensor out = detail::make_output({rows, d}, {&q, &k, &v});
  Tensor probs(Shape{groups, heads, t, t});

  auto fwd = [q, k, v, out, probs, groups, heads, t, d, dk, inv_sqrt_dk]() mutable {
    auto qv = q.values();
    auto kv = k.values();
    auto vv = v.values();
    auto o = out.values();
    auto p = probs.values();
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t h = 0; h < heads; ++h) {
        double* pg = p.data() + (g * heads + h) * t * t;
        const std::size_t col = h * dk;
        for (std::size_t i = 0; i < t; ++i) {
          const double* qi = qv.data() + (g * t + i) * d + col;
          double mx = -INFINITY;
          for (std::size_t j = 0; j < t; ++j) {
            const double* kj = kv.data() + (g * t + j) * d + col;
            double s = 0.0;
            for (std::size_t c = 0; c < dk; ++c) s += qi[c] * kj[c];
            s *= inv_sqrt_dk;
            pg[i * t + j] = s;
            mx = std::max(mx, s);
          }
          double z = 0.0;
          for (std::size_t j = 0; j < t; ++j) {
            const double e = std::exp(pg[i * t + j] - mx);
            pg[i * t + j] = e;
            z += e;
          }
          for (std::size_t j = 0; j < t; ++j) pg[i * t + j] /= z;
          double* oi = o.data() + (g * t + i) * d + col;
          for (std::size_t c = 0; c < dk; ++c) oi[c] = 0.0;
          for (std::size_t j = 0; j < t; ++j) {
            const double pij = pg[i * t + j];
            const double* vj = vv.data() + (g * t + j) * d + col;
            for (std::size_t c = 0; c < dk; ++c) oi[c] += pij * vj[c];
          }
        }
      }
    }
  };

  auto bwd = [q, k, v, out, probs, groups, heads, t, d, dk, inv_sqrt_dk]() mutable {
    auto qv = q.values();
    auto kv = k.values();
    auto vv = v.values();
    auto go = out.grad();
    auto p = probs.values();
    std::span<double> gq = q.requires_grad() ? q.grad() : std::span<double>{};
    std::span<double> gk = k.requires_grad() ? k.grad() : std::span<double>{};
    std::span<double> gv = v.requires_grad() ? v.grad() : std::span<double>{};
    std::vector<double> ds(t * t);
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t h = 0; h < heads; ++h) {
        const double* pg = p.data() + (g * heads + h) * t * t;
        const std::size_t col = h * dk;
        // dP = dO V^T, then dS = P * (dP - rowsum(dP * P)).
        for (std::size_t i = 0; i < t; ++i) {
          const double* goi = go.data() + (g * t + i) * d + col;
          double dot = 0.0;
          for (std::size_t j = 0; j < t; ++j) {
            const double* vj = vv.data() + (g * t + j) * d + col;
            double s = 0.0;
            for (std::size_t c = 0; c < dk; ++c) s += goi[c] * vj[c];
            ds[i * t + j] = s;
            dot += s * pg[i * t + j];
          }
          for (std::size_t j = 0; j < t; ++j) ds[i * t + j] = pg[i * t + j] * (ds[i * t + j] - dot) * inv_sqrt_dk;
        }
        if (!gv.empty()) {
          for (std::size_t i = 0; i < t; ++i) {
            const double* goi = go.data() + (g * t + i) * d + col;
            for (std::size_t j = 0; j < t; ++j) {
              const double pij = pg[i * t + j];
              double* gvj = gv.data() + (g * t + j) * d + col;
              for (std::size_t c = 0; c < dk; ++c) gvj[c] += pij * goi[c];
            }
          }
        }
        for (std::size_t i = 0; i < t; ++i) {
          const double* qi = qv.data() + (g * t + i) * d + col;
          for (std::size_t j = 0; j < t; ++j) {
            const double s = ds[i * t + j];
            const double* kj = kv.data() + (g * t + j) * d + col;
            if (!gq.empty()) {
              double* gqi = gq.data() + (g * t + i) * d + col;
              for (std::size_t c = 0; c < dk; ++c) gqi[c] += s * kj[c];
            }
            if (!gk.empty()) {
              double* gkj = gk.data() + (g * t + j) * d + col;
              for (std::size_t c = 0; c < dk; ++c) gkj[c] += s * qi[c];
            }
          }
        }
      }
    }
  };

  detail::run_and_record("attention", {q, k, v}, out, fwd, bwd);
  return {out, probs};
}

}  // namespace zsl
