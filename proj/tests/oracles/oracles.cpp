#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace oracle {

Vec matmul(const Vec& a, const Vec& b, std::size_t m, std::size_t k, std::size_t n) {
  Vec c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  return c;
}

Vec softmax(const Vec& x) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  Vec e(x.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp(x[i] - mx);
    s += e[i];
  }
  for (double& v : e) v /= s;
  return e;
}

Vec layer_norm(const Vec& x, const Vec& gain, const Vec& bias, double eps) {
  const double n = static_cast<double>(x.size());
  double mu = 0.0;
  for (double v : x) mu += v;
  mu /= n;
  double var = 0.0;
  for (double v : x) var += (v - mu) * (v - mu);
  var /= n;
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mu) / std::sqrt(var + eps) * gain[i] + bias[i];
  return y;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

namespace {

// y[T x out] = x[T x in] W[in x out] + b
Vec affine(const Vec& x, std::size_t t, std::size_t in, const Vec& w, const Vec& b, std::size_t out) {
  Vec y = matmul(x, w, t, in, out);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < out; ++j) y[i * out + j] += b[j];
  return y;
}

Vec row(const Vec& x, std::size_t i, std::size_t width) {
  return Vec(x.begin() + static_cast<std::ptrdiff_t>(i * width), x.begin() + static_cast<std::ptrdiff_t>((i + 1) * width));
}

}  // namespace

BlockResult encoder_block(const Vec& z, std::size_t t, const BlockWeights& w) {
  const std::size_t d = w.dim, dk = d / w.heads;
  Vec n1(t * d);
  for (std::size_t i = 0; i < t; ++i) {
    Vec r = layer_norm(row(z, i, d), w.norm1_gain, w.norm1_bias, 1e-5);
    std::copy(r.begin(), r.end(), n1.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  const Vec q = affine(n1, t, d, w.wq, w.bq, d);
  const Vec k = affine(n1, t, d, w.wk, w.bk, d);
  const Vec v = affine(n1, t, d, w.wv, w.bv, d);

  BlockResult res;
  Vec concat(t * d, 0.0);
  for (std::size_t h = 0; h < w.heads; ++h) {
    Vec att(t * t);
    for (std::size_t i = 0; i < t; ++i) {
      Vec logits(t);
      for (std::size_t j = 0; j < t; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dk; ++c) s += q[i * d + h * dk + c] * k[j * d + h * dk + c];
        logits[j] = s / std::sqrt(static_cast<double>(dk));
      }
      Vec p = softmax(logits);
      std::copy(p.begin(), p.end(), att.begin() + static_cast<std::ptrdiff_t>(i * t));
      for (std::size_t c = 0; c < dk; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < t; ++j) s += p[j] * v[j * d + h * dk + c];
        concat[i * d + h * dk + c] = s;
      }
    }
    res.attention.push_back(att);
  }
  const Vec proj = affine(concat, t, d, w.wo, w.bo, d);
  Vec mid(t * d);
  for (std::size_t i = 0; i < t * d; ++i) mid[i] = proj[i] + z[i];

  Vec n2(t * d);
  for (std::size_t i = 0; i < t; ++i) {
    Vec r = layer_norm(row(mid, i, d), w.norm2_gain, w.norm2_bias, 1e-5);
    std::copy(r.begin(), r.end(), n2.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  Vec hid = affine(n2, t, d, w.w1, w.b1, w.hidden);
  for (double& x : hid) x = gelu(x);
  const Vec mlp = affine(hid, t, w.hidden, w.w2, w.b2, d);
  res.output.resize(t * d);
  for (std::size_t i = 0; i < t * d; ++i) res.output[i] = mlp[i] + mid[i];
  return res;
}

Vec rollout_class_row(const Vec& probs, std::size_t layers, std::size_t heads, std::size_t t) {
  // Identity start, then left-multiply each processed layer in order.
  Vec r(t * t, 0.0);
  for (std::size_t i = 0; i < t; ++i) r[i * t + i] = 1.0;
  for (std::size_t l = 0; l < layers; ++l) {
    Vec a(t * t, 0.0);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < t; ++j) {
        double s = 0.0;
        for (std::size_t h = 0; h < heads; ++h) s += probs[((l * heads + h) * t + i) * t + j];
        a[i * t + j] = s / static_cast<double>(heads) + (i == j ? 1.0 : 0.0);
      }
      double rs = 0.0;
      for (std::size_t j = 0; j < t; ++j) rs += a[i * t + j];
      for (std::size_t j = 0; j < t; ++j) a[i * t + j] /= rs;
    }
    r = matmul(a, r, t, t, t);
  }
  return Vec(r.begin() + 1, r.begin() + static_cast<std::ptrdiff_t>(t));
}

CountingReport gzsl_counting(const std::vector<std::vector<double>>& scores, const std::vector<int>& class_ids,
                             const std::vector<bool>& class_seen, const std::vector<int>& true_class, double gamma) {
  std::map<int, int> total, correct;
  for (std::size_t r = 0; r < scores.size(); ++r) {
    std::size_t t = 0;
    while (class_ids[t] != true_class[r]) ++t;
    const double mine = scores[r][t] - (class_seen[t] ? gamma : 0.0);
    int beaten_by = 0;
    for (std::size_t c = 0; c < class_ids.size(); ++c) {
      if (c == t) continue;
      const double other = scores[r][c] - (class_seen[c] ? gamma : 0.0);
      if (other > mine || (other == mine && class_ids[c] < class_ids[t])) ++beaten_by;
    }
    total[true_class[r]] += 1;
    correct[true_class[r]] += beaten_by == 0 ? 1 : 0;
  }
  CountingReport rep;
  double s = 0, u = 0;
  int ns = 0, nu = 0;
  for (std::size_t c = 0; c < class_ids.size(); ++c) {
    const int id = class_ids[c];
    if (!total.count(id)) continue;
    const double acc = 100.0 * correct[id] / total[id];
    rep.per_class[id] = acc;
    if (class_seen[c]) {
      s += acc;
      ++ns;
    } else {
      u += acc;
      ++nu;
    }
  }
  rep.seen = ns ? s / ns : 0.0;
  rep.unseen = nu ? u / nu : 0.0;
  rep.harmonic = rep.seen + rep.unseen == 0 ? 0.0 : 2 * rep.seen * rep.unseen / (rep.seen + rep.unseen);
  return rep;
}

double central_difference(const std::function<double()>& f, double& xi, double h) {
  const double saved = xi;
  xi = saved + h;
  const double up = f();
  xi = saved - h;
  const double down = f();
  xi = saved;
  return (up - down) / (2.0 * h);
}

double central_difference4(const std::function<double()>& f, double& xi, double h) {
  const double saved = xi;
  double v[4];
  const double offsets[4] = {-2.0, -1.0, 1.0, 2.0};
  for (int i = 0; i < 4; ++i) {
    xi = saved + offsets[i] * h;
    v[i] = f();
  }
  xi = saved;
  return (v[0] - 8.0 * v[1] + 8.0 * v[2] - v[3]) / (12.0 * h);
}

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

}  // namespace oracle
