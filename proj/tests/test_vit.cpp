#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "test_util.hpp"
#include "zsl/errors.hpp"
#include "zsl/ops.hpp"
#include "zsl/vit.hpp"

using namespace zsl;

namespace {

ViTConfig tiny_config() {
  ViTConfig c;
  c.height = 16;
  c.width = 16;
  c.channels = 3;
  c.patch = 8;
  c.dim = 8;
  c.depth = 2;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.num_attributes = 5;
  return c;
}

oracle::BlockWeights to_oracle(const EncoderLayer& l, const ViTConfig& c) {
  oracle::BlockWeights w;
  w.dim = c.dim;
  w.heads = c.heads;
  w.hidden = c.hidden_dim();
  auto v = [](const Tensor& t) { return testutil::to_vec(t); };
  w.norm1_gain = v(l.norm1_gain);
  w.norm1_bias = v(l.norm1_bias);
  w.wq = v(l.query_w);
  w.bq = v(l.query_b);
  w.wk = v(l.key_w);
  w.bk = v(l.key_b);
  w.wv = v(l.value_w);
  w.bv = v(l.value_b);
  w.wo = v(l.out_w);
  w.bo = v(l.out_b);
  w.norm2_gain = v(l.norm2_gain);
  w.norm2_bias = v(l.norm2_bias);
  w.w1 = v(l.mlp_in_w);
  w.b1 = v(l.mlp_in_b);
  w.w2 = v(l.mlp_out_w);
  w.b2 = v(l.mlp_out_b);
  return w;
}

// Makes every parameter noticeably nonzero so no term hides behind a zero.
void randomize(ViTModel& m, Rng& rng, double scale) {
  for (auto& p : m.parameters()) {
    for (double& x : p.tensor.values()) x = scale * rng.normal();
  }
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST_SUITE("vit-encoder") {
  TEST_CASE("desk config geometry and parameter count") {
    const auto c = desk_config(16);
    CHECK(c.num_patches() == 16);
    CHECK(c.seq_len() == 17);
    CHECK(c.patch_dim() == 192);
    // Hand count: embeddings 192*64 + 64 + 17*64; per layer 4*(64*64+64) +
    // (64*256+256) + (256*64+64) + 4*64; final norm 128; heads 64*16+16+64*4+4.
    CHECK(parameter_count(c) == 214804u);
    Rng rng(1);
    auto m = ViTModel::initialize(c, rng);
    std::size_t total = 0;
    for (const auto& p : m.parameters()) total += p.tensor.numel();
    CHECK(total == parameter_count(c));
  }

  TEST_CASE("paper-scale shape arithmetic") {
    const auto c = paper_scale_config(85);
    CHECK(c.height == 224);
    CHECK(c.patch == 16);
    CHECK(c.dim == 1024);
    CHECK(c.depth == 24);
    CHECK(c.heads == 16);
    CHECK(c.num_patches() == 196);
    CHECK(c.seq_len() == 197);
    CHECK(c.head_dim() == 64);
    CHECK_NOTHROW(c.validate());
  }

  TEST_CASE("config validation") {
    auto c = tiny_config();
    c.patch = 5;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = tiny_config();
    c.heads = 3;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = tiny_config();
    c.depth = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
  }

  TEST_CASE("parameters have unique names and distinct storage") {
    Rng rng(2);
    auto m = ViTModel::initialize(tiny_config(), rng);
    std::vector<std::string> names;
    for (const auto& p : m.parameters()) names.push_back(p.name);
    auto sorted = names;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    // Handles alias the named fields.
    m.parameter(names.front()).values()[0] = 123.0;
    CHECK(m.patch_projection.values()[0] == 123.0);
    CHECK_THROWS(m.parameter("no.such.parameter"));
  }

  TEST_CASE("initialization statistics") {
    Rng rng(3);
    auto m = ViTModel::initialize(desk_config(16), rng);
    for (double g : m.layers[0].norm1_gain.values()) CHECK(g == 1.0);
    for (double b : m.layers[0].query_b.values()) CHECK(b == 0.0);
    double sq = 0.0, mx = 0.0;
    const auto w = m.layers[1].mlp_in_w.values();
    for (double x : w) {
      sq += x * x;
      mx = std::max(mx, std::abs(x));
    }
    CHECK(mx <= 0.04);
    const double sd = std::sqrt(sq / static_cast<double>(w.size()));
    // Truncation at 2 std shrinks the spread to about 0.88 std.
    CHECK(sd == doctest::Approx(0.02 * 0.8796).epsilon(0.03));
  }

  TEST_CASE("clone is deep and hash tracks contents") {
    Rng rng(4);
    auto m = ViTModel::initialize(tiny_config(), rng);
    auto c = m.clone();
    CHECK(c.parameter_hash() == m.parameter_hash());
    c.class_token.values()[0] += 1.0;
    CHECK(c.parameter_hash() != m.parameter_hash());
    CHECK(m.class_token.values()[0] != c.class_token.values()[0]);
  }

  TEST_CASE("patch extraction order") {
    ViTConfig c = tiny_config();
    c.height = c.width = 4;
    c.patch = 2;
    c.channels = 1;
    Tensor img({4, 4, 1});
    for (std::size_t i = 0; i < 16; ++i) img.values()[i] = static_cast<double>(i);
    std::vector<Tensor> imgs{img};
    auto p = extract_patches(imgs, c);
    REQUIRE(p.shape() == Shape{4, 4});
    CHECK(testutil::to_vec(p) == std::vector<double>{0, 1, 4, 5, 2, 3, 6, 7, 8, 9, 12, 13, 10, 11, 14, 15});
  }

  TEST_CASE("zero image embeds to class token and position embeddings") {
    const auto c = tiny_config();
    Rng rng(5);
    auto m = ViTModel::initialize(c, rng);
    Tensor img({16, 16, 3});
    auto z = patch_embed(m, img);
    REQUIRE(z.shape() == Shape{c.seq_len(), c.dim});
    const auto pos = testutil::to_vec(m.position_embeddings);
    const auto cls = testutil::to_vec(m.class_token);
    for (std::size_t t = 0; t < c.seq_len(); ++t)
      for (std::size_t d = 0; d < c.dim; ++d) {
        const double want = pos[t * c.dim + d] + (t == 0 ? cls[d] : 0.0);
        CHECK(z.values()[t * c.dim + d] == doctest::Approx(want).epsilon(1e-15));
      }
  }

  TEST_CASE("zero weights pass tokens through unchanged") {
    const auto c = tiny_config();
    auto m = ViTModel::zeros(c);
    Rng rng(6);
    Tensor z = testutil::random_tensor({c.seq_len(), c.dim}, rng);
    auto out = encoder_block(z, m.layers[0], c, 1);
    CHECK(max_abs_diff(testutil::to_vec(out.output), testutil::to_vec(z)) == 0.0);
    // Zero queries and keys give uniform attention.
    for (double p : out.probabilities.values()) CHECK(p == doctest::Approx(1.0 / static_cast<double>(c.seq_len())));
  }

  TEST_CASE("encoder block matches the straight-line oracle") {
    ViTConfig c = tiny_config();
    c.height = c.width = 24;  // N = 9, T = 10
    Rng rng(7);
    auto m = ViTModel::initialize(c, rng);
    randomize(m, rng, 0.3);
    Tensor z = testutil::random_tensor({c.seq_len(), c.dim}, rng);
    auto got = encoder_block(z, m.layers[0], c, 1);
    auto want = oracle::encoder_block(testutil::to_vec(z), c.seq_len(), to_oracle(m.layers[0], c));
    CHECK(max_abs_diff(testutil::to_vec(got.output), want.output) < 1e-12);
    const auto probs = testutil::to_vec(got.probabilities);
    const std::size_t tt = c.seq_len() * c.seq_len();
    for (std::size_t h = 0; h < c.heads; ++h) {
      std::vector<double> head(probs.begin() + static_cast<std::ptrdiff_t>(h * tt),
                               probs.begin() + static_cast<std::ptrdiff_t>((h + 1) * tt));
      CHECK(max_abs_diff(head, want.attention[h]) < 1e-13);
    }
  }

  TEST_CASE("batched block equals per-sequence blocks") {
    const auto c = tiny_config();
    Rng rng(8);
    auto m = ViTModel::initialize(c, rng);
    randomize(m, rng, 0.3);
    const std::size_t t = c.seq_len(), d = c.dim;
    Tensor z = testutil::random_tensor({3 * t, d}, rng);
    auto all = encoder_block(z, m.layers[0], c, 3);
    for (std::size_t b = 0; b < 3; ++b) {
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < t; ++i) rows.push_back(b * t + i);
      auto one = encoder_block(select_rows(z, rows), m.layers[0], c, 1);
      auto part = testutil::to_vec(select_rows(all.output, rows));
      CHECK(max_abs_diff(part, testutil::to_vec(one.output)) < 1e-13);
    }
  }

  TEST_CASE("encode and forward shapes") {
    const auto c = tiny_config();
    Rng rng(9);
    auto m = ViTModel::initialize(c, rng);
    std::vector<Tensor> imgs;
    for (int i = 0; i < 3; ++i) imgs.push_back(testutil::random_tensor({16, 16, 3}, rng, 0.2));
    auto enc = encode(m, imgs);
    CHECK(enc.representation.shape() == Shape{3, c.dim});
    REQUIRE(enc.probabilities.size() == c.depth);
    CHECK(enc.probabilities[0].shape() == Shape{3, c.heads, c.seq_len(), c.seq_len()});
    CHECK(attribute_head(m, enc.representation).shape() == Shape{3, c.num_attributes});
    CHECK(rotation_head(m, enc.representation).shape() == Shape{3, kNumRotations});

    auto f = forward(m, imgs[1]);
    CHECK(f.attributes.shape() == Shape{c.num_attributes});
    CHECK(f.rotation_logits.shape() == Shape{kNumRotations});
    CHECK(f.trace.layers == c.depth);
    CHECK(f.trace.heads == c.heads);
    CHECK(f.trace.tokens == c.seq_len());
    CHECK(f.trace.grid_h == 2);
    CHECK(f.trace.grid_w == 2);
    CHECK(f.trace.probs.size() == c.depth * c.heads * c.seq_len() * c.seq_len());
    // The single-image path agrees with row 1 of the batch.
    auto t1 = trace_for(enc, c, 1);
    CHECK(max_abs_diff(t1.probs, f.trace.probs) < 1e-13);
    std::vector<double> rep(enc.representation.values().begin() + static_cast<std::ptrdiff_t>(c.dim),
                            enc.representation.values().begin() + static_cast<std::ptrdiff_t>(2 * c.dim));
    CHECK(max_abs_diff(rep, testutil::to_vec(f.representation)) < 1e-13);
  }

  TEST_CASE("attention rows are probability distributions") {
    const auto c = desk_config(16);
    Rng rng(10);
    auto m = ViTModel::initialize(c, rng);
    randomize(m, rng, 0.2);
    auto f = forward(m, testutil::random_tensor({32, 32, 3}, rng, 0.5));
    for (std::size_t l = 0; l < c.depth; ++l)
      for (std::size_t h = 0; h < c.heads; ++h)
        for (std::size_t i = 0; i < c.seq_len(); ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < c.seq_len(); ++j) {
            CHECK(f.trace.at(l, h, i, j) >= 0.0);
            s += f.trace.at(l, h, i, j);
          }
          CHECK(std::abs(s - 1.0) < 1e-12);
        }
  }

  TEST_CASE("without position embeddings the class token ignores patch order") {
    ViTConfig c = tiny_config();
    c.height = c.width = 24;
    Rng rng(11);
    auto m = ViTModel::initialize(c, rng);
    randomize(m, rng, 0.3);
    for (double& x : m.position_embeddings.values()) x = 0.0;
    Tensor img = testutil::random_tensor({24, 24, 3}, rng, 0.5);
    // Move whole 8x8 patches around the 3x3 grid with a fixed permutation.
    const std::vector<std::size_t> perm{4, 7, 0, 2, 8, 1, 6, 3, 5};
    Tensor shuffled({24, 24, 3});
    for (std::size_t p = 0; p < 9; ++p) {
      const std::size_t src = perm[p];
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x)
          for (std::size_t ch = 0; ch < 3; ++ch) {
            const std::size_t dy = (p / 3) * 8 + y, dx = (p % 3) * 8 + x;
            const std::size_t sy = (src / 3) * 8 + y, sx = (src % 3) * 8 + x;
            shuffled.values()[(dy * 24 + dx) * 3 + ch] = img.values()[(sy * 24 + sx) * 3 + ch];
          }
    }
    auto a = forward(m, img), b = forward(m, shuffled);
    CHECK(max_abs_diff(testutil::to_vec(a.representation), testutil::to_vec(b.representation)) < 1e-9);
    // With position embeddings restored the order matters again.
    for (double& x : m.position_embeddings.values()) x = rng.normal();
    auto a2 = forward(m, img), b2 = forward(m, shuffled);
    CHECK(max_abs_diff(testutil::to_vec(a2.representation), testutil::to_vec(b2.representation)) > 1e-6);
  }

  TEST_CASE("wrong image geometry is rejected") {
    Rng rng(12);
    auto m = ViTModel::initialize(tiny_config(), rng);
    CHECK_THROWS_AS(forward(m, Tensor({8, 8, 3})), DimensionError);
  }

  TEST_CASE("end-to-end gradient check on a toy model") {
    ViTConfig c = tiny_config();
    c.dim = 16;
    Rng rng(13);
    auto m = ViTModel::initialize(c, rng);
    randomize(m, rng, 0.3);
    std::vector<Tensor> imgs{testutil::random_tensor({16, 16, 3}, rng, 0.5)};
    Tensor target = testutil::random_tensor({1, c.num_attributes}, rng);
    auto build = [&] {
      auto enc = encode(m, imgs);
      auto d = sub(attribute_head(m, enc.representation), target);
      auto r = rotation_head(m, enc.representation);
      return add(mean(mul(d, d)), mean(mul(r, r)));
    };
    // A representative subset keeps the test fast; the acceptance run checks all.
    std::vector<Tensor> inputs{m.layers[0].query_w, m.layers[1].mlp_out_w, m.class_token, m.attribute_w};
    auto res = testutil::check_gradients(build, inputs);
    INFO("worst element " << res.worst);
    CHECK(res.max_rel_error < 1e-4);
  }
}
