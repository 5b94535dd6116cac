#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "test_util.hpp"
#include "zsl/dataset.hpp"
#include "zsl/errors.hpp"
#include "zsl/image.hpp"
#include "zsl/synthetic.hpp"

using namespace zsl;

namespace {

// Rotation reference by the coordinate rule, independent of the library.
std::vector<double> rotate_ref(const std::vector<double>& in, std::size_t n, std::size_t c, int a) {
  std::vector<double> cur = in;
  for (int step = 0; step < a; ++step) {
    std::vector<double> out(cur.size());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < c; ++k) out[(i * n + j) * c + k] = cur[(j * n + (n - 1 - i)) * c + k];
    cur = out;
  }
  return cur;
}

DatasetBundle small_bundle(std::uint64_t seed = 3, std::size_t per_class = 10) {
  SyntheticSpec spec;
  spec.num_classes = 6;
  spec.num_seen = 4;
  spec.num_attributes = 16;
  spec.image_size = 16;
  spec.samples_per_class = per_class;
  Rng rng(seed);
  return make_synthetic(spec, rng);
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("rotation of a 2x2 single-channel image") {
    Tensor img({2, 2, 1}, {1, 2, 3, 4});
    CHECK(testutil::to_vec(rotate_pixels(img, 0)) == std::vector<double>{1, 2, 3, 4});
    CHECK(testutil::to_vec(rotate_pixels(img, 1)) == std::vector<double>{2, 4, 1, 3});
    CHECK(testutil::to_vec(rotate_pixels(img, 2)) == std::vector<double>{4, 3, 2, 1});
    CHECK(testutil::to_vec(rotate_pixels(img, 3)) == std::vector<double>{3, 1, 4, 2});
  }

  TEST_CASE("rotation matches the coordinate rule and forms a cyclic group") {
    Rng rng(11);
    for (std::size_t n : {1u, 3u, 5u, 8u}) {
      Tensor img = testutil::random_tensor({n, n, 3}, rng);
      const auto v = testutil::to_vec(img);
      for (int a = 0; a < 4; ++a) {
        const Tensor r = rotate_pixels(img, a);
        CHECK(testutil::to_vec(r) == rotate_ref(v, n, 3, a));
        // Rotating by a and then by 4 - a returns the original bitwise.
        CHECK(testutil::to_vec(rotate_pixels(r, (4 - a) % 4)) == v);
        // Pixel multiset is preserved.
        auto sorted_in = v, sorted_out = testutil::to_vec(r);
        std::sort(sorted_in.begin(), sorted_in.end());
        std::sort(sorted_out.begin(), sorted_out.end());
        CHECK(sorted_in == sorted_out);
      }
      CHECK(testutil::to_vec(rotate_pixels(rotate_pixels(img, 1), 1)) == testutil::to_vec(rotate_pixels(img, 2)));
    }
  }

  TEST_CASE("rotation rejects bad input") {
    Tensor img({2, 3, 1});
    CHECK_THROWS(rotate_pixels(img, 1));
    Tensor sq({2, 2, 1});
    CHECK_THROWS(rotate_pixels(sq, 4));
    CHECK_THROWS(rotate_pixels(sq, -1));
  }

  TEST_CASE("rotate keeps the id and drops nothing") {
    ImageRecord rec{"x", Tensor({2, 2, 1}, {1, 2, 3, 4}), 5};
    auto r = rotate(rec, 2);
    CHECK(r.id == "x");
    CHECK(testutil::to_vec(r.pixels) == std::vector<double>{4, 3, 2, 1});
  }

  TEST_CASE("pool mode names round trip") {
    for (PoolMode m : {PoolMode::kNone, PoolMode::kSeen, PoolMode::kSeenAndUnseen, PoolMode::kExternal,
                       PoolMode::kExternalAndUnseen, PoolMode::kExternalAndSeen}) {
      CHECK(parse_pool_mode(pool_mode_name(m)) == m);
    }
    CHECK_THROWS_AS(parse_pool_mode("bogus"), ValidationError);
  }

  TEST_CASE("known dataset geometry") {
    auto awa2 = known_dataset_shape("AWA2");
    REQUIRE(awa2);
    CHECK(awa2->num_seen == 40);
    CHECK(awa2->num_unseen == 10);
    CHECK(awa2->num_attributes == 85);
    CHECK(awa2->num_samples == 37322);
    auto cub = known_dataset_shape("CUB");
    REQUIRE(cub);
    CHECK(cub->num_classes() == 200);
    CHECK(cub->num_attributes == 312);
    CHECK(cub->num_samples == 11788);
    auto sun = known_dataset_shape("SUN");
    REQUIRE(sun);
    CHECK(sun->num_seen == 645);
    CHECK(sun->num_unseen == 72);
    CHECK(sun->num_attributes == 102);
    CHECK(sun->num_samples == 14340);
    CHECK_FALSE(known_dataset_shape("MNIST"));
  }

  TEST_CASE("declared shape mismatch is reported") {
    auto b = small_bundle();
    b.declared_shape = "AWA2";
    try {
      validate_bundle(b);
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("AWA2 declares 85 attributes") != std::string::npos);
      CHECK(msg.find("AWA2 declares 40 seen classes") != std::string::npos);
    }
  }

  TEST_CASE("synthetic bundle is valid and consistent") {
    auto b = small_bundle();
    CHECK_NOTHROW(validate_bundle(b));
    CHECK(b.splits.seen_classes.size() == 4);
    CHECK(b.splits.unseen_classes.size() == 2);
    CHECK(b.attributes.num_attributes() == 16);
    CHECK(b.images.size() == 60);
    CHECK(b.splits.test_unseen.size() == 20);
    CHECK(b.splits.train_samples.size() + b.splits.test_seen.size() == 40);
    for (int c : b.attributes.class_ids()) {
      auto row = b.attributes.row(c);
      CHECK(std::any_of(row.begin(), row.end(), [](double v) { return v != 0.0; }));
    }
    // Distinct classes get distinct attribute rows.
    std::set<std::vector<double>> rows;
    for (int c : b.attributes.class_ids()) rows.insert({b.attributes.row(c).begin(), b.attributes.row(c).end()});
    CHECK(rows.size() == b.attributes.num_classes());
  }

  TEST_CASE("synthetic images are rendered from attributes") {
    SyntheticSpec spec;
    spec.num_classes = 4;
    spec.num_seen = 3;
    spec.image_size = 16;
    spec.samples_per_class = 3;
    spec.noise_std = 0.0;
    Rng rng(5);
    auto b = make_synthetic(spec, rng);
    // Without noise every sample of a class is the same image.
    std::map<int, std::vector<double>> first;
    for (const auto& rec : b.images) {
      auto v = testutil::to_vec(rec.pixels);
      auto [it, inserted] = first.emplace(*rec.class_id, v);
      if (!inserted) CHECK(it->second == v);
      for (double p : v) {
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
      }
    }
    // An all-zero attribute vector is a plain grey canvas.
    std::vector<double> none(16, 0.0);
    auto grey = render_attributes(none, 8);
    for (double p : grey.values()) CHECK(p == doctest::Approx(0.5));
  }

  TEST_CASE("synthetic spec validation") {
    SyntheticSpec spec;
    spec.num_seen = spec.num_classes;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    spec = SyntheticSpec{};
    spec.num_attributes = kNumPrimitives + 1;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
  }

  TEST_CASE("write and load round trip") {
    auto b = small_bundle();
    auto dir = testutil::temp_dir("dataset_roundtrip");
    write_dataset(b, dir);
    auto loaded = load_dataset(dir, LoadOptions{16});
    CHECK(loaded.attributes == b.attributes);
    CHECK(loaded.splits == b.splits);
    REQUIRE(loaded.images.size() == b.images.size());
    for (const auto& rec : b.images) {
      REQUIRE(loaded.has_image(rec.id));
      const auto& got = loaded.image(rec.id);
      CHECK(got.class_id == rec.class_id);
      CHECK(testutil::to_vec(got.pixels) == testutil::to_vec(rec.pixels));
    }
  }

  TEST_CASE("loading resizes to the requested size") {
    auto b = small_bundle();
    auto dir = testutil::temp_dir("dataset_resize");
    write_dataset(b, dir);
    auto loaded = load_dataset(dir, LoadOptions{8});
    CHECK(loaded.images.front().pixels.shape() == Shape{8, 8, 3});
  }

  TEST_CASE("validation lists every offender") {
    auto b = small_bundle();
    const int unseen = b.splits.unseen_classes.front();
    const std::string leaked = b.splits.test_unseen.front();
    b.splits.train_samples.push_back(leaked);
    b.splits.test_seen.push_back("ghost");
    try {
      validate_bundle(b);
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("train_samples: sample '" + leaked + "' belongs to class " + std::to_string(unseen)) !=
            std::string::npos);
      CHECK(msg.find("test_seen: unknown sample 'ghost'") != std::string::npos);
    }
  }

  TEST_CASE("validation rejects overlapping class splits and zero attribute rows") {
    auto b = small_bundle();
    b.splits.unseen_classes.push_back(b.splits.seen_classes.front());
    CHECK_THROWS_AS(validate_bundle(b), ValidationError);
    auto c = small_bundle();
    auto row = c.attributes.mutable_row(c.attributes.class_ids().front());
    std::fill(row.begin(), row.end(), 0.0);
    CHECK_THROWS_AS(validate_bundle(c), ValidationError);
  }

  TEST_CASE("missing dataset directory is an I/O error") {
    CHECK_THROWS_AS(load_dataset("/nonexistent/zsl/dataset"), IoError);
  }

  TEST_CASE("pools draw from the configured sources without labels") {
    auto b = small_bundle();
    auto none = resolve_pool(b, {PoolMode::kNone, std::nullopt}, 16);
    CHECK(none.sources.empty());
    auto seen = resolve_pool(b, {PoolMode::kSeen, std::nullopt}, 16);
    CHECK(seen.from_seen == b.splits.train_samples.size());
    CHECK(seen.from_unseen == 0);
    auto both = resolve_pool(b, {PoolMode::kSeenAndUnseen, std::nullopt}, 16);
    CHECK(both.from_unseen == b.splits.test_unseen.size());
    CHECK(both.sources.size() == both.from_seen + both.from_unseen);
    for (const auto& rec : both.sources) CHECK_FALSE(rec.class_id);
    CHECK_THROWS_AS(resolve_pool(b, {PoolMode::kExternal, std::nullopt}, 16), ValidationError);
  }

  TEST_CASE("external pool is loaded from a directory") {
    auto b = small_bundle();
    auto dir = testutil::temp_dir("external_pool");
    Rng rng(2);
    for (int i = 0; i < 5; ++i) write_ppm(dir / ("e" + std::to_string(i) + ".ppm"), testutil::random_tensor({20, 20, 3}, rng, 0.1));
    auto pool = resolve_pool(b, {PoolMode::kExternalAndUnseen, dir}, 16);
    CHECK(pool.from_external == 5);
    CHECK(pool.from_unseen == b.splits.test_unseen.size());
    CHECK(pool.from_seen == 0);
    for (const auto& rec : pool.sources) CHECK(rec.pixels.shape() == Shape{16, 16, 3});
    auto empty = testutil::temp_dir("external_empty");
    CHECK_THROWS_AS(resolve_pool(b, {PoolMode::kExternal, empty}, 16), ValidationError);
  }

  TEST_CASE("batch structure") {
    auto b = small_bundle(3, 20);
    auto pool = resolve_pool(b, {PoolMode::kSeenAndUnseen, std::nullopt}, 16);
    Rng rng(9);
    BatchGeometry geo{8, 4};
    std::set<std::string> train(b.splits.train_samples.begin(), b.splits.train_samples.end());
    for (int t = 0; t < 50; ++t) {
      auto batch = build_batch(b, pool, geo, rng);
      REQUIRE(batch.labelled.size() == 8);
      REQUIRE(batch.rotated.size() == 16);
      std::set<std::string> ids;
      for (const auto& item : batch.labelled) {
        CHECK(train.count(item.sample_id));
        ids.insert(item.sample_id);
        auto want = b.attributes.row(*b.image(item.sample_id).class_id);
        CHECK(item.target == std::vector<double>(want.begin(), want.end()));
      }
      CHECK(ids.size() == 8);
      for (std::size_t g = 0; g < 4; ++g) {
        const auto& src = batch.rotated[4 * g].source_id;
        const auto base = testutil::to_vec(b.image(src).pixels);
        for (int a = 0; a < 4; ++a) {
          const auto& item = batch.rotated[4 * g + static_cast<std::size_t>(a)];
          CHECK(item.source_id == src);
          CHECK(item.angle == a);
          CHECK(testutil::to_vec(item.pixels) == rotate_ref(base, 16, 3, a));
        }
      }
    }
  }

  TEST_CASE("batches are reproducible from the generator state") {
    auto b = small_bundle();
    auto pool = resolve_pool(b, {PoolMode::kSeen, std::nullopt}, 16);
    Rng r1(4), r2(4);
    for (int t = 0; t < 5; ++t) {
      auto x = build_batch(b, pool, {8, 2}, r1);
      auto y = build_batch(b, pool, {8, 2}, r2);
      for (std::size_t i = 0; i < 8; ++i) CHECK(x.labelled[i].sample_id == y.labelled[i].sample_id);
      for (std::size_t i = 0; i < 8; ++i) CHECK(x.rotated[i].source_id == y.rotated[i].source_id);
    }
  }

  TEST_CASE("none pool yields no rotated images; too-small inputs are rejected") {
    auto b = small_bundle();
    auto none = resolve_pool(b, {PoolMode::kNone, std::nullopt}, 16);
    Rng rng(1);
    CHECK(build_batch(b, none, {8, 8}, rng).rotated.empty());
    auto seen = resolve_pool(b, {PoolMode::kSeen, std::nullopt}, 16);
    CHECK_THROWS_AS(build_batch(b, seen, {1000, 2}, rng), ValidationError);
    CHECK_THROWS_AS(build_batch(b, seen, {4, 1000}, rng), ValidationError);
  }
}
