#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace zsl {

// Counter-based generator: the i-th draw is splitmix64(key + i * golden_gamma),
// where key is derived from (seed, stream). The whole state is (key, counter),
// so a stream can be saved, restored or forked without touching the others.
// Output is identical on every platform; only integer arithmetic is involved
// up to the u64 -> double conversion.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  // Independent child stream, e.g. Rng(seed).fork("init").
  Rng fork(std::string_view label) const;

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller (one value per call, no caching).
  double normal();
  // Normal(0, std) resampled until |x| <= 2 std.
  double truncated_normal(double std);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Rebuilds a generator from (seed, key, counter) as saved in a checkpoint.
  static Rng restore(std::uint64_t seed, std::uint64_t key, std::uint64_t counter);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }
  void set_counter(std::uint64_t c) { counter_ = c; }

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

// FNV-1a over bytes; used for parameter and file hashes.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace zsl
