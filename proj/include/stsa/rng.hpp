#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace stsa {

// Counter-based deterministic random stream.
//
// Output i of a stream is mix(key + i * golden), the SplitMix64 finalizer
// over an affine counter walk. Streams are identified by a 64-bit key, so a
// sub-stream per (seed, sequence index, iteration) can be derived without
// touching the parent's state. Identical seed => identical draw sequence,
// independent of evaluation order across sub-streams.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : key_(mix(seed ^ 0x5bd1e9955bd1e995ull)) {}

  // Independent stream keyed by (this stream, a, b). Used by the engine as
  // substream(sequence index, iteration).
  RngStream substream(std::uint64_t a, std::uint64_t b) const {
    RngStream s(0);
    s.key_ = mix(key_ ^ mix(a * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull) ^
                 mix(b + 0xd6e8feb86659fd93ull));
    s.ctr_ = 0;
    return s;
  }

  // Independent stream keyed by a single tag (per-sampler sub-draws).
  RngStream split(std::uint64_t tag) const { return substream(tag, 0x94d049bb133111ebull); }

  std::uint64_t next_u64() {
    ++ctr_;
    return mix(key_ + ctr_ * 0x9e3779b97f4a7c15ull);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  // Standard normal via Box-Muller. Draws two uniforms per call; no caching,
  // so the draw count per call is fixed.
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::vector<double> normal_vec(std::size_t d, double stddev = 1.0) {
    std::vector<double> v(d);
    for (auto& x : v) x = stddev * normal();
    return v;
  }

  // Index in [0, n) from a uniform draw.
  std::size_t uniform_index(std::size_t n) {
    std::size_t i = static_cast<std::size_t>(uniform01() * static_cast<double>(n));
    return i >= n ? n - 1 : i;
  }

  // Sample an index from a discrete distribution (assumed to sum to ~1).
  std::size_t categorical(const std::vector<double>& p) {
    double u = uniform01();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
      acc += p[i];
      if (u < acc) return i;
    }
    return p.empty() ? 0 : p.size() - 1;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_ = 0;
  std::uint64_t ctr_ = 0;
};

}  // namespace stsa
