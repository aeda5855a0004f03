#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace spectranet {

/// Deterministic random stream addressed by (seed, name, counter).
///
/// A single user seed fans out into independent substreams: the engine seed
/// is splitmix64(splitmix64(seed ^ fnv1a64(name)) + counter), so distinct
/// stream names (and distinct counters under one name) give unrelated
/// sequences while staying fully reproducible from the one user seed.
///
/// Stream names in use: "weights-init", "window-sampling", "latent-init",
/// "occlusion", "tuning", "eval-init" (counter = origin index),
/// "simulate7" (counter = feature index).
///
/// All draw helpers are hand-specified on top of the (portable) mt19937_64
/// output so results are bit-reproducible across standard libraries.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view name, std::uint64_t counter = 0)
      : engine_(derive(seed, name, counter)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [lo, hi], inclusive. Rejection sampling, no modulo bias.
  long uniform_int(long lo, long hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % span);
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return lo + static_cast<long>(x % span);
  }

  /// One Gaussian variate via Box-Muller; consumes exactly two engine outputs.
  double normal(double mean = 0.0, double stddev = 1.0) {
    const double u1 = (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  static std::uint64_t derive(std::uint64_t seed, std::string_view name,
                              std::uint64_t counter = 0) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a over the stream name
    for (const char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    return splitmix(splitmix(seed ^ h) + counter);
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::mt19937_64 engine_;
};

}  // namespace spectranet
