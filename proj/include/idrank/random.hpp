#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace idrank {

/// Seedable generator whose output is identical on every platform.
///
/// The engine is std::mt19937_64, whose output sequence the standard pins
/// down exactly. The standard distributions are not portable, so bounded
/// integers, uniform doubles and normals are derived here:
///   - uniform_below(n): rejection sampling, draws x until x >= 2^64 mod n,
///     returns x mod n
///   - uniform01(): top 53 bits scaled by 2^-53
///   - normal(): Marsaglia polar method, caching the second variate
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  std::uint64_t uniform_below(std::uint64_t n);
  double uniform01();
  double normal();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// SplitMix64 finalizer; derives independent child seeds from one seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

/// Returns k distinct indices from [0, n) in draw order (partial
/// Fisher-Yates). Requires k <= n.
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k);

}  // namespace idrank
