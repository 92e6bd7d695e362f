#ifndef CDS_RNG_HPP
#define CDS_RNG_HPP

#include <cstdint>
#include <string_view>

namespace cds {

/// Counter-based generator: the k-th draw is a pure function of (key, k),
/// where the key mixes the seed and a stream id. Streams forked with
/// distinct ids are independent, so batch items can be generated in any
/// order and still reproduce bit-for-bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller; consumes two counter slots per call.
  double normal();
  double normal(double mean, double std) { return mean + std * normal(); }

  /// Independent child stream. Does not advance this generator.
  Rng fork(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// FNV-1a hash, for deriving stream ids from names.
constexpr std::uint64_t stream_id(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace cds

#endif  // CDS_RNG_HPP
