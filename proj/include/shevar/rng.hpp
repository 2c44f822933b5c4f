#ifndef SHEVAR_RNG_HPP_
#define SHEVAR_RNG_HPP_

#include <cstdint>
#include <initializer_list>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

namespace shevar {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Order-sensitive 64-bit mix of a list of words.
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> words) noexcept {
  std::uint64_t h = 0x6A09E667F3BCC909ULL;
  for (auto w : words) h = splitmix64(h ^ splitmix64(w));
  return h;
}

/// Identifies one reproducible random stream: (master seed, replicate index).
/// Distinct stream ids give decorrelated seeds for the underlying engine.
struct RngStream {
  std::uint64_t master_seed = 0;
  std::uint64_t stream_id = 0;

  std::uint64_t engine_seed() const noexcept { return mix_seed({master_seed, stream_id}); }

  /// Child stream for an independent sub-task of the same replicate.
  RngStream derive(std::uint64_t tag) const noexcept {
    return RngStream{mix_seed({master_seed, stream_id, tag}), stream_id};
  }
};

using Engine = boost::random::mt19937_64;

/// Engine plus a ziggurat standard-normal sampler.
class NormalSource {
 public:
  explicit NormalSource(const RngStream& stream) : engine_(stream.engine_seed()) {}
  explicit NormalSource(std::uint64_t seed) : engine_(seed) {}

  double operator()() { return normal_(engine_); }
  Engine& engine() noexcept { return engine_; }

 private:
  Engine engine_;
  boost::random::normal_distribution<double> normal_;
};

}  // namespace shevar

#endif  // SHEVAR_RNG_HPP_
