//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MVCGT_RNG_H_
#define MVCGT_RNG_H_

#include <cstdint>
#include <string_view>

namespace mvcgt {

enum class RngStream : std::uint64_t {
  kInit = 1,
  kNoise = 2,
  kShuffle = 3,
  kCheck = 4,
};

// Counter-based generator: the k-th draw of (seed, stream) is a pure hash of
// the triple, so streams are independent and trivially reproducible.
class CounterRng {
public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : seed_(seed), stream_(stream) { }
  CounterRng(std::uint64_t seed, RngStream stream)
      : CounterRng(seed, static_cast<std::uint64_t>(stream)) { }

  // Stream keyed by a name, e.g. a parameter name for initialization.
  static CounterRng named(std::uint64_t seed, std::string_view name);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller; consumes two draws.
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }
  void set_counter(std::uint64_t counter) { counter_ = counter; }

private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

std::uint64_t fnv1a64(std::string_view text);

}  // namespace mvcgt

#endif  // MVCGT_RNG_H_
