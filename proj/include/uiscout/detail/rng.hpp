#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>

namespace uiscout::detail {

// Deterministic draw helpers over mt19937_64. std::uniform_* distributions are
// implementation-defined, so every draw used by the system goes through these
// fixed transformations instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // uniform double in [0, 1) with 53 random bits
  double next_real() { return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0); }

  // uniform integer in [0, n)
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("next_below: n must be positive");
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(gen_()) * n) >> 64);
  }

  // uniform integer in [lo, hi]
  std::int64_t next_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw std::invalid_argument("next_int: empty range");
    return lo + static_cast<std::int64_t>(
                    next_below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  bool next_coin(double p_true) { return next_real() < p_true; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace uiscout::detail
