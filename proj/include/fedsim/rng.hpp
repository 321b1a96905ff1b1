#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace fedsim {

/// Role of a random stream. Part of the stream id, so draws made for one
/// purpose can never shift the values drawn for another.
enum class RngPurpose : std::uint64_t {
  param_init = 1,
  dropout_mask = 2,
  client_selection = 3,
  batch_shuffle = 4,
  data_gen = 5,
  patient_split = 6,
  fold_split = 7,
};

/// Counter-based random stream keyed by (seed, round, client, purpose, index).
///
/// Every id tuple names its own independent sequence, so any piece of the
/// simulation can be re-run or reordered without changing the values another
/// piece sees. The output function is the splitmix64 finalizer over a keyed
/// counter; the same tuple always replays the identical sequence.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t round, std::uint64_t client,
            RngPurpose purpose, std::uint64_t index = 0) {
    std::uint64_t k = mix(seed ^ 0xa0761d6478bd642full);
    k = mix(k ^ round ^ 0xe7037ed1a0b428dbull);
    k = mix(k ^ client ^ 0x8ebc6af09c88c6e3ull);
    k = mix(k ^ static_cast<std::uint64_t>(purpose) ^ 0x589965cc75374cc3ull);
    k = mix(k ^ index ^ 0x1d8e4e27c47d124full);
    key_ = k;
  }

  std::uint64_t next_u64() {
    counter_ += 0x9e3779b97f4a7c15ull;
    return mix(key_ + counter_);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Requires n >= 1.
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("next_below: n must be >= 1");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  /// Standard normal draw (Box-Muller; the paired value is cached).
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - next_double();  // (0, 1], keeps log finite
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace fedsim
