#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace synthctrl {

// Philox4x32-10 counter-based generator. Streams are addressed by
// (seed, domain, stream): independent draws/replications each own a stream,
// so parallel consumers never share state and results are reproducible
// regardless of scheduling.
class Philox {
 public:
  Philox(std::uint64_t seed, std::uint32_t domain, std::uint64_t stream)
      : key_{static_cast<std::uint32_t>(seed & 0xffffffffu),
             static_cast<std::uint32_t>(seed >> 32)},
        ctr_{0, 0,
             static_cast<std::uint32_t>(stream & 0xffffffffu),
             static_cast<std::uint32_t>((stream >> 32) ^ domain)} {}

  std::uint32_t next_u32() {
    if (idx_ == 4) {
      block_ = round10(ctr_, key_);
      advance();
      idx_ = 0;
    }
    return block_[idx_++];
  }

  std::uint64_t next_u64() {
    std::uint64_t lo = next_u32();
    std::uint64_t hi = next_u32();
    return lo | (hi << 32);
  }

  // Uniform on (0,1): 53-bit mantissa, offset keeps 0 out of the range.
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
  }

  // Standard normal via Box-Muller; pairs are cached.
  double next_normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

 private:
  using Ctr = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                      std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
  }

  static Ctr round10(Ctr c, Key k) {
    for (int i = 0; i < 10; ++i) {
      std::uint32_t hi0, lo0, hi1, lo1;
      mulhilo(kMul0, c[0], hi0, lo0);
      mulhilo(kMul1, c[2], hi1, lo1);
      c = Ctr{hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
      k[0] += kWeyl0;
      k[1] += kWeyl1;
    }
    return c;
  }

  void advance() {
    if (++ctr_[0] == 0) ++ctr_[1];
  }

  Key key_;
  Ctr ctr_;
  Ctr block_{};
  int idx_ = 4;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

// Domain tags keep streams for different purposes disjoint under one seed.
namespace rng_domain {
constexpr std::uint32_t kInsampleDraw = 0x1;
constexpr std::uint32_t kHarnessRep = 0x2;
constexpr std::uint32_t kTest = 0xFF;
}  // namespace rng_domain

}  // namespace synthctrl
