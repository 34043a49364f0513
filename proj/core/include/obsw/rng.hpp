#pragma once

#include <array>
#include <cmath>
#include <cstdint>

// Counter-based random numbers (Philox4x32-10, Salmon et al. 2011).
// Every draw is a pure function of (seed, path, step, stream), so parallel
// generation is order-independent and runs are bit-reproducible for any
// thread count.

namespace obsw::rng {

// Substream identifiers. Distinct streams decorrelate different uses of the
// same (seed, path, step) triple.
enum Stream : std::uint32_t {
  kBrownian = 0,   // forward path increments
  kPolicy = 1,     // randomized policy perturbations
  kScenario = 2,   // test-vector generation
  kScenario2 = 3,
};

namespace detail {

inline constexpr std::uint32_t kW32A = 0x9E3779B9u;
inline constexpr std::uint32_t kW32B = 0xBB67AE85u;
inline constexpr std::uint32_t kM4x32A = 0xD2511F53u;
inline constexpr std::uint32_t kM4x32B = 0xCD9E8D57u;

inline void mul_hilo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  lo = static_cast<std::uint32_t>(p);
  hi = static_cast<std::uint32_t>(p >> 32);
}

inline void round_once(std::array<std::uint32_t, 4>& ctr, std::array<std::uint32_t, 2>& key) {
  std::uint32_t lo0, hi0, lo1, hi1;
  mul_hilo(kM4x32A, ctr[0], lo0, hi0);
  mul_hilo(kM4x32B, ctr[2], lo1, hi1);
  ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  key[0] += kW32A;
  key[1] += kW32B;
}

}  // namespace detail

// One 128-bit Philox block.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                               std::array<std::uint32_t, 2> key) {
  for (int r = 0; r < 10; ++r) detail::round_once(counter, key);
  return counter;
}

inline std::array<std::uint32_t, 4> block(std::uint64_t seed, std::uint64_t path,
                                          std::uint32_t step, std::uint32_t stream) {
  const std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32), step, stream};
  const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed),
                                            static_cast<std::uint32_t>(seed >> 32)};
  return philox4x32(ctr, key);
}

// Uniform on (0,1]: bias 2^-53 keeps log() safe in Box-Muller below.
inline double to_unit(std::uint32_t a, std::uint32_t b) {
  const std::uint64_t v = (static_cast<std::uint64_t>(a) << 32) | b;
  return static_cast<double>((v >> 11) + 1) * 0x1.0p-53;
}

inline double uniform01(std::uint64_t seed, std::uint64_t path, std::uint32_t step,
                        std::uint32_t stream) {
  const auto r = block(seed, path, step, stream);
  return to_unit(r[0], r[1]);
}

struct NormalPair {
  double z0, z1;
};

inline NormalPair normal_pair(std::uint64_t seed, std::uint64_t path, std::uint32_t step,
                              std::uint32_t stream) {
  const auto r = block(seed, path, step, stream);
  const double u1 = to_unit(r[0], r[1]);
  const double u2 = to_unit(r[2], r[3]);
  const double rad = std::sqrt(-2.0 * std::log(u1));
  const double ang = 6.283185307179586476925286766559 * u2;
  return {rad * std::cos(ang), rad * std::sin(ang)};
}

inline double normal(std::uint64_t seed, std::uint64_t path, std::uint32_t step,
                     std::uint32_t stream) {
  return normal_pair(seed, path, step, stream).z0;
}

// Uniform integer in [0, n) via rejection-free scaling (n is tiny here).
inline std::uint32_t uniform_below(std::uint64_t seed, std::uint64_t path, std::uint32_t step,
                                   std::uint32_t stream, std::uint32_t n) {
  const auto r = block(seed, path, step, stream);
  const std::uint64_t v = (static_cast<std::uint64_t>(r[0]) << 32) | r[1];
  return static_cast<std::uint32_t>(v % n);
}

}  // namespace obsw::rng
