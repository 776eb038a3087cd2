#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>

namespace spiked {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
//
// A stream is fully determined by a 64-bit key and a 96-bit stream id; the
// low 32-bit counter word walks through the stream. Any (seed, tag, replicate,
// index) tuple therefore maps to an independent, re-derivable stream without
// touching shared state. Satisfies UniformRandomBitGenerator.
class Philox4x32 {
 public:
  using result_type = std::uint32_t;

  Philox4x32(std::uint64_t key, std::uint64_t stream_hi, std::uint32_t stream_lo);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  // Raw block function, exposed for known-answer tests.
  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                            std::array<std::uint32_t, 2> key);

 private:
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> ctr_;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 4;
};

std::uint64_t splitmix64(std::uint64_t x);

// Stable 64-bit tag for a subcommand or purpose string (FNV-1a).
std::uint64_t stream_tag(std::string_view name);

// Stream keyed by (master seed, tag, replicate index, secondary index).
Philox4x32 make_stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t replicate,
                       std::uint32_t index = 0);

}  // namespace spiked
