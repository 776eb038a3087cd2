#include "spiked/rng.hpp"

namespace spiked {
namespace {

constexpr std::uint32_t kW0 = 0x9E3779B9u;
constexpr std::uint32_t kW1 = 0xBB67AE85u;
constexpr std::uint32_t kM0 = 0xD2511F53u;
constexpr std::uint32_t kM1 = 0xCD9E8D57u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  lo = static_cast<std::uint32_t>(p);
  hi = static_cast<std::uint32_t>(p >> 32);
}

}  // namespace

std::array<std::uint32_t, 4> Philox4x32::block(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t lo0, hi0, lo1, hi1;
    mulhilo(kM0, ctr[0], lo0, hi0);
    mulhilo(kM1, ctr[2], lo1, hi1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

Philox4x32::Philox4x32(std::uint64_t key, std::uint64_t stream_hi, std::uint32_t stream_lo)
    : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)},
      ctr_{0u, stream_lo, static_cast<std::uint32_t>(stream_hi),
           static_cast<std::uint32_t>(stream_hi >> 32)} {}

Philox4x32::result_type Philox4x32::operator()() {
  if (pos_ == 4) {
    buf_ = block(ctr_, key_);
    ++ctr_[0];
    pos_ = 0;
  }
  return buf_[pos_++];
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t stream_tag(std::string_view name) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

Philox4x32 make_stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t replicate,
                       std::uint32_t index) {
  return Philox4x32(splitmix64(seed ^ splitmix64(tag)), replicate, index);
}

}  // namespace spiked
