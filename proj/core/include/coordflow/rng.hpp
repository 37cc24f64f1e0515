#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace coordflow {

// xoshiro256++ with splitmix64 seeding. Self-contained so that sampling is
// reproducible across standard libraries and serializes to four words.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) {
    uint64_t x = seed;
    for (auto& word : state_) {
      x += 0x9e3779b97f4a7c15ull;
      uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
      word = z ^ (z >> 31);
    }
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  uint32_t next_u32() { return static_cast<uint32_t>(next_u64() >> 32); }

  // [0,1)
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }
  float next_float() { return float(next_u32() >> 8) * 0x1.0p-24f; }

  // unbiased [0,n)
  int64_t uniform_int(int64_t n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return static_cast<int64_t>(v % un);
  }

  float uniform(float a, float b) { return a + (b - a) * next_float(); }

  // Box-Muller; stateless (second value discarded).
  float normal(float mean = 0.0f, float sigma = 1.0f) {
    double u1 = 0.0;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    const double u2 = next_double();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    return mean + sigma * static_cast<float>(mag * std::cos(6.283185307179586 * u2));
  }

  std::string state_string() const {
    std::ostringstream os;
    os << state_[0] << " " << state_[1] << " " << state_[2] << " " << state_[3];
    return os.str();
  }

  void set_state_string(const std::string& s) {
    std::istringstream is(s);
    std::array<uint64_t, 4> st{};
    if (!(is >> st[0] >> st[1] >> st[2] >> st[3]))
      throw std::runtime_error("Rng: bad state string");
    state_ = st;
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<uint64_t, 4> state_{};
};

}  // namespace coordflow
