#include "inklab/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace inklab {

namespace {

uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(uint64_t seed) {
  uint64_t x = seed;
  for (auto& w : s_) w = splitmix64(x);
}

uint64_t Rng::next_u64() {
  const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int64_t Rng::uniform_int(int64_t n) {
  if (n <= 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
  return static_cast<int64_t>(
      (static_cast<unsigned __int128>(next_u64()) * static_cast<uint64_t>(n)) >> 64);
}

float Rng::normal() {
  // u1 in (0,1] so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return static_cast<float>(std::sqrt(-2.0 * std::log(u1)) *
                            std::cos(2.0 * std::numbers::pi * u2));
}

void Rng::fill_normal(std::span<float> out, float mean, float stddev) {
  for (auto& v : out) v = mean + stddev * normal();
}

void Rng::fill_uniform(std::span<float> out, float lo, float hi) {
  for (auto& v : out) v = static_cast<float>(uniform(lo, hi));
}

Rng Rng::split(uint64_t stream) {
  Rng child(next_u64() ^ (stream * 0x9e3779b97f4a7c15ULL + 0x7263d9bd8409f526ULL));
  return child;
}

std::string Rng::state_hex() const {
  static const char* digits = "0123456789abcdef";
  std::string out(64, '0');
  for (int w = 0; w < 4; ++w)
    for (int i = 0; i < 16; ++i)
      out[w * 16 + i] = digits[(s_[w] >> (60 - 4 * i)) & 0xf];
  return out;
}

Rng Rng::from_state_hex(const std::string& hex) {
  if (hex.size() != 64) throw std::invalid_argument("Rng state must be 64 hex chars");
  Rng r(0);
  for (int w = 0; w < 4; ++w) {
    uint64_t v = 0;
    for (int i = 0; i < 16; ++i) {
      char c = hex[w * 16 + i];
      uint64_t d;
      if (c >= '0' && c <= '9') d = c - '0';
      else if (c >= 'a' && c <= 'f') d = 10 + (c - 'a');
      else throw std::invalid_argument("Rng state: bad hex digit");
      v = (v << 4) | d;
    }
    r.s_[w] = v;
  }
  return r;
}

}  // namespace inklab
