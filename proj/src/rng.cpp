#include "stars/rng.hpp"

#include <cmath>
#include <sstream>

#include "stars/error.hpp"

namespace stars {

uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t fnv1a64(std::string_view text) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng::Rng(uint64_t seed) {
  // Expand the seed through splitmix64 so nearby seeds give unrelated streams.
  uint64_t s = seed;
  std::seed_seq seq{splitmix64(s), splitmix64(s), splitmix64(s), splitmix64(s)};
  engine_.seed(seq);
}

Rng Rng::substream(uint64_t seed, std::string_view name, uint64_t index) {
  uint64_t mix = seed;
  uint64_t a = splitmix64(mix);
  uint64_t b = fnv1a64(name);
  uint64_t c = index * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL;
  return Rng(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)) ^ c);
}

uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_ << ' ' << (has_spare_ ? 1 : 0);
  if (has_spare_) {
    os << ' ' << std::hexfloat << spare_;
  }
  return os.str();
}

Rng Rng::deserialize(const std::string& text) {
  Rng r;
  std::istringstream is(text);
  int spare_flag = 0;
  is >> r.engine_ >> spare_flag;
  if (spare_flag) {
    // hexfloat round-trips the cached deviate exactly
    std::string tok;
    is >> tok;
    r.spare_ = std::strtod(tok.c_str(), nullptr);
    r.has_spare_ = true;
  }
  if (is.fail()) {
    throw ParseError("rng state: malformed serialized stream");
  }
  return r;
}

}  // namespace stars
