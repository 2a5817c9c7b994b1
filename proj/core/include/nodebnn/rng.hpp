#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace nodebnn {

/// splitmix64 finalizer; used to derive independent seeds from key tuples.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t combine_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ULL));
}

template <typename... Rest>
std::uint64_t combine_seed(std::uint64_t a, std::uint64_t b, Rest... rest) {
  return combine_seed(combine_seed(a, b), static_cast<std::uint64_t>(rest)...);
}

/// Seeded random stream. Every consumer takes one of these explicitly;
/// there is no global generator.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

  double normal() { return normal_(gen_); }
  double normal(double mean, double stddev) { return mean + stddev * normal_(gen_); }
  double uniform() { return uniform_(gen_); }  // [0, 1)
  std::uint64_t integer(std::uint64_t n) {     // uniform on {0 .. n-1}
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(gen_);
  }

  /// Positive truncation of N(loc, scale); loc must be positive.
  double half_normal(double loc, double scale) {
    double v;
    do {
      v = normal(loc, scale);
    } while (v <= 0.0);
    return v;
  }

  /// Independent stream keyed by `stream`; does not consume state.
  Rng fork(std::uint64_t stream) const { return Rng(combine_seed(seed_, stream)); }

  std::string serialize() const {
    std::ostringstream os;
    os << gen_ << ' ' << normal_;
    return os.str();
  }
  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> gen_ >> normal_;
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  std::normal_distribution<double> normal_;
  std::uniform_real_distribution<double> uniform_;
};

}  // namespace nodebnn
