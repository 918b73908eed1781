// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace akd {

// All numeric work is done in double; single precision is not enough to pass
// finite-difference gradient checks at the 1e-4 tolerance the tests demand.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void str_append(std::ostringstream&) {}
template <typename T, typename... Rest>
void str_append(std::ostringstream& os, T&& v, Rest&&... rest) {
  os << std::forward<T>(v);
  str_append(os, std::forward<Rest>(rest)...);
}
}  // namespace detail

template <typename... Ts>
std::string str(Ts&&... parts) {
  std::ostringstream os;
  detail::str_append(os, std::forward<Ts>(parts)...);
  return os.str();
}

#define AKD_CHECK(cond, ...)                      \
  do {                                            \
    if (!(cond)) throw ::akd::Error(::akd::str(__VA_ARGS__)); \
  } while (0)

// FNV-1a, used for config hashes and frozen-parameter fingerprints.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

// splitmix64, used to derive independent seeds from a base seed + stream name.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic RNG. Sampling primitives are implemented by hand so that
// streams are reproducible bit-for-bit regardless of the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : eng_(seed) {}

  uint64_t raw() { return eng_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  uint64_t randint(uint64_t n) {
    AKD_CHECK(n > 0, "randint: n must be positive");
    // rejection sampling to avoid modulo bias
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v = eng_();
    while (v >= limit) v = eng_();
    return v % n;
  }

  // Standard normal via Box-Muller (cos branch only).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Normal(0, std) truncated to +/- 2 std, by rejection.
  double trunc_normal(double std_dev) {
    for (;;) {
      const double z = normal();
      if (std::abs(z) <= 2.0) return z * std_dev;
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(randint(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Named child stream, independent of the parent's future output.
  Rng child(const std::string& name) const {
    return Rng(splitmix64(seed_of(eng_) ^ fnv1a(name)));
  }

  std::string serialize() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
    AKD_CHECK(!is.fail(), "bad RNG state string");
  }

 private:
  // mt19937_64 does not expose its seed; children are derived from a hash of
  // the serialized state instead.
  static uint64_t seed_of(const std::mt19937_64& eng) {
    std::ostringstream os;
    os << eng;
    return fnv1a(os.str());
  }

  std::mt19937_64 eng_;
};

inline Rng rng_for(uint64_t base_seed, const std::string& stream) {
  return Rng(splitmix64(base_seed ^ fnv1a(stream)));
}

}  // namespace akd
