#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dedsi {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename... Parts>
std::string concat(Parts&&... parts) {
  std::ostringstream oss;
  (oss << ... << std::forward<Parts>(parts));
  return oss.str();
}

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a64_bytes(const void* data, std::size_t n, std::uint64_t h = kFnvOffset) {
  return fnv1a64(std::string_view(static_cast<const char*>(data), n), h);
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Randomness
//
// Every random decision in the library flows from one 64-bit seed. Sub-seeds
// are derived as splitmix64(seed ^ fnv1a64(label)), so each role gets an
// independent stream and adding a role never perturbs the others. Sampling
// helpers below avoid std:: distributions, whose algorithms differ between
// standard libraries.
// ---------------------------------------------------------------------------

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  return splitmix64(seed ^ fnv1a64(label));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index) {
  return splitmix64(derive_seed(seed, label) ^ splitmix64(index));
}

/// Unbiased integer in [0, n). n must be positive.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  if (n == 0) throw Error("uniform_index: empty range");
  const std::uint64_t limit = Rng::max() - (Rng::max() % n + 1) % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x > limit);
  return x % n;
}

/// Integer uniformly drawn from the closed range [lo, hi].
inline std::uint64_t uniform_between(Rng& rng, std::uint64_t lo, std::uint64_t hi) {
  return lo + uniform_index(rng, hi - lo + 1);
}

/// Real in [0, 1) with 53 random bits.
inline double uniform_real(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_index(rng, i)]);
  }
}

/// k distinct indices from [0, n), in draw order (partial Fisher-Yates).
inline std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k) {
  if (k > n) throw Error(concat("cannot draw ", k, " items from ", n));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
  }
  idx.resize(k);
  return idx;
}

inline std::string rng_state(const Rng& rng) {
  std::ostringstream oss;
  oss << rng;
  return oss.str();
}

inline void restore_rng(Rng& rng, const std::string& state) {
  std::istringstream iss(state);
  iss >> rng;
  if (!iss) throw Error("corrupt RNG state");
}

/// Nearest integer to num/den, ties to even.
inline std::size_t round_half_even_div(std::size_t num, std::size_t den) {
  if (den == 0) throw Error("division by zero");
  const std::size_t q = num / den;
  const std::size_t r = num % den;
  if (2 * r > den) return q + 1;
  if (2 * r == den) return q + (q & 1U);
  return q;
}

}  // namespace dedsi
