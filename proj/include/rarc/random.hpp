#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace rarc {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDULL;
  z = (z ^ (z >> 33)) * 0xC4CEB9FE1A85EC53ULL;
  return z ^ (z >> 33);
}

// Order-sensitive FNV-1a accumulator over typed parts, finalized with a
// 64-bit mixer. Parts are length-separated so ("ab","c") != ("a","bc").
class SeedMixer {
 public:
  SeedMixer& add(std::string_view s) {
    for (unsigned char c : s) step(c);
    step(0xFF);
    return *this;
  }
  SeedMixer& add(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) step(static_cast<unsigned char>(v >> (8 * i)));
    step(0xFE);
    return *this;
  }
  std::uint64_t finish() const { return mix64(h_); }

 private:
  void step(unsigned char c) { h_ = (h_ ^ c) * 0x100000001B3ULL; }
  std::uint64_t h_ = 0xCBF29CE484222325ULL;
};

namespace detail {
inline void mix_part(SeedMixer& m, std::string_view s) { m.add(s); }
inline void mix_part(SeedMixer& m, const std::string& s) { m.add(std::string_view(s)); }
inline void mix_part(SeedMixer& m, const char* s) { m.add(std::string_view(s)); }
inline void mix_part(SeedMixer& m, std::uint64_t v) { m.add(v); }
inline void mix_part(SeedMixer& m, int v) { m.add(static_cast<std::uint64_t>(v)); }
}  // namespace detail

template <typename... Parts>
std::uint64_t hash64(const Parts&... parts) {
  SeedMixer m;
  (detail::mix_part(m, parts), ...);
  return m.finish();
}

// Sample seed for sample b of a method on a query.
inline std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view query_id,
                                 std::string_view method, int b) {
  return hash64(master_seed, query_id, method, b);
}

// Splitmix-based generator. All draws are explicit; there is no global state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64_next(state_); }

  // Uniform in [0, 1).
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in {0, ..., n-1} via 128-bit multiply.
  std::uint64_t next_below(std::uint64_t n) {
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Uniform in {lo, ..., hi} inclusive.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next_below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

 private:
  std::uint64_t state_;
};

}  // namespace rarc
