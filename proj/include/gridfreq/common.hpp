#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gridfreq {

// Base class for everything thrown on purpose by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Missing or malformed input artifacts (fixture files, manifests, bundles).
// The CLI maps this to exit code 2.
struct IoError : Error {
  using Error::Error;
};

// A request that is well formed but cannot be satisfied by the grid at hand,
// e.g. demand outside the committed fleet's dispatchable range. Exit code 1.
struct InfeasibleError : Error {
  using Error::Error;
};

// printf-style helper so call sites stay short. Used for error messages and
// report text, not for bulk numeric output.
template <typename... Args>
std::string format_str(const char* fmt, Args... args) {
  const int n = std::snprintf(nullptr, 0, fmt, args...);
  std::string out(static_cast<size_t>(n), '\0');
  std::snprintf(out.data(), out.size() + 1, fmt, args...);
  return out;
}

// Doubles are serialized with %.17g everywhere so that write/read round trips
// reproduce the exact bit pattern and artifact hashes stay stable.
inline std::string fmt_double(double v) { return format_str("%.17g", v); }

double parse_double(std::string_view s);  // throws IoError on trailing junk
long parse_long(std::string_view s);

std::vector<std::string> split_ws(std::string_view line);
std::vector<std::string> split_char(std::string_view line, char sep);

// FNV-1a, 64 bit. Fast, dependency-free, and stable across platforms; used to
// fingerprint generated artifacts in run manifests.
inline uint64_t fnv1a64(std::string_view data, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string read_text_file(const std::string& path);  // throws IoError
void write_text_file(const std::string& path, std::string_view content);

// Fixture lookup order: explicit GRIDFREQ_FIXTURES entries (':' separated),
// then ./data and ../data relative to the current directory.
std::string find_fixture(const std::string& name);

// Seeded Fisher-Yates permutation of [0, n). Hand rolled because the
// standard shuffle leaves its draw sequence up to the library, and shuffles
// here drive artifacts that must be reproducible from the seed alone.
std::vector<size_t> shuffled_indices(size_t n, uint64_t seed);

// splitmix64. Used to derive independent child seeds from a master seed so
// that per-sample and per-fold streams do not depend on scheduling order.
inline uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace gridfreq
