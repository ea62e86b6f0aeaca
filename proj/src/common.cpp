#include "gridfreq/common.hpp"

#include <cerrno>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace gridfreq {

std::vector<size_t> shuffled_indices(size_t n, uint64_t seed) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  uint64_t draws = 0;
  for (size_t i = n; i > 1; --i) {
    // Rejection keeps each draw exactly uniform over [0, i).
    const uint64_t bound = i;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t r;
    do {
      r = mix_seed(seed, draws++);
    } while (r >= limit);
    std::swap(idx[i - 1], idx[r % bound]);
  }
  return idx;
}

double parse_double(std::string_view s) {
  std::string buf(s);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(buf.c_str(), &end);
  if (end == buf.c_str() || *end != '\0' || errno == ERANGE)
    throw IoError("not a number: '" + buf + "'");
  return v;
}

long parse_long(std::string_view s) {
  std::string buf(s);
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(buf.c_str(), &end, 10);
  if (end == buf.c_str() || *end != '\0' || errno == ERANGE)
    throw IoError("not an integer: '" + buf + "'");
  return v;
}

std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream is{std::string(line)};
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::vector<std::string> split_char(std::string_view line, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    const size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      return out;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path);
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view content) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out << content;
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

std::string find_fixture(const std::string& name) {
  namespace fs = std::filesystem;
  std::vector<std::string> roots;
  if (const char* env = std::getenv("GRIDFREQ_FIXTURES")) {
    for (auto& part : split_char(env, ':'))
      if (!part.empty()) roots.push_back(part);
  }
  roots.push_back("data");
  roots.push_back("../data");
  for (const auto& root : roots) {
    for (const auto& candidate :
         {fs::path(root) / name, fs::path(root) / (name + ".txt")}) {
      std::error_code ec;
      if (fs::is_regular_file(candidate, ec)) return candidate.string();
    }
  }
  throw IoError("unknown fixture '" + name + "' (searched GRIDFREQ_FIXTURES, ./data, ../data)");
}

}  // namespace gridfreq
