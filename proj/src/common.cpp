#include "sgcl/common.hpp"

#include <charconv>
#include <cstdio>
#include <thread>
#include <vector>

namespace sgcl {

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t derive_seed(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
  uint64_t h = mix64(a);
  h = mix64(h ^ (b + 0x9e3779b97f4a7c15ULL));
  h = mix64(h ^ (c + 0x517cc1b727220a95ULL));
  h = mix64(h ^ (d + 0x2545f4914f6cdd1dULL));
  return h;
}

size_t Rng::uniform_int(size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
  uint64_t un = n;
  uint64_t lim = UINT64_MAX - UINT64_MAX % un;
  uint64_t x;
  do {
    x = eng_();
  } while (x >= lim);
  return static_cast<size_t>(x % un);
}

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void parallel_slices(size_t n, int threads, const std::function<void(int, size_t, size_t)>& fn) {
  if (threads < 1) threads = 1;
  size_t t = static_cast<size_t>(threads);
  if (t > n) t = n == 0 ? 1 : n;
  if (t <= 1) {
    fn(0, 0, n);
    return;
  }
  size_t chunk = (n + t - 1) / t;
  std::vector<std::thread> pool;
  for (size_t i = 1; i < t; ++i) {
    size_t lo = i * chunk;
    size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back(fn, static_cast<int>(i), lo, hi);
  }
  fn(0, 0, std::min(chunk, n));
  for (auto& th : pool) th.join();
}

}  // namespace sgcl
