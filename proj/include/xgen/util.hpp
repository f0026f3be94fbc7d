#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace xgen {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Portable deterministic PRNG (splitmix64). All randomness in the pipeline
// funnels through this so results are reproducible across platforms and
// independent of libstdc++ distribution internals.
struct Rng {
  uint64_t state = 0;

  explicit Rng(uint64_t seed = 0) : state(seed) {}

  uint64_t next_u64() {
    state += 0x9e3779b97f4a7c15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0,1) with 53-bit resolution
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // unbiased integer in [0,n)
  uint64_t below(uint64_t n) {
    if (n == 0) throw Error("Rng::below: n must be positive");
    uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // standard normal, Box-Muller (one value per two uniforms; no cached spare
  // so the stream position is a pure function of the draw count)
  double normal();
};

// FNV-1a over raw bytes; used for config hashes and seed derivation.
uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ull);
uint64_t fnv1a64(const std::string& s, uint64_t seed = 0xcbf29ce484222325ull);

// Mix an ordered list of 64-bit components into one sub-seed.
uint64_t derive_seed(std::initializer_list<uint64_t> parts);
uint64_t derive_seed(uint64_t base, const std::string& tag);

std::string hex64(uint64_t v);

// --- little-endian binary IO -------------------------------------------------

void write_bytes(std::ostream& os, const void* p, size_t n);
void write_u8(std::ostream& os, uint8_t v);
void write_u32(std::ostream& os, uint32_t v);
void write_u64(std::ostream& os, uint64_t v);
void write_f32(std::ostream& os, float v);
void read_bytes(std::istream& is, void* p, size_t n, const char* what);
uint8_t read_u8(std::istream& is, const char* what);
uint32_t read_u32(std::istream& is, const char* what);
uint64_t read_u64(std::istream& is, const char* what);
float read_f32(std::istream& is, const char* what);

// Write via a temp file in the same directory, then rename into place, so an
// interrupted run never leaves a partially written artifact.
void atomic_write_file(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& writer);

uint64_t file_hash(const std::filesystem::path& path);

// --- logging -----------------------------------------------------------------

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3 };

LogLevel log_level();  // from XGEN_LOG (debug|info|warn|error), default info
void log(LogLevel level, const std::string& msg);
inline void log_debug(const std::string& m) { log(LogLevel::debug, m); }
inline void log_info(const std::string& m) { log(LogLevel::info, m); }
inline void log_warn(const std::string& m) { log(LogLevel::warn, m); }
inline void log_error(const std::string& m) { log(LogLevel::error, m); }

// Run fn(begin,end) over [0,count) split into contiguous chunks on up to
// `workers` threads (0 = hardware concurrency). Deterministic partitioning.
void parallel_chunks(size_t count, int workers,
                     const std::function<void(size_t, size_t)>& fn);

}  // namespace xgen
