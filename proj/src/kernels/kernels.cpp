#include "xgen/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "xgen/util.hpp"

namespace xgen::kernels {

const Table* avx2_table_impl();  // defined in kernels_avx2.cpp

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok && avx2_table_impl() != nullptr;
#else
  return false;
#endif
}

const Table* avx2_table() { return avx2_supported() ? avx2_table_impl() : nullptr; }

namespace {

std::atomic<const Table*> active_table{nullptr};

const Table* pick_initial() {
  const char* env = std::getenv("XGEN_SIMD");
  if (env && std::strcmp(env, "scalar") == 0) return &scalar_table();
  if (env && std::strcmp(env, "avx2") == 0) {
    if (const Table* t = avx2_table()) return t;
    log_warn("XGEN_SIMD=avx2 requested but AVX2 unavailable; using scalar kernels");
    return &scalar_table();
  }
  if (const Table* t = avx2_table()) return t;
  return &scalar_table();
}

}  // namespace

const Table& active() {
  const Table* t = active_table.load(std::memory_order_acquire);
  if (!t) {
    t = pick_initial();
    active_table.store(t, std::memory_order_release);
  }
  return *t;
}

Backend active_backend() {
  return &active() == &scalar_table() ? Backend::scalar : Backend::avx2;
}

void set_backend(Backend b) {
  if (b == Backend::scalar) {
    active_table.store(&scalar_table(), std::memory_order_release);
    return;
  }
  const Table* t = avx2_table();
  if (!t) throw Error("AVX2 kernels unavailable on this CPU/build");
  active_table.store(t, std::memory_order_release);
}

}  // namespace xgen::kernels
