#include <atomic>
#include <cstdlib>
#include <string>

#include "chmc/simd/kernels.hpp"

namespace chmc::simd {

const KernelTable* avx2_table_unchecked();

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* pick_initial() {
  const KernelTable* avx2 = avx2_kernels();
  if (const char* env = std::getenv("CHMC_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return &scalar_kernels();
    if (want == "avx2" && avx2 != nullptr) return avx2;
  }
  return avx2 != nullptr ? avx2 : &scalar_kernels();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{pick_initial()};
  return table;
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const bool supported = cpu_has_avx2();
  return supported ? avx2_table_unchecked() : nullptr;
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

Backend active_backend() { return active().backend; }

bool set_backend(Backend backend) {
  const KernelTable* table = backend == Backend::scalar ? &scalar_kernels() : avx2_kernels();
  if (table == nullptr) return false;
  current().store(table, std::memory_order_relaxed);
  return true;
}

std::string_view backend_name(Backend backend) {
  return backend == Backend::avx2 ? "avx2" : "scalar";
}

}  // namespace chmc::simd
