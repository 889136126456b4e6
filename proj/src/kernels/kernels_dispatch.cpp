#include <atomic>
#include <cstdlib>
#include <string_view>

#include "fracmatch/error.hpp"
#include "kernels_impl.hpp"

namespace fracmatch::kernels {
namespace {

bool cpu_has_avx2() noexcept {
#if defined(FRACMATCH_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable* initial_table() noexcept {
  const char* env = std::getenv("FRACMATCH_SIMD");
  if (env != nullptr && std::string_view(env) == "scalar") return &detail::scalar_table();
#if defined(FRACMATCH_HAVE_AVX2)
  if (cpu_has_avx2()) return &detail::avx2_table();
#endif
  return &detail::scalar_table();
}

std::atomic<const KernelTable*>& current() noexcept {
  static std::atomic<const KernelTable*> ptr{initial_table()};
  return ptr;
}

}  // namespace

const char* to_string(SimdLevel level) noexcept {
  switch (level) {
    case SimdLevel::scalar: return "scalar";
    case SimdLevel::avx2: return "avx2";
  }
  return "unknown";
}

bool supported(SimdLevel level) noexcept {
  return level == SimdLevel::scalar || (level == SimdLevel::avx2 && cpu_has_avx2());
}

const KernelTable& table(SimdLevel level) {
  if (!supported(level)) {
    throw Error(ErrorCode::invalid_argument,
                std::string("SIMD level not supported on this CPU: ") + to_string(level));
  }
#if defined(FRACMATCH_HAVE_AVX2)
  if (level == SimdLevel::avx2) return detail::avx2_table();
#endif
  return detail::scalar_table();
}

const KernelTable& active() noexcept { return *current().load(std::memory_order_acquire); }

void set_simd_level(SimdLevel level) { current().store(&table(level), std::memory_order_release); }

}  // namespace fracmatch::kernels
