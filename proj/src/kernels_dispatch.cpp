#include <atomic>
#include <cstdlib>
#include <string>

#include "stgt/error.hpp"
#include "stgt/kernels.hpp"

namespace stgt::kernels {
namespace {

const KernelTable& table_for(Backend b) {
  if (b == Backend::Avx2 && avx2_table() != nullptr) return *avx2_table();
  return scalar_table();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{&table_for(detect_backend())};
  return slot;
}

}  // namespace

bool cpu_supports(Backend b) noexcept {
  switch (b) {
    case Backend::Scalar:
      return true;
    case Backend::Avx2:
#if defined(STGT_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return avx2_table() != nullptr && __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

Backend detect_backend() noexcept {
  if (const char* env = std::getenv("STGT_KERNELS")) {
    const std::string v(env);
    if (v == "scalar") return Backend::Scalar;
    if (v == "avx2" && cpu_supports(Backend::Avx2)) return Backend::Avx2;
  }
  return cpu_supports(Backend::Avx2) ? Backend::Avx2 : Backend::Scalar;
}

const KernelTable& active() noexcept { return *active_slot().load(std::memory_order_acquire); }

void set_backend(Backend b) {
  if (!cpu_supports(b)) {
    throw ConfigError(std::string("kernel backend '") + backend_name(b) + "' is not supported on this CPU");
  }
  active_slot().store(&table_for(b), std::memory_order_release);
}

Backend parse_backend(std::string_view name) {
  if (name == "scalar") return Backend::Scalar;
  if (name == "avx2") return Backend::Avx2;
  if (name == "auto") return detect_backend();
  throw ConfigError("unknown kernel backend '" + std::string(name) + "'");
}

const char* backend_name(Backend b) noexcept {
  return b == Backend::Avx2 ? "avx2" : "scalar";
}

ScopedBackend::ScopedBackend(Backend b) : previous_(active().backend) { set_backend(b); }
ScopedBackend::~ScopedBackend() { active_slot().store(&table_for(previous_), std::memory_order_release); }

}  // namespace stgt::kernels
