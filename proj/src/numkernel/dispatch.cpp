#include <atomic>
#include <cstdlib>
#include <string_view>

#include "clora/kernels.hpp"

namespace clora::kernels {
namespace {

bool cpu_has_avx2() noexcept {
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable* table_for(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return &scalar_table();
    case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      if (cpu_has_avx2()) return &detail::avx2_table();
#endif
      return nullptr;
    case Isa::neon:
#if defined(__aarch64__)
      return &detail::neon_table();
#else
      return nullptr;
#endif
  }
  return nullptr;
}

const KernelTable* initial_table() noexcept {
  if (const char* env = std::getenv("CLORA_KERNELS")) {
    const std::string_view want(env);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
      if (want == isa_name(isa)) {
        if (const KernelTable* t = table_for(isa)) return t;
      }
    }
  }
  for (Isa isa : {Isa::avx2, Isa::neon}) {
    if (const KernelTable* t = table_for(isa)) return t;
  }
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() noexcept {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const char* isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::neon:
      return "neon";
  }
  return "unknown";
}

std::vector<const KernelTable*> available_tables() {
  std::vector<const KernelTable*> out;
  for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
    if (const KernelTable* t = table_for(isa)) out.push_back(t);
  }
  return out;
}

const KernelTable& active() noexcept { return *current().load(std::memory_order_relaxed); }

bool select(Isa isa) noexcept {
  const KernelTable* t = table_for(isa);
  if (t == nullptr) return false;
  current().store(t, std::memory_order_relaxed);
  return true;
}

}  // namespace clora::kernels
