#include <atomic>
#include <cstdlib>
#include <string>

#include "kernels_impl.hpp"
#include "saplma/error.hpp"

namespace saplma::kernels {

std::string_view to_string(Isa isa) {
  switch (isa) {
  case Isa::scalar: return "scalar";
  case Isa::avx2: return "avx2";
  case Isa::neon: return "neon";
  }
  return "unknown";
}

Isa parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::scalar;
  if (name == "avx2") return Isa::avx2;
  if (name == "neon") return Isa::neon;
  fail(ErrorKind::parameter, "unknown kernel ISA '" + std::string(name) + "'");
}

bool available(Isa isa) {
  switch (isa) {
  case Isa::scalar:
    return true;
  case Isa::avx2:
#if defined(SAPLMA_HAVE_AVX2)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
  case Isa::neon:
#if defined(SAPLMA_HAVE_NEON)
    return true;
#else
    return false;
#endif
  }
  return false;
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
    if (available(isa)) {
      out.push_back(isa);
    }
  }
  return out;
}

const KernelTable& table(Isa isa) {
  if (!available(isa)) {
    fail(ErrorKind::parameter, "kernel ISA '" + std::string(to_string(isa)) + "' not available");
  }
  switch (isa) {
#if defined(SAPLMA_HAVE_AVX2)
  case Isa::avx2: return detail::avx2_table;
#endif
#if defined(SAPLMA_HAVE_NEON)
  case Isa::neon: return detail::neon_table;
#endif
  default: return detail::scalar_table;
  }
}

namespace {

const KernelTable* initial_table() {
  if (const char* env = std::getenv("SAPLMA_ISA"); env != nullptr && *env != '\0') {
    return &table(parse_isa(env));
  }
  const auto isas = available_isas();
  return &table(isas.back());
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> ptr{initial_table()};
  return ptr;
}

} // namespace

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void select(Isa isa) { current().store(&table(isa), std::memory_order_release); }

} // namespace saplma::kernels
