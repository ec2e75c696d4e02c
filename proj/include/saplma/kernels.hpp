#pragma once

// Dense inner loops used by the probe network. Every routine has a scalar
// reference implementation plus SIMD variants (AVX2+FMA on x86-64, NEON on
// aarch64); the variant is chosen once at startup from the CPU's features and
// may be pinned with the SAPLMA_ISA environment variable or select().
//
// Elementwise routines (axpy, widen, adam_update) round identically on all
// paths. dot() reassociates its sum, so variants agree to a relative error
// bounded by n * eps * sum|a_i b_i|, not bitwise.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace saplma::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view to_string(Isa isa);

struct AdamCoefficients {
  double learning_rate;
  double beta1;
  double beta2;
  double epsilon;
  double bias_correction1; // 1 - beta1^t
  double bias_correction2; // 1 - beta2^t
};

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // dst[i] = double(src[i])
  void (*widen)(const float* src, double* dst, std::size_t n);
  void (*adam_update)(double* param, double* m, double* v, const double* grad, std::size_t n,
                      const AdamCoefficients& c);
};

// Whether this build and this CPU can run the given variant.
bool available(Isa isa);

// ISAs usable on this machine, scalar first.
std::vector<Isa> available_isas();

const KernelTable& table(Isa isa);

// The variant currently used by the free functions below.
const KernelTable& active();

// Pin the active variant. Throws Error{parameter} if unavailable.
void select(Isa isa);

// Parse "scalar" / "avx2" / "neon". Throws Error{parameter}.
Isa parse_isa(std::string_view name);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

inline void widen(std::span<const float> src, std::span<double> dst) {
  active().widen(src.data(), dst.data(), src.size());
}

} // namespace saplma::kernels
