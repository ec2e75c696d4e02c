#include <cmath>

#include <arm_neon.h>

#include "kernels_impl.hpp"

namespace saplma::kernels::detail {

namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  float64x2_t acc2 = vdupq_n_f64(0.0);
  float64x2_t acc3 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
    acc2 = vfmaq_f64(acc2, vld1q_f64(a + i + 4), vld1q_f64(b + i + 4));
    acc3 = vfmaq_f64(acc3, vld1q_f64(a + i + 6), vld1q_f64(b + i + 6));
  }
  for (; i + 2 <= n; i += 2) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
  }
  double acc = vaddvq_f64(vaddq_f64(vaddq_f64(acc0, acc1), vaddq_f64(acc2, acc3)));
  for (; i < n; ++i) {
    acc += a[i] * b[i];
  }
  return acc;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(va, vld1q_f64(x + i))));
  }
  for (; i < n; ++i) {
    y[i] += alpha * x[i];
  }
}

void widen_neon(const float* src, double* dst, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(dst + i, vcvt_f64_f32(vld1_f32(src + i)));
  }
  for (; i < n; ++i) {
    dst[i] = static_cast<double>(src[i]);
  }
}

void adam_neon(double* param, double* m, double* v, const double* grad, std::size_t n,
               const AdamCoefficients& c) {
  const float64x2_t b1 = vdupq_n_f64(c.beta1);
  const float64x2_t b2 = vdupq_n_f64(c.beta2);
  const float64x2_t omb1 = vdupq_n_f64(1.0 - c.beta1);
  const float64x2_t omb2 = vdupq_n_f64(1.0 - c.beta2);
  const float64x2_t bc1 = vdupq_n_f64(c.bias_correction1);
  const float64x2_t bc2 = vdupq_n_f64(c.bias_correction2);
  const float64x2_t lr = vdupq_n_f64(c.learning_rate);
  const float64x2_t eps = vdupq_n_f64(c.epsilon);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t g = vld1q_f64(grad + i);
    const float64x2_t mi = vaddq_f64(vmulq_f64(b1, vld1q_f64(m + i)), vmulq_f64(omb1, g));
    const float64x2_t vi =
        vaddq_f64(vmulq_f64(b2, vld1q_f64(v + i)), vmulq_f64(omb2, vmulq_f64(g, g)));
    vst1q_f64(m + i, mi);
    vst1q_f64(v + i, vi);
    const float64x2_t step = vdivq_f64(vmulq_f64(lr, vdivq_f64(mi, bc1)),
                                       vaddq_f64(vsqrtq_f64(vdivq_f64(vi, bc2)), eps));
    vst1q_f64(param + i, vsubq_f64(vld1q_f64(param + i), step));
  }
  if (i < n) {
    scalar_table.adam_update(param + i, m + i, v + i, grad + i, n - i, c);
  }
}

} // namespace

const KernelTable neon_table{Isa::neon, dot_neon, axpy_neon, widen_neon, adam_neon};

} // namespace saplma::kernels::detail
