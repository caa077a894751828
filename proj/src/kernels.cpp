#include "ovgsr/kernels.hpp"

#include <atomic>
#include <stdexcept>

#include "kernels_scalar.hpp"
#ifdef OVGSR_HAVE_AVX2
#include "kernels_avx2.hpp"
#endif

namespace ovgsr::kernels {
namespace {

std::atomic<Backend> g_requested{Backend::Auto};

bool cpu_has_avx2() {
#ifdef OVGSR_HAVE_AVX2
  static const bool ok =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok;
#else
  return false;
#endif
}

inline bool use_avx2() {
  const Backend b = g_requested.load(std::memory_order_relaxed);
  if (b == Backend::Scalar) return false;
  return cpu_has_avx2();
}

}  // namespace

bool avx2_supported() { return cpu_has_avx2(); }

void set_backend(Backend b) {
  if (b == Backend::Avx2 && !cpu_has_avx2())
    throw std::runtime_error("kernels: AVX2 backend requested but unavailable");
  g_requested.store(b, std::memory_order_relaxed);
}

Backend active_backend() {
  return use_avx2() ? Backend::Avx2 : Backend::Scalar;
}

const char* backend_name() {
  return use_avx2() ? "avx2" : "scalar";
}

#ifdef OVGSR_HAVE_AVX2
#define OVGSR_DISPATCH(expr_avx2, expr_scalar) \
  do {                                         \
    if (use_avx2()) return expr_avx2;          \
    return expr_scalar;                        \
  } while (0)
#else
#define OVGSR_DISPATCH(expr_avx2, expr_scalar) return expr_scalar
#endif

float dot(const float* a, const float* b, std::size_t n) {
  OVGSR_DISPATCH(avx2::dot(a, b, n), scalar::dot(a, b, n));
}
double dot(const double* a, const double* b, std::size_t n) {
  OVGSR_DISPATCH(avx2::dot(a, b, n), scalar::dot(a, b, n));
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  OVGSR_DISPATCH(avx2::axpy(alpha, x, y, n), scalar::axpy(alpha, x, y, n));
}
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  OVGSR_DISPATCH(avx2::axpy(alpha, x, y, n), scalar::axpy(alpha, x, y, n));
}

void add(const float* a, const float* b, float* out, std::size_t n) {
  OVGSR_DISPATCH(avx2::add(a, b, out, n), scalar::add(a, b, out, n));
}
void add(const double* a, const double* b, double* out, std::size_t n) {
  OVGSR_DISPATCH(avx2::add(a, b, out, n), scalar::add(a, b, out, n));
}

void sub(const float* a, const float* b, float* out, std::size_t n) {
  OVGSR_DISPATCH(avx2::sub(a, b, out, n), scalar::sub(a, b, out, n));
}
void sub(const double* a, const double* b, double* out, std::size_t n) {
  OVGSR_DISPATCH(avx2::sub(a, b, out, n), scalar::sub(a, b, out, n));
}

void mul(const float* a, const float* b, float* out, std::size_t n) {
  OVGSR_DISPATCH(avx2::mul(a, b, out, n), scalar::mul(a, b, out, n));
}
void mul(const double* a, const double* b, double* out, std::size_t n) {
  OVGSR_DISPATCH(avx2::mul(a, b, out, n), scalar::mul(a, b, out, n));
}

void scale(const float* a, float alpha, float* out, std::size_t n) {
  OVGSR_DISPATCH(avx2::scale(a, alpha, out, n), scalar::scale(a, alpha, out, n));
}
void scale(const double* a, double alpha, double* out, std::size_t n) {
  OVGSR_DISPATCH(avx2::scale(a, alpha, out, n), scalar::scale(a, alpha, out, n));
}

float sum(const float* a, std::size_t n) {
  OVGSR_DISPATCH(avx2::sum(a, n), scalar::sum(a, n));
}
double sum(const double* a, std::size_t n) {
  OVGSR_DISPATCH(avx2::sum(a, n), scalar::sum(a, n));
}

float max(const float* a, std::size_t n) {
  OVGSR_DISPATCH(avx2::max(a, n), scalar::max(a, n));
}
double max(const double* a, std::size_t n) {
  OVGSR_DISPATCH(avx2::max(a, n), scalar::max(a, n));
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a,
          std::size_t lda, const float* b, std::size_t ldb, float* c,
          std::size_t ldc, bool accumulate) {
  OVGSR_DISPATCH(avx2::gemm(m, n, k, a, lda, b, ldb, c, ldc, accumulate),
                 scalar::gemm(m, n, k, a, lda, b, ldb, c, ldc, accumulate));
}
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c,
          std::size_t ldc, bool accumulate) {
  OVGSR_DISPATCH(avx2::gemm(m, n, k, a, lda, b, ldb, c, ldc, accumulate),
                 scalar::gemm(m, n, k, a, lda, b, ldb, c, ldc, accumulate));
}

#undef OVGSR_DISPATCH

}  // namespace ovgsr::kernels
