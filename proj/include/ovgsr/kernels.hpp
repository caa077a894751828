#pragma once

#include <cstddef>

// Low-level numeric kernels. Every operation has a portable scalar
// reference implementation and, on x86, an AVX2 variant. The active
// variant is picked once at runtime from CPUID and can be forced
// process-wide (tests force both and compare).
//
// All pointer arguments must reference non-overlapping buffers unless
// a parameter is documented as in/out.
namespace ovgsr::kernels {

enum class Backend {
  Auto,    // pick the widest variant the CPU supports
  Scalar,  // force the reference implementation
  Avx2,    // force AVX2 (errors if unsupported)
};

// Forces a backend for the whole process. Backend::Avx2 throws
// std::runtime_error when the binary or CPU lacks AVX2 support.
void set_backend(Backend b);

// Backend currently in effect after Auto resolution.
Backend active_backend();
const char* backend_name();

bool avx2_supported();

float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);

// y += alpha * x
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);

void add(const float* a, const float* b, float* out, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);

void sub(const float* a, const float* b, float* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);

void mul(const float* a, const float* b, float* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);

void scale(const float* a, float alpha, float* out, std::size_t n);
void scale(const double* a, double alpha, double* out, std::size_t n);

float sum(const float* a, std::size_t n);
double sum(const double* a, std::size_t n);

// Maximum element; n must be >= 1.
float max(const float* a, std::size_t n);
double max(const double* a, std::size_t n);

// C = A * B, or C += A * B when accumulate is true.
// A is m x k (row stride lda), B is k x n (row stride ldb),
// C is m x n (row stride ldc). Row-major throughout.
void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a,
          std::size_t lda, const float* b, std::size_t ldb, float* c,
          std::size_t ldc, bool accumulate);
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c,
          std::size_t ldc, bool accumulate);

}  // namespace ovgsr::kernels
