#pragma once

#include <cstddef>

// AVX2 + FMA variants, compiled in their own translation unit with
// -mavx2 -mfma. Only call these after a runtime CPU check.
namespace ovgsr::kernels::avx2 {

float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);

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

float max(const float* a, std::size_t n);
double max(const double* a, std::size_t n);

void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a,
          std::size_t lda, const float* b, std::size_t ldb, float* c,
          std::size_t ldc, bool accumulate);
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c,
          std::size_t ldc, bool accumulate);

}  // namespace ovgsr::kernels::avx2
