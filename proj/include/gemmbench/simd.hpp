#pragma once

// Dot-product GEMM with per-lane partial sums. B is transposed once so each
// c[i][j] is a contiguous dot product; lane l accumulates the terms with
// k = l (mod width) and the lanes are reduced pairwise at the end. The
// accumulation order therefore differs from the serial oracle.

#include <cstddef>
#include <string_view>

#include "gemmbench/error.hpp"
#include "gemmbench/matrix.hpp"

#if (defined(__x86_64__) || defined(__i386__)) && (defined(__GNUC__) || defined(__clang__))
#define GEMMBENCH_X86_SIMD 1
#include <immintrin.h>
#endif

namespace gemmbench {

enum class SimdWidth : int { scalar = 1, avx2 = 8, avx512 = 16 };

constexpr int lanes(SimdWidth w) noexcept { return static_cast<int>(w); }

constexpr std::string_view to_string(SimdWidth w) noexcept {
  switch (w) {
    case SimdWidth::scalar: return "scalar";
    case SimdWidth::avx2: return "avx2";
    case SimdWidth::avx512: return "avx512";
  }
  return "scalar";
}

inline bool simd_supported(SimdWidth w) noexcept {
#ifdef GEMMBENCH_X86_SIMD
  switch (w) {
    case SimdWidth::scalar: return true;
    case SimdWidth::avx2: return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    case SimdWidth::avx512: return __builtin_cpu_supports("avx512f");
  }
  return false;
#else
  return w == SimdWidth::scalar;
#endif
}

/// Widest lane width the host supports; fixed for the lifetime of the process.
inline SimdWidth detect_simd_width() noexcept {
  static const SimdWidth width = [] {
    if (simd_supported(SimdWidth::avx512)) return SimdWidth::avx512;
    if (simd_supported(SimdWidth::avx2)) return SimdWidth::avx2;
    return SimdWidth::scalar;
  }();
  return width;
}

namespace detail {

inline Matrix transposed(const Matrix& b) {
  Matrix t(b.cols(), b.rows());
  for (std::size_t k = 0; k < b.rows(); ++k)
    for (std::size_t j = 0; j < b.cols(); ++j) t(j, k) = b(k, j);
  return t;
}

inline float dot_scalar(const float* x, const float* y, std::size_t len) {
  float acc = 0.0f;
  for (std::size_t k = 0; k < len; ++k) acc += x[k] * y[k];
  return acc;
}

#ifdef GEMMBENCH_X86_SIMD

__attribute__((target("avx2,fma"))) inline float dot_avx2(const float* x, const float* y,
                                                          std::size_t len) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t k = 0;
  for (; k + 8 <= len; k += 8) {
    acc = _mm256_fmadd_ps(_mm256_loadu_ps(x + k), _mm256_loadu_ps(y + k), acc);
  }
  __m128 s = _mm_add_ps(_mm256_castps256_ps128(acc), _mm256_extractf128_ps(acc, 1));
  s = _mm_add_ps(s, _mm_movehl_ps(s, s));
  s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 0x1));
  float total = _mm_cvtss_f32(s);
  for (; k < len; ++k) total += x[k] * y[k];
  return total;
}

__attribute__((target("avx512f"))) inline float dot_avx512(const float* x, const float* y,
                                                           std::size_t len) {
  __m512 acc = _mm512_setzero_ps();
  std::size_t k = 0;
  for (; k + 16 <= len; k += 16) {
    acc = _mm512_fmadd_ps(_mm512_loadu_ps(x + k), _mm512_loadu_ps(y + k), acc);
  }
  const __m256 lo = _mm512_castps512_ps256(acc);
  const __m256 hi = _mm256_castpd_ps(_mm512_extractf64x4_pd(_mm512_castps_pd(acc), 1));
  const __m256 half = _mm256_add_ps(lo, hi);
  __m128 s = _mm_add_ps(_mm256_castps256_ps128(half), _mm256_extractf128_ps(half, 1));
  s = _mm_add_ps(s, _mm_movehl_ps(s, s));
  s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 0x1));
  float total = _mm_cvtss_f32(s);
  for (; k < len; ++k) total += x[k] * y[k];
  return total;
}

#endif

template <typename Dot>
Matrix dot_product_gemm(const Matrix& a, const Matrix& b, Dot dot) {
  require_multipliable(a, b);
  const Matrix bt = transposed(b);
  Matrix c(a.rows(), b.cols());
  const std::size_t inner = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const float* arow = a.row(i).data();
    float* crow = c.row(i).data();
    for (std::size_t j = 0; j < b.cols(); ++j) crow[j] = dot(arow, bt.row(j).data(), inner);
  }
  return c;
}

}  // namespace detail

/// Vectorized GEMM at an explicit lane width; capability error if the host
/// lacks the instructions.
inline Matrix gemm_simd(const Matrix& a, const Matrix& b, SimdWidth width) {
  if (!simd_supported(width)) {
    throw Error(Errc::capability,
                "host does not support " + std::string(to_string(width)) + " instructions");
  }
  switch (width) {
#ifdef GEMMBENCH_X86_SIMD
    case SimdWidth::avx512: return detail::dot_product_gemm(a, b, detail::dot_avx512);
    case SimdWidth::avx2: return detail::dot_product_gemm(a, b, detail::dot_avx2);
#endif
    default: return detail::dot_product_gemm(a, b, detail::dot_scalar);
  }
}

/// Vectorized GEMM at the widest lane width the host supports.
inline Matrix gemm_simd(const Matrix& a, const Matrix& b) {
  return gemm_simd(a, b, detect_simd_width());
}

}  // namespace gemmbench
