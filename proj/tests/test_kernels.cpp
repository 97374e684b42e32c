#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <iostream>

#include "gemmbench/kernels.hpp"
#include "test_support.hpp"

using namespace gemmbench;

namespace {

const Matrix kA2(2, 2, {1, 2, 3, 4});
const Matrix kB2(2, 2, {5, 6, 7, 8});
const Matrix kC2(2, 2, {19, 22, 43, 50});

std::vector<std::size_t> tier_a_sizes() {
  std::vector<std::size_t> sizes;
  for (std::size_t n = 1; n <= 64; ++n) sizes.push_back(n);
  for (std::size_t n : {65, 100, 128, 257}) sizes.push_back(n);
  return sizes;
}

}  // namespace

TEST(Naive, Cases) {
  EXPECT_EQ(gemm_naive(kA2, kB2), kC2);
  const Matrix b = random_matrix(4, 4, 3);
  EXPECT_TRUE(bit_equal(gemm_naive(Matrix::identity(4), b), b));
  const Matrix x = random_matrix(64, 64, 1), y = random_matrix(64, 64, 2);
  EXPECT_TRUE(bit_equal(gemm_naive(x, y), serial_gemm_ref(x, y)));
  EXPECT_TRUE(bit_equal(gemm_naive(x, y), testing_support::scalar_triple_loop(x, y)));
}

TEST(Ikj, Cases) {
  EXPECT_EQ(gemm_ikj(kA2, kB2), kC2);
  const Matrix x = random_matrix(64, 64, 1), y = random_matrix(64, 64, 2);
  EXPECT_TRUE(bit_equal(gemm_ikj(x, y), gemm_naive(x, y)));
}

TEST(Tiled, Cases) {
  EXPECT_EQ(gemm_tiled(kA2, kB2, 64), kC2);
  const Matrix x = random_matrix(128, 128, 1), y = random_matrix(128, 128, 2);
  const Matrix ref = serial_gemm_ref(x, y);
  for (std::size_t tile : {16, 32, 64}) {
    EXPECT_TRUE(bit_equal(gemm_tiled(x, y, tile), ref)) << "tile " << tile;
  }
}

TEST(Tiled, RaggedEdges) {
  const Matrix x = random_matrix(37, 37, 5), y = random_matrix(37, 37, 6);
  EXPECT_TRUE(bit_equal(gemm_tiled(x, y, 16), serial_gemm_ref(x, y)));
  const Matrix r = random_matrix(19, 23, 5), s = random_matrix(23, 11, 6);
  EXPECT_TRUE(bit_equal(gemm_tiled(r, s, 8), serial_gemm_ref(r, s)));
}

TEST(Tiled, TileInvariance) {
  const Matrix x = random_matrix(50, 50, 8), y = random_matrix(50, 50, 9);
  const Matrix first = gemm_tiled(x, y, 1);
  for (std::size_t tile = 2; tile <= 60; ++tile) {
    ASSERT_TRUE(bit_equal(gemm_tiled(x, y, tile), first)) << "tile " << tile;
  }
}

TEST(Tiled, ZeroTileRejected) {
  EXPECT_THROW(gemm_tiled(kA2, kB2, 0), Error);
}

TEST(Parallel, Cases) {
  const Matrix x = random_matrix(256, 256, 1), y = random_matrix(256, 256, 2);
  EXPECT_TRUE(bit_equal(gemm_parallel(x, y, 1), gemm_ikj(x, y)));
  const Matrix ref = serial_gemm_ref(x, y);
  for (std::size_t w : {2, 3, 7}) {
    EXPECT_TRUE(bit_equal(gemm_parallel(x, y, w), ref)) << "workers " << w;
  }
}

TEST(Parallel, MoreWorkersThanRows) {
  const Matrix x = random_matrix(4, 4, 1), y = random_matrix(4, 4, 2);
  EXPECT_TRUE(bit_equal(gemm_parallel(x, y, 16), serial_gemm_ref(x, y)));
  EXPECT_THROW(gemm_parallel(x, y, 0), Error);
}

TEST(Simd, ExactCases) {
  for (SimdWidth w : {SimdWidth::scalar, SimdWidth::avx2, SimdWidth::avx512}) {
    if (!simd_supported(w)) continue;
    EXPECT_EQ(gemm_simd(kA2, kB2, w), kC2) << to_string(w);
    const Matrix b = random_matrix(8, 8, 4);
    EXPECT_TRUE(bit_equal(gemm_simd(Matrix::identity(8), b, w), b)) << to_string(w);
    const Matrix b32 = random_matrix(32, 32, 4);
    EXPECT_TRUE(bit_equal(gemm_simd(Matrix::identity(32), b32, w), b32)) << to_string(w);
  }
}

TEST(Simd, ErrorBoundAllWidths) {
  const std::size_t n = 512;
  const Matrix x = random_matrix(n, n, 1), y = random_matrix(n, n, 2);
  const Matrix64 ref64 = serial_gemm_ref64(x, y);
  const Matrix64 abs_sum = testing_support::abs_product64(x, y);
  float max_a = 0, max_b = 0;
  for (float v : x.data()) max_a = std::max(max_a, std::abs(v));
  for (float v : y.data()) max_b = std::max(max_b, std::abs(v));
  for (SimdWidth w : {SimdWidth::scalar, SimdWidth::avx2, SimdWidth::avx512}) {
    if (!simd_supported(w)) continue;
    const Matrix c = gemm_simd(x, y, w);
    double worst = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      worst = std::max(worst, std::abs(c.data()[i] - ref64.data()[i]));
    }
    EXPECT_LE(worst, n * 0x1p-24 * max_a * max_b * n) << to_string(w);
    EXPECT_LE(testing_support::worst_bound_ratio(c, ref64, abs_sum, 4.0, n), 1.0) << to_string(w);
  }
}

TEST(Simd, RaggedLengths) {
  for (std::size_t n : {1, 7, 9, 15, 17, 31, 33}) {
    const Matrix x = random_matrix(n, n, n), y = random_matrix(n, n, n + 1);
    const Matrix64 ref64 = serial_gemm_ref64(x, y);
    const Matrix64 abs_sum = testing_support::abs_product64(x, y);
    EXPECT_LE(testing_support::worst_bound_ratio(gemm_simd(x, y), ref64, abs_sum, 4.0, n), 1.0)
        << n;
  }
}

TEST(Simd, DeterministicAndUnsupportedWidth) {
  const Matrix x = random_matrix(70, 70, 1), y = random_matrix(70, 70, 2);
  EXPECT_TRUE(bit_equal(gemm_simd(x, y), gemm_simd(x, y)));
  EXPECT_TRUE(simd_supported(SimdWidth::scalar));
  for (SimdWidth w : {SimdWidth::avx2, SimdWidth::avx512}) {
    if (simd_supported(w)) continue;
    EXPECT_THROW(gemm_simd(x, y, w), Error);
  }
}

TEST(Kernels, ShapeSafety) {
  const Matrix a(3, 4), b(3, 4);
  for (const auto& spec : kernel_registry()) {
    try {
      run_kernel(spec, a, b);
      FAIL() << spec.name();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::shape) << spec.name();
    }
  }
}

TEST(Kernels, TierABitIdentity) {
  for (std::size_t n : tier_a_sizes()) {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
      const Matrix a = random_matrix(n, n, mix_seed(seed, 0));
      const Matrix b = random_matrix(n, n, mix_seed(seed, 1));
      const Matrix ref = serial_gemm_ref(a, b);
      ASSERT_TRUE(bit_equal(gemm_naive(a, b), ref)) << n;
      ASSERT_TRUE(bit_equal(gemm_ikj(a, b), ref)) << n;
      for (std::size_t tile : {1, 8, 16, 64}) ASSERT_TRUE(bit_equal(gemm_tiled(a, b, tile), ref));
      for (std::size_t w : {1, 2, 3, 7}) ASSERT_TRUE(bit_equal(gemm_parallel(a, b, w), ref));
    }
  }
}

TEST(Kernels, RepeatedCallsDeterministic) {
  const Matrix a = random_matrix(45, 45, 1), b = random_matrix(45, 45, 2);
  for (const auto& spec : kernel_registry()) {
    EXPECT_TRUE(bit_equal(run_kernel(spec, a, b), run_kernel(spec, a, b))) << spec.name();
  }
}

TEST(Registry, Contents) {
  const auto reg = kernel_registry();
  std::vector<std::string> names;
  for (const auto& s : reg) names.push_back(s.name());
  EXPECT_EQ(names, (std::vector<std::string>{"naive", "ikj", "tiled", "simd", "parallel"}));
  for (const auto& s : reg) {
    EXPECT_EQ(s.bit_identical_tier, s.id != KernelId::simd) << s.name();
    if (s.id == KernelId::tiled) EXPECT_EQ(s.tile, 64u);
    if (s.id == KernelId::parallel) EXPECT_EQ(s.workers, default_workers());
  }
  EXPECT_EQ(parse_kernel_id("tiled"), KernelId::tiled);
  EXPECT_FALSE(parse_kernel_id("nosuch").has_value());
}

TEST(Registry, EffectiveTileClamp) {
  KernelSpec s = make_kernel_spec(KernelId::tiled, 4);
  EXPECT_EQ(s.effective_tile(100), 8u);
  s.tile = 64;
  EXPECT_EQ(s.effective_tile(32), 32u);
  EXPECT_EQ(s.effective_tile(3), 3u);
}

// Qualitative loop-order check at N=1024; recorded, not asserted.
TEST(Kernels, IkjFasterThanNaiveRecorded) {
  if (!std::getenv("GEMMBENCH_LIVE_PERF")) GTEST_SKIP() << "set GEMMBENCH_LIVE_PERF=1";
  const Matrix a = random_matrix(1024, 1024, 1), b = random_matrix(1024, 1024, 2);
  auto time = [&](auto fn) {
    const auto t0 = std::chrono::steady_clock::now();
    (void)fn(a, b);
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  };
  const double naive_ms = time(gemm_naive);
  const double ikj_ms = time(gemm_ikj);
  std::cout << "naive " << naive_ms << " ms, ikj " << ikj_ms << " ms\n";
  RecordProperty("naive_ms", std::to_string(naive_ms));
  RecordProperty("ikj_ms", std::to_string(ikj_ms));
}
