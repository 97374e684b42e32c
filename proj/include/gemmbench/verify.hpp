#pragma once

// Self-check of the kernel tiers on small sizes: Tier-A kernels must equal
// the serial oracle bit for bit, Tier-B kernels must stay inside the
// reassociation error envelope.

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "gemmbench/kernels.hpp"
#include "gemmbench/matrix.hpp"
#include "gemmbench/simd.hpp"

namespace gemmbench {

struct VerifyOutcome {
  std::size_t checks = 0;
  std::size_t failures = 0;
  bool ok() const noexcept { return failures == 0; }
};

/// Largest ratio |c - exact| / (slack * K * 2^-24 * sum_k |a_ik * b_kj|)
/// over all elements; <= 1 means the output is inside the envelope.
inline double reassociation_bound_ratio(const Matrix& a, const Matrix& b, const Matrix& c,
                                        double slack = 4.0) {
  require_multipliable(a, b);
  const Matrix64 exact = serial_gemm_ref64(a, b);
  const std::size_t k_dim = a.cols();
  const double unit = slack * static_cast<double>(k_dim) * std::ldexp(1.0, -24);
  double worst = 0.0;
  for (std::size_t i = 0; i < c.rows(); ++i) {
    for (std::size_t j = 0; j < c.cols(); ++j) {
      double abs_sum = 0.0;
      for (std::size_t k = 0; k < k_dim; ++k) {
        abs_sum += std::fabs(static_cast<double>(a(i, k)) * static_cast<double>(b(k, j)));
      }
      const double err = std::fabs(static_cast<double>(c(i, j)) - exact(i, j));
      if (err == 0.0) continue;
      const double limit = unit * abs_sum;
      worst = std::max(worst, limit > 0.0 ? err / limit : INFINITY);
    }
  }
  return worst;
}

inline const std::vector<std::uint64_t>& default_verify_seeds() {
  static const std::vector<std::uint64_t> seeds{42, 7, 20240601};
  return seeds;
}

/// Checks every kernel configuration for n = 1..max_n. Failures are
/// reported on `log`, one line each, followed by a summary line.
inline VerifyOutcome verify_tiers(std::size_t max_n, const std::vector<std::uint64_t>& seeds,
                                  std::ostream& log) {
  VerifyOutcome out;
  struct Variant {
    std::string name;
    KernelFn fn;
  };
  std::vector<Variant> tier_a{{"naive", gemm_naive}, {"ikj", gemm_ikj}};
  for (std::size_t tile : {1, 8, 16, 64}) {
    tier_a.push_back({"tiled(tile=" + std::to_string(tile) + ")",
                      [tile](const Matrix& a, const Matrix& b) { return gemm_tiled(a, b, tile); }});
  }
  for (std::size_t workers : {1, 2, 3, 7}) {
    tier_a.push_back({"parallel(workers=" + std::to_string(workers) + ")",
                      [workers](const Matrix& a, const Matrix& b) { return gemm_parallel(a, b, workers); }});
  }
  std::vector<SimdWidth> widths;
  for (SimdWidth w : {SimdWidth::scalar, SimdWidth::avx2, SimdWidth::avx512}) {
    if (simd_supported(w)) widths.push_back(w);
  }

  for (const std::uint64_t seed : seeds) {
    for (std::size_t n = 1; n <= max_n; ++n) {
      const Matrix a = random_matrix(n, n, mix_seed(seed, 2 * n));
      const Matrix b = random_matrix(n, n, mix_seed(seed, 2 * n + 1));
      const Matrix ref = serial_gemm_ref(a, b);
      for (const auto& v : tier_a) {
        ++out.checks;
        const Matrix c = v.fn(a, b);
        if (!bit_equal(c, ref)) {
          ++out.failures;
          log << "FAIL tier-A " << v.name << " n=" << n << " seed=" << seed << " mse=" << mse(c, ref).value
              << '\n';
        }
      }
      for (SimdWidth w : widths) {
        ++out.checks;
        const double ratio = reassociation_bound_ratio(a, b, gemm_simd(a, b, w));
        if (!(ratio <= 1.0)) {
          ++out.failures;
          log << "FAIL tier-B simd/" << to_string(w) << " n=" << n << " seed=" << seed
              << " bound ratio=" << ratio << '\n';
        }
      }
    }
  }
  log << (out.ok() ? "verify: ok, " : "verify: FAILED, ") << out.checks << " checks, " << out.failures
      << " failures\n";
  return out;
}

}  // namespace gemmbench
