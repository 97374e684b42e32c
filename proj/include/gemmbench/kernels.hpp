#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "gemmbench/error.hpp"
#include "gemmbench/matrix.hpp"
#include "gemmbench/simd.hpp"

namespace gemmbench {

// Tier A kernels (naive, ikj, tiled, parallel) add each c[i][j]'s terms in
// increasing k with separate multiply and add roundings, so their output is
// bit-identical to serial_gemm_ref.

/// i-j-k order, one scalar accumulator per output element.
inline Matrix gemm_naive(const Matrix& a, const Matrix& b) {
  GEMMBENCH_NO_CONTRACT
  require_multipliable(a, b);
  const std::size_t n = a.rows(), m = b.cols(), inner = a.cols();
  Matrix c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      float acc = 0.0f;
      for (std::size_t k = 0; k < inner; ++k) {
        const float prod = a(i, k) * b(k, j);
        acc = acc + prod;
      }
      c(i, j) = acc;
    }
  }
  return c;
}

namespace detail {

// ikj body over output rows [row_begin, row_end).
inline void ikj_rows(const Matrix& a, const Matrix& b, Matrix& c, std::size_t row_begin,
                     std::size_t row_end) {
  GEMMBENCH_NO_CONTRACT
  const std::size_t m = b.cols(), inner = a.cols();
  for (std::size_t i = row_begin; i < row_end; ++i) {
    float* crow = c.row(i).data();
    for (std::size_t k = 0; k < inner; ++k) {
      const float aik = a(i, k);
      const float* brow = b.row(k).data();
      for (std::size_t j = 0; j < m; ++j) {
        const float prod = aik * brow[j];
        crow[j] = crow[j] + prod;
      }
    }
  }
}

}  // namespace detail

/// i-k-j order: the innermost loop streams rows of B and C.
inline Matrix gemm_ikj(const Matrix& a, const Matrix& b) {
  require_multipliable(a, b);
  Matrix c(a.rows(), b.cols());
  detail::ikj_rows(a, b, c, 0, a.rows());
  return c;
}

/// Cache-blocked product. Blocks of rows (ii), of the inner dimension (kk)
/// and of columns (jj) are visited in increasing order, which keeps each
/// element's k order intact. `tile` is clamped to the largest dimension;
/// ragged edges run short blocks rather than padding.
inline Matrix gemm_tiled(const Matrix& a, const Matrix& b, std::size_t tile) {
  GEMMBENCH_NO_CONTRACT
  require_multipliable(a, b);
  if (tile == 0) throw Error(Errc::argument, "tile must be positive");
  const std::size_t n = a.rows(), m = b.cols(), inner = a.cols();
  tile = std::min(tile, std::max({n, m, inner}));
  Matrix c(n, m);
  for (std::size_t ii = 0; ii < n; ii += tile) {
    const std::size_t i_end = std::min(ii + tile, n);
    for (std::size_t kk = 0; kk < inner; kk += tile) {
      const std::size_t k_end = std::min(kk + tile, inner);
      for (std::size_t jj = 0; jj < m; jj += tile) {
        const std::size_t j_end = std::min(jj + tile, m);
        for (std::size_t i = ii; i < i_end; ++i) {
          float* crow = c.row(i).data();
          for (std::size_t k = kk; k < k_end; ++k) {
            const float aik = a(i, k);
            const float* brow = b.row(k).data();
            for (std::size_t j = jj; j < j_end; ++j) {
              const float prod = aik * brow[j];
              crow[j] = crow[j] + prod;
            }
          }
        }
      }
    }
  }
  return c;
}

/// Splits the output rows into `workers` contiguous blocks (the first
/// rows % workers blocks get one extra row) and runs the ikj body on each
/// block in its own thread. Workers past the last row stay idle.
inline Matrix gemm_parallel(const Matrix& a, const Matrix& b, std::size_t workers) {
  require_multipliable(a, b);
  if (workers == 0) throw Error(Errc::argument, "workers must be positive");
  const std::size_t n = a.rows();
  Matrix c(n, b.cols());
  const std::size_t base = n / workers, extra = n % workers;
  std::vector<std::jthread> group;
  group.reserve(workers);
  std::size_t begin = 0;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t end = begin + base + (w < extra ? 1 : 0);
    group.emplace_back([&a, &b, &c, begin, end] {
      if (begin < end) detail::ikj_rows(a, b, c, begin, end);
    });
    begin = end;
  }
  group.clear();  // joins
  return c;
}

inline std::size_t default_workers() noexcept {
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------------
// Registry

enum class KernelId { naive, ikj, tiled, simd, parallel };

inline constexpr std::size_t kDefaultTile = 64;

constexpr std::string_view to_string(KernelId id) noexcept {
  switch (id) {
    case KernelId::naive: return "naive";
    case KernelId::ikj: return "ikj";
    case KernelId::tiled: return "tiled";
    case KernelId::simd: return "simd";
    case KernelId::parallel: return "parallel";
  }
  return "?";
}

inline std::optional<KernelId> parse_kernel_id(std::string_view name) {
  for (auto id : {KernelId::naive, KernelId::ikj, KernelId::tiled, KernelId::simd,
                  KernelId::parallel}) {
    if (to_string(id) == name) return id;
  }
  return std::nullopt;
}

struct KernelSpec {
  KernelId id = KernelId::naive;
  std::size_t tile = kDefaultTile;  // used by tiled
  std::size_t workers = 1;          // used by parallel
  bool bit_identical_tier = true;

  std::string name() const { return std::string(to_string(id)); }

  /// Tile actually applied to an n x n problem (at least 8, at most n).
  std::size_t effective_tile(std::size_t n) const {
    return std::min(std::max<std::size_t>(tile, 8), std::max<std::size_t>(n, 1));
  }
};

inline KernelSpec make_kernel_spec(KernelId id, std::size_t tile = kDefaultTile,
                                   std::size_t workers = default_workers()) {
  return KernelSpec{id, tile, workers, id != KernelId::simd};
}

/// All in-process kernels with default tunables, in a stable order.
inline std::vector<KernelSpec> kernel_registry() {
  std::vector<KernelSpec> specs;
  for (auto id : {KernelId::naive, KernelId::ikj, KernelId::tiled, KernelId::simd,
                  KernelId::parallel}) {
    specs.push_back(make_kernel_spec(id));
  }
  return specs;
}

inline std::string kernel_names() {
  std::string out;
  for (const auto& s : kernel_registry()) {
    if (!out.empty()) out += ", ";
    out += s.name();
  }
  return out;
}

inline Matrix run_kernel(const KernelSpec& spec, const Matrix& a, const Matrix& b) {
  switch (spec.id) {
    case KernelId::naive: return gemm_naive(a, b);
    case KernelId::ikj: return gemm_ikj(a, b);
    case KernelId::tiled: return gemm_tiled(a, b, spec.effective_tile(a.rows()));
    case KernelId::simd: return gemm_simd(a, b);
    case KernelId::parallel: return gemm_parallel(a, b, spec.workers);
  }
  throw Error(Errc::argument, "unknown kernel");
}

using KernelFn = std::function<Matrix(const Matrix&, const Matrix&)>;

inline KernelFn bind_kernel(const KernelSpec& spec) {
  return [spec](const Matrix& a, const Matrix& b) { return run_kernel(spec, a, b); };
}

}  // namespace gemmbench
