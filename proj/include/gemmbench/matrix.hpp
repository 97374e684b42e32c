#pragma once

// Dense row-major matrices, deterministic operand generation, the serial
// reference products every kernel is judged against, MSE, and the GEMMMAT1
// interchange file.

#include <algorithm>
#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gemmbench/error.hpp"

#if defined(__clang__)
#define GEMMBENCH_NO_CONTRACT _Pragma("clang fp contract(off)")
#else
// GCC ignores STDC FP_CONTRACT; the gemmbench target passes -ffp-contract=off.
#define GEMMBENCH_NO_CONTRACT
#endif

namespace gemmbench {

/// Number of elements of a rows x cols matrix, or a size error when it
/// exceeds `max_elements` or overflows size_t.
inline std::size_t checked_element_count(std::size_t rows, std::size_t cols,
                                         std::size_t max_elements) {
  if (rows == 0 || cols == 0) {
    throw Error(Errc::size, "matrix dimensions must be positive, got " + std::to_string(rows) +
                                "x" + std::to_string(cols));
  }
  if (rows > max_elements / cols) {
    throw Error(Errc::size, std::to_string(rows) + "x" + std::to_string(cols) +
                                " exceeds the element budget of " + std::to_string(max_elements));
  }
  return rows * cols;
}

template <typename T>
class BasicMatrix {
 public:
  using value_type = T;

  static constexpr std::size_t max_elements =
      static_cast<std::size_t>(std::numeric_limits<std::ptrdiff_t>::max()) / sizeof(T);

  /// Zero-filled rows x cols matrix.
  BasicMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(checked_element_count(rows, cols, max_elements), T{0}) {}

  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != checked_element_count(rows, cols, max_elements)) {
      throw Error(Errc::size, "data length " + std::to_string(data_.size()) +
                                  " does not match " + std::to_string(rows) + "x" +
                                  std::to_string(cols));
    }
  }

  static BasicMatrix identity(std::size_t n) {
    BasicMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  std::span<T> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const T> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  /// Value equality; +0 and -0 compare equal, NaN never does.
  friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<float>;
using Matrix64 = BasicMatrix<double>;

/// True when both matrices have the same shape and identical element bits.
template <typename T>
bool bit_equal(const BasicMatrix<T>& x, const BasicMatrix<T>& y) {
  return x.rows() == y.rows() && x.cols() == y.cols() &&
         std::memcmp(x.data().data(), y.data().data(), x.size() * sizeof(T)) == 0;
}

// ---------------------------------------------------------------------------
// Operand generation

/// SplitMix64 output finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct SplitMix64 {
  static constexpr std::uint64_t gamma = 0x9e3779b97f4a7c15ULL;
  std::uint64_t state;

  constexpr std::uint64_t next() noexcept {
    state += gamma;
    return mix64(state);
  }
};

/// Combines a seed with a salt (flat index, matrix size, operand tag).
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept {
  return seed ^ mix64(salt + SplitMix64::gamma);
}

/// Element at flat index `index` of the stream for `seed`: uniform on the
/// 2^24-point grid of [-1, 1).
constexpr float random_element(std::uint64_t seed, std::uint64_t index) noexcept {
  SplitMix64 gen{mix_seed(seed, index)};
  const auto bits24 = static_cast<std::uint32_t>(gen.next() >> 40);
  return static_cast<float>(bits24) * 0x1p-23f - 1.0f;
}

/// Overwrites every element of `m` from the order-independent stream for `seed`.
inline void fill_random(Matrix& m, std::uint64_t seed) {
  auto d = m.data();
  for (std::size_t idx = 0; idx < d.size(); ++idx) d[idx] = random_element(seed, idx);
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Matrix m(rows, cols);
  fill_random(m, seed);
  return m;
}

// ---------------------------------------------------------------------------
// Reference products

template <typename A, typename B>
void require_multipliable(const BasicMatrix<A>& a, const BasicMatrix<B>& b) {
  if (a.cols() != b.rows()) {
    throw Error(Errc::shape, "cannot multiply " + std::to_string(a.rows()) + "x" +
                                 std::to_string(a.cols()) + " by " + std::to_string(b.rows()) +
                                 "x" + std::to_string(b.cols()));
  }
}

namespace detail {

// c[i][j] = ((0 + a[i][0]*b[0][j]) + a[i][1]*b[1][j]) + ...  in type Acc.
// Rows of c are swept once per k so every element sees its terms in
// increasing k with one rounding per multiply and per add.
template <typename Acc>
BasicMatrix<Acc> reference_product(const Matrix& a, const Matrix& b) {
  GEMMBENCH_NO_CONTRACT
  require_multipliable(a, b);
  const std::size_t n = a.rows(), m = b.cols(), inner = a.cols();
  BasicMatrix<Acc> c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    Acc* crow = c.row(i).data();
    for (std::size_t k = 0; k < inner; ++k) {
      const Acc aik = static_cast<Acc>(a(i, k));
      const float* brow = b.row(k).data();
      for (std::size_t j = 0; j < m; ++j) {
        const Acc prod = aik * static_cast<Acc>(brow[j]);
        crow[j] = crow[j] + prod;
      }
    }
  }
  return c;
}

}  // namespace detail

/// Single-precision serial oracle: strict multiply-then-add, k ascending.
inline Matrix serial_gemm_ref(const Matrix& a, const Matrix& b) {
  return detail::reference_product<float>(a, b);
}

/// Same product carried out entirely in double precision.
inline Matrix64 serial_gemm_ref64(const Matrix& a, const Matrix& b) {
  return detail::reference_product<double>(a, b);
}

// ---------------------------------------------------------------------------
// Error metric

struct MseValue {
  double value = 0.0;
  friend bool operator==(const MseValue&, const MseValue&) = default;
};

template <typename T, typename U>
void require_same_shape(const BasicMatrix<T>& x, const BasicMatrix<U>& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw Error(Errc::shape, "shape mismatch " + std::to_string(x.rows()) + "x" +
                                 std::to_string(x.cols()) + " vs " + std::to_string(y.rows()) +
                                 "x" + std::to_string(y.cols()));
  }
}

/// Mean of squared elementwise differences, accumulated in double.
inline MseValue mse(const Matrix& x, const Matrix& y) {
  require_same_shape(x, y);
  const auto xs = x.data();
  const auto ys = y.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double d = static_cast<double>(xs[i]) - static_cast<double>(ys[i]);
    sum += d * d;
  }
  return {sum / static_cast<double>(xs.size())};
}

// ---------------------------------------------------------------------------
// GEMMMAT1 files: 8-byte magic, u32 rows, u32 cols (little-endian), then
// rows*cols little-endian binary32 values, nothing after.

inline constexpr std::array<char, 8> kMatrixMagic{'G', 'E', 'M', 'M', 'M', 'A', 'T', '1'};
inline constexpr std::size_t kMatrixHeaderBytes = 16;

namespace detail {

inline void put_u32le(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<unsigned char>(v >> s));
}

inline std::uint32_t get_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

}  // namespace detail

inline std::vector<unsigned char> encode_matrix(const Matrix& m) {
  constexpr auto u32max = std::numeric_limits<std::uint32_t>::max();
  if (m.rows() > u32max || m.cols() > u32max) {
    throw Error(Errc::size, "matrix too large for GEMMMAT1 header");
  }
  std::vector<unsigned char> out(kMatrixMagic.begin(), kMatrixMagic.end());
  out.reserve(kMatrixHeaderBytes + m.size() * 4);
  detail::put_u32le(out, static_cast<std::uint32_t>(m.rows()));
  detail::put_u32le(out, static_cast<std::uint32_t>(m.cols()));
  for (float v : m.data()) detail::put_u32le(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline Matrix decode_matrix(std::span<const unsigned char> bytes) {
  if (bytes.size() < kMatrixHeaderBytes) {
    throw Error(Errc::format, "GEMMMAT1 header truncated (" + std::to_string(bytes.size()) +
                                  " bytes)");
  }
  if (!std::equal(kMatrixMagic.begin(), kMatrixMagic.end(), bytes.begin())) {
    throw Error(Errc::format, "bad magic, expected GEMMMAT1");
  }
  const std::uint32_t rows = detail::get_u32le(bytes.data() + 8);
  const std::uint32_t cols = detail::get_u32le(bytes.data() + 12);
  if (rows == 0 || cols == 0) throw Error(Errc::format, "zero dimension in GEMMMAT1 header");
  const std::uint64_t expected =
      kMatrixHeaderBytes + static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols) * 4;
  if (bytes.size() != expected) {
    throw Error(Errc::format, "payload is " + std::to_string(bytes.size()) + " bytes, " +
                                  std::to_string(rows) + "x" + std::to_string(cols) +
                                  " requires " + std::to_string(expected));
  }
  Matrix m(rows, cols);
  auto d = m.data();
  const unsigned char* p = bytes.data() + kMatrixHeaderBytes;
  for (std::size_t i = 0; i < d.size(); ++i, p += 4) {
    d[i] = std::bit_cast<float>(detail::get_u32le(p));
  }
  return m;
}

inline void write_matrix_file(const std::filesystem::path& path, const Matrix& m) {
  const auto bytes = encode_matrix(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

inline Matrix read_matrix_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(Errc::io, "read failed for " + path.string());
  return decode_matrix(bytes);
}

}  // namespace gemmbench
