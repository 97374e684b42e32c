#pragma once

// Benchmark protocol: untimed warmup, timed repetitions bracketing only the
// kernel call, aggregate statistics, and the size-major sweep driver.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <functional>
#include <new>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "gemmbench/energy.hpp"
#include "gemmbench/error.hpp"
#include "gemmbench/kernels.hpp"
#include "gemmbench/matrix.hpp"

namespace gemmbench {

struct TimingStats {
  std::vector<double> samples_ms;
  double mean_ms = 0.0;
  double std_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
  double median_ms = 0.0;

  friend bool operator==(const TimingStats&, const TimingStats&) = default;
};

/// Mean, population standard deviation, min, max, and lower-middle median.
inline TimingStats aggregate(std::vector<double> samples_ms) {
  if (samples_ms.empty()) throw Error(Errc::argument, "no timing samples");
  TimingStats s;
  std::vector<double> sorted = samples_ms;
  std::sort(sorted.begin(), sorted.end());
  const double count = static_cast<double>(sorted.size());
  // Sorted summation makes the stats independent of sample order.
  const double sum = std::accumulate(sorted.begin(), sorted.end(), 0.0);
  s.mean_ms = std::clamp(sum / count, sorted.front(), sorted.back());
  double sq = 0.0;
  for (double v : sorted) sq += (v - s.mean_ms) * (v - s.mean_ms);
  s.std_ms = std::sqrt(sq / count);
  s.min_ms = sorted.front();
  s.max_ms = sorted.back();
  s.median_ms = sorted[(sorted.size() - 1) / 2];
  s.samples_ms = std::move(samples_ms);
  return s;
}

// ---------------------------------------------------------------------------
// Timing protocol

/// Monotonic clock returning time since an arbitrary epoch.
using Clock = std::function<std::chrono::nanoseconds()>;

inline Clock steady_clock() {
  return [] {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
        std::chrono::steady_clock::now().time_since_epoch());
  };
}

struct TimedRun {
  TimingStats timing;
  Matrix output;
};

/// Runs `warmup` untimed and `reps` timed executions of `kernel` on
/// pre-generated operands. Only the kernel call sits between the clock
/// reads; the returned output is the last repetition's.
inline TimedRun time_kernel(const KernelFn& kernel, const Matrix& a, const Matrix& b, int reps,
                            int warmup, const Clock& clock = steady_clock()) {
  if (reps < 1) throw Error(Errc::argument, "reps must be >= 1");
  if (warmup < 0) throw Error(Errc::argument, "warmup must be >= 0");
  for (int w = 0; w < warmup; ++w) (void)kernel(a, b);

  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(reps));
  std::optional<Matrix> last;
#ifndef NDEBUG
  std::optional<Matrix> first;
#endif
  for (int r = 0; r < reps; ++r) {
    last.reset();
    const auto t0 = clock();
    Matrix c = kernel(a, b);
    const auto t1 = clock();
    if (t1 < t0) throw Error(Errc::measurement, "clock went backwards");
    samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
#ifndef NDEBUG
    if (r == 0 && reps > 1) first = c;
#endif
    last = std::move(c);
  }
#ifndef NDEBUG
  if (first && !bit_equal(*first, *last)) {
    throw Error(Errc::measurement, "kernel output differs between repetitions");
  }
#endif
  return {aggregate(std::move(samples)), std::move(*last)};
}

// ---------------------------------------------------------------------------
// Size lists

inline void validate_sizes(const std::vector<std::size_t>& sizes) {
  if (sizes.empty()) throw Error(Errc::argument, "size list is empty");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] == 0) throw Error(Errc::argument, "sizes must be positive");
    if (i > 0 && sizes[i] <= sizes[i - 1]) {
      throw Error(Errc::argument, "sizes must be strictly increasing");
    }
  }
}

/// first, first*factor, ... up to and including `last` when reached exactly.
inline std::vector<std::size_t> geometric_sizes(std::size_t first, std::size_t last,
                                                std::size_t factor = 2) {
  if (first == 0 || factor < 2 || last < first) {
    throw Error(Errc::argument, "invalid geometric size range");
  }
  std::vector<std::size_t> sizes;
  for (std::size_t n = first; n <= last; n *= factor) {
    sizes.push_back(n);
    if (n > last / factor) break;
  }
  return sizes;
}

inline constexpr std::size_t kDefaultFirstSize = 32;
inline constexpr std::size_t kDefaultSizeCap = 2048;

inline std::vector<std::size_t> default_sizes(std::size_t cap = kDefaultSizeCap) {
  return geometric_sizes(kDefaultFirstSize, cap, 2);
}

/// Parses "32,64,128" or the geometric form "A..BxF".
inline std::vector<std::size_t> parse_sizes(std::string_view text) {
  auto to_size = [&](std::string_view s) {
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || p != s.data() + s.size() || v == 0) {
      throw Error(Errc::usage, "bad size '" + std::string(s) + "' in '" + std::string(text) + "'");
    }
    return v;
  };
  std::vector<std::size_t> sizes;
  if (const auto dots = text.find(".."); dots != std::string_view::npos) {
    const auto x = text.find('x', dots);
    if (x == std::string_view::npos) {
      throw Error(Errc::usage, "geometric sizes need the form A..BxF, got '" + std::string(text) + "'");
    }
    const std::size_t factor = to_size(text.substr(x + 1));
    if (factor < 2) throw Error(Errc::usage, "geometric factor must be >= 2");
    sizes = geometric_sizes(to_size(text.substr(0, dots)), to_size(text.substr(dots + 2, x - dots - 2)),
                            factor);
  } else {
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto comma = text.find(',', pos);
      sizes.push_back(to_size(text.substr(pos, comma == std::string_view::npos ? comma : comma - pos)));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
  }
  try {
    validate_sizes(sizes);
  } catch (const Error& e) {
    throw Error(Errc::usage, e.what());
  }
  return sizes;
}

// ---------------------------------------------------------------------------
// Sweep configuration and results

enum class EnergyMode { none, scoped, process };

constexpr std::string_view to_string(EnergyMode m) noexcept {
  switch (m) {
    case EnergyMode::none: return "none";
    case EnergyMode::scoped: return "scoped";
    case EnergyMode::process: return "process";
  }
  return "?";
}

struct RunConfig {
  std::vector<std::size_t> sizes = default_sizes();
  std::vector<std::string> kernel_ids = {"naive", "ikj", "tiled", "simd", "parallel"};
  int time_reps = 10;
  int energy_reps = 20;
  int warmup = 1;
  std::uint64_t seed = 42;
  std::size_t tile = kDefaultTile;
  std::size_t workers = default_workers();
  EnergyMode energy_mode = EnergyMode::none;

  void validate() const {
    validate_sizes(sizes);
    if (time_reps < 1) throw Error(Errc::argument, "time_reps must be >= 1");
    if (energy_reps < 1) throw Error(Errc::argument, "energy_reps must be >= 1");
    if (warmup < 0) throw Error(Errc::argument, "warmup must be >= 0");
    if (tile < 1) throw Error(Errc::argument, "tile must be >= 1");
    if (workers < 1) throw Error(Errc::argument, "workers must be >= 1");
  }
};

/// Seeds of the two operands at size n.
inline std::uint64_t operand_seed(std::uint64_t seed, std::size_t n, int which) {
  return mix_seed(mix_seed(seed, n), static_cast<std::uint64_t>(which));
}

struct HostInfo {
  std::string cpu_model;
  unsigned logical_cores = 0;
  int lane_width = 1;
  friend bool operator==(const HostInfo&, const HostInfo&) = default;
};

inline HostInfo detect_host() {
  HostInfo h;
  h.logical_cores = std::max(1u, std::thread::hardware_concurrency());
  h.lane_width = lanes(detect_simd_width());
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.starts_with("model name")) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) h.cpu_model = std::string(detail::trim(line.substr(colon + 1)));
      break;
    }
  }
  if (h.cpu_model.empty()) h.cpu_model = "unknown";
  return h;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  ::gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Handshake metadata of an external backend.
struct BackendInfo {
  int protocol_version = 1;
  std::string name;
  std::string device;
  bool includes_transfer_time = false;
  bool reports_energy = false;
  friend bool operator==(const BackendInfo&, const BackendInfo&) = default;
};

struct Tunables {
  std::size_t tile = kDefaultTile;
  std::size_t workers = 1;
  std::uint64_t seed = 42;
  int time_reps = 10;
  int energy_reps = 20;
  int warmup = 1;
  friend bool operator==(const Tunables&, const Tunables&) = default;
};

enum class CellStatus { ok, failed };

/// One (kernel, n) benchmark cell; serialized one per line as a result row.
struct Measurement {
  std::string timestamp;
  HostInfo host;
  std::string kernel;
  std::optional<BackendInfo> backend;
  bool bit_identical_tier = false;
  std::size_t n = 0;
  std::optional<TimingStats> timing;  // absent on failed cells
  MseValue mse;
  std::optional<EnergyReading> energy;
  Tunables tunables;
  CellStatus status = CellStatus::ok;
  std::string message;

  bool ok() const noexcept { return status == CellStatus::ok; }
  friend bool operator==(const Measurement&, const Measurement&) = default;
};

// ---------------------------------------------------------------------------
// Sweep driver

struct KernelEntry {
  KernelSpec spec;
  KernelFn fn;
};

/// Builds kernel entries for the requested ids with the configured tunables.
/// Unknown ids are a usage error naming the valid kernels.
inline std::vector<KernelEntry> resolve_kernels(const RunConfig& cfg) {
  std::vector<KernelEntry> out;
  for (const auto& name : cfg.kernel_ids) {
    const auto id = parse_kernel_id(name);
    if (!id) {
      throw Error(Errc::usage, "unknown kernel '" + name + "'; valid kernels: " + kernel_names());
    }
    const KernelSpec spec = make_kernel_spec(*id, cfg.tile, cfg.workers);
    out.push_back({spec, bind_kernel(spec)});
  }
  return out;
}

struct ExternalRun {
  std::vector<double> per_rep_ms;
  Matrix output;
  std::optional<double> energy_j;  // total over the timed repetitions
};

/// An out-of-process GEMM implementation (see backend.hpp).
class ExternalKernel {
 public:
  virtual ~ExternalKernel() = default;
  virtual const BackendInfo& info() const = 0;
  virtual ExternalRun run(const Matrix& a, const Matrix& b, int reps, int warmup) = 0;
};

struct SweepHooks {
  Clock clock = steady_clock();
  /// Reference product, overridable so tests can count invocations.
  std::function<Matrix(const Matrix&, const Matrix&)> oracle = serial_gemm_ref;
  /// Called after each completed cell, outside every timed region.
  std::function<void(const Measurement&)> on_row;
  /// Recorded on every row when energy was requested but is unavailable.
  std::string energy_note;
  HostInfo host = detect_host();
};

namespace detail {

inline Measurement cell_skeleton(const RunConfig& cfg, const SweepHooks& hooks, std::size_t n) {
  Measurement m;
  m.timestamp = utc_timestamp();
  m.host = hooks.host;
  m.n = n;
  m.tunables = {cfg.tile, cfg.workers, cfg.seed, cfg.time_reps, cfg.energy_reps, cfg.warmup};
  return m;
}

inline void fail_cell(Measurement& m, const std::string& why) {
  m.status = CellStatus::failed;
  m.timing.reset();
  m.energy.reset();
  m.mse = {};
  m.message = why;
}

template <typename Body>
void fail_soft(Measurement& m, Body&& body) {
  try {
    body();
  } catch (const std::bad_alloc&) {
    fail_cell(m, "out of memory");
  } catch (const std::exception& e) {
    fail_cell(m, e.what());
  }
}

inline void append_note(std::string& message, const std::string& note) {
  if (note.empty()) return;
  if (!message.empty()) message += "; ";
  message += note;
}

}  // namespace detail

/// Runs every (n, kernel) cell in size-major order. A failing cell is
/// recorded and the sweep continues. `energy` may be null when the mode is
/// none or the requested scope is unavailable on this host.
inline std::vector<Measurement> run_sweep(const RunConfig& cfg,
                                          const std::vector<KernelEntry>& kernels,
                                          const std::vector<ExternalKernel*>& backends,
                                          EnergyProvider* energy, SweepHooks hooks = {}) {
  cfg.validate();
  const bool want_energy = cfg.energy_mode != EnergyMode::none;
  std::vector<Measurement> rows;

  auto emit = [&](Measurement m) {
    if (hooks.on_row) hooks.on_row(m);
    rows.push_back(std::move(m));
  };

  for (const std::size_t n : cfg.sizes) {
    std::optional<Matrix> a, b, ref;
    std::string setup_error;
    try {
      a.emplace(random_matrix(n, n, operand_seed(cfg.seed, n, 0)));
      b.emplace(random_matrix(n, n, operand_seed(cfg.seed, n, 1)));
      ref.emplace(hooks.oracle(*a, *b));
    } catch (const std::bad_alloc&) {
      setup_error = "out of memory preparing operands";
    } catch (const std::exception& e) {
      setup_error = e.what();
    }

    for (const auto& k : kernels) {
      Measurement m = detail::cell_skeleton(cfg, hooks, n);
      m.kernel = k.spec.name();
      m.bit_identical_tier = k.spec.bit_identical_tier;
      if (k.spec.id == KernelId::tiled) m.tunables.tile = k.spec.effective_tile(n);
      if (!setup_error.empty()) {
        detail::fail_cell(m, setup_error);
        emit(std::move(m));
        continue;
      }
      detail::fail_soft(m, [&] {
        TimedRun run = time_kernel(k.fn, *a, *b, cfg.time_reps, cfg.warmup, hooks.clock);
        m.timing = std::move(run.timing);
        if (want_energy && energy) {
          const CellContext ctx{m.kernel, n, cfg.seed, k.spec.tile, k.spec.workers};
          auto region = [&] { (void)k.fn(*a, *b); };
          try {
            m.energy = energy->measure(ctx, region, cfg.energy_reps);
          } catch (const Error&) {
            // One retry; a second failure fails the cell.
            m.energy = energy->measure(ctx, region, cfg.energy_reps);
          }
        }
        m.mse = mse(run.output, *ref);
        if (m.bit_identical_tier && m.mse.value != 0.0) {
          throw Error(Errc::measurement, "bit-identity violated: mse " + std::to_string(m.mse.value));
        }
      });
      if (want_energy && !energy && m.ok()) detail::append_note(m.message, hooks.energy_note);
      emit(std::move(m));
    }

    for (ExternalKernel* backend : backends) {
      Measurement m = detail::cell_skeleton(cfg, hooks, n);
      m.kernel = backend->info().name;
      m.backend = backend->info();
      m.bit_identical_tier = false;
      if (!setup_error.empty()) {
        detail::fail_cell(m, setup_error);
        emit(std::move(m));
        continue;
      }
      detail::fail_soft(m, [&] {
        ExternalRun run = backend->run(*a, *b, cfg.time_reps, cfg.warmup);
        if (run.per_rep_ms.size() != static_cast<std::size_t>(cfg.time_reps)) {
          throw Error(Errc::protocol, "backend returned " + std::to_string(run.per_rep_ms.size()) +
                                          " samples for " + std::to_string(cfg.time_reps) + " reps");
        }
        for (double t : run.per_rep_ms) {
          if (!(t >= 0.0)) throw Error(Errc::measurement, "backend reported a negative time");
        }
        // Oracle sovereignty: accuracy is always judged against the local reference.
        m.mse = mse(run.output, *ref);
        m.timing = aggregate(run.per_rep_ms);
        if (run.energy_j) {
          EnergyReading e;
          e.scope = EnergyScope::backend;
          e.reps = cfg.time_reps;
          e.joules = *run.energy_j / cfg.time_reps;
          e.per_domain[m.kernel] = e.joules;
          e.elapsed_s = m.timing->mean_ms / 1e3;
          e.mean_watts = e.elapsed_s > 0 ? watts(e) : 0.0;
          e.note = "backend-reported";
          m.energy = e;
        }
      });
      emit(std::move(m));
    }
  }
  return rows;
}

}  // namespace gemmbench
