#pragma once

// Energy attribution under two scopes:
//   scoped  - RAPL powercap counters read immediately around the kernel call
//   process - an external counter tool (perf stat) wrapping a whole child run
//
// Readings are normalized per repetition: joules and elapsed_s describe one
// kernel execution averaged over `reps`.

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gemmbench/error.hpp"
#include "gemmbench/subprocess.hpp"

namespace gemmbench {

enum class EnergyScope { scoped, process, backend };

constexpr std::string_view to_string(EnergyScope s) noexcept {
  switch (s) {
    case EnergyScope::scoped: return "scoped";
    case EnergyScope::process: return "process";
    case EnergyScope::backend: return "backend-reported";
  }
  return "?";
}

inline std::optional<EnergyScope> parse_energy_scope(std::string_view s) {
  if (s == "scoped") return EnergyScope::scoped;
  if (s == "process") return EnergyScope::process;
  if (s == "backend-reported") return EnergyScope::backend;
  return std::nullopt;
}

struct EnergyDomain {
  std::string zone_id;
  std::filesystem::path counter_path;
  std::uint64_t max_range_uj = 0;
};

struct EnergyReading {
  EnergyScope scope = EnergyScope::scoped;
  double joules = 0.0;
  double elapsed_s = 0.0;
  double mean_watts = 0.0;
  std::map<std::string, double> per_domain;
  int reps = 1;
  bool warning = false;  // some requested domain was not reported
  std::string note;

  friend bool operator==(const EnergyReading&, const EnergyReading&) = default;
};

inline double watts(const EnergyReading& r) {
  if (!(r.elapsed_s > 0.0)) throw Error(Errc::argument, "elapsed time must be positive");
  return r.joules / r.elapsed_s;
}

/// Counter delta with wraparound at max_range: after + (max - before) when
/// the counter went backwards.
constexpr std::uint64_t wrap_delta(std::uint64_t before, std::uint64_t after,
                                   std::uint64_t max_range) noexcept {
  return after >= before ? after - before : after + (max_range - before);
}

// ---------------------------------------------------------------------------
// RAPL powercap tree

inline constexpr const char* kPowercapRootEnv = "GEMMBENCH_POWERCAP_ROOT";
inline constexpr const char* kPerfBinEnv = "GEMMBENCH_PERF_BIN";

inline std::filesystem::path powercap_root() {
  if (const char* env = std::getenv(kPowercapRootEnv); env && *env) return env;
  return "/sys/class/powercap";
}

namespace detail {

// Reads a small sysfs file. Permission failures map to capability errors.
inline std::string read_small_file(const std::filesystem::path& path) {
  const int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd < 0) {
    const int e = errno;
    const Errc code = (e == EACCES || e == EPERM) ? Errc::capability : Errc::io;
    throw Error(code, "cannot open " + path.string() + ": " + std::strerror(e));
  }
  std::string text;
  char buf[256];
  for (;;) {
    const ssize_t got = ::read(fd, buf, sizeof buf);
    if (got < 0) {
      if (errno == EINTR) continue;
      const int e = errno;
      ::close(fd);
      const Errc code = (e == EACCES || e == EPERM) ? Errc::capability : Errc::io;
      throw Error(code, "cannot read " + path.string() + ": " + std::strerror(e));
    }
    if (got == 0) break;
    text.append(buf, static_cast<std::size_t>(got));
  }
  ::close(fd);
  return text;
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::optional<std::uint64_t> parse_u64(std::string_view s) {
  s = trim(s);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::uint64_t read_u64_file(const std::filesystem::path& path) {
  const std::string text = read_small_file(path);
  const auto v = parse_u64(text);
  if (!v) throw Error(Errc::io, "cannot parse counter value in " + path.string());
  return *v;
}

inline bool is_rapl_zone_dir(const std::filesystem::directory_entry& e) {
  std::error_code ec;
  return e.path().filename().string().starts_with("intel-rapl:") && e.is_directory(ec);
}

}  // namespace detail

/// Package and DRAM zones under `root`, sorted by zone id. Empty when the
/// tree does not exist. Never writes to the tree.
inline std::vector<EnergyDomain> rapl_domains(const std::filesystem::path& root = powercap_root()) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) return {};

  std::vector<fs::path> zones;
  for (const auto& top : fs::directory_iterator(root, ec)) {
    if (!detail::is_rapl_zone_dir(top)) continue;
    zones.push_back(top.path());
    for (const auto& sub : fs::directory_iterator(top.path(), ec)) {
      if (detail::is_rapl_zone_dir(sub)) zones.push_back(sub.path());
    }
  }

  std::set<fs::path> seen;
  std::vector<EnergyDomain> domains;
  for (const auto& zone : zones) {
    if (!seen.insert(fs::weakly_canonical(zone, ec)).second) continue;
    if (!fs::exists(zone / "name", ec)) continue;
    const std::string name(detail::trim(detail::read_small_file(zone / "name")));
    if (!name.starts_with("package") && name != "dram") continue;

    EnergyDomain d;
    d.zone_id = name;
    d.counter_path = zone / "energy_uj";
    d.max_range_uj = detail::read_u64_file(zone / "max_energy_range_uj");
    if (d.max_range_uj == 0) {
      throw Error(Errc::io, "zero max_energy_range_uj in " + zone.string());
    }
    try {
      (void)detail::read_u64_file(d.counter_path);
    } catch (const Error& e) {
      throw Error(Errc::capability,
                  "energy counter " + d.counter_path.string() + " is not readable (" + e.what() +
                      "); energy_uj is root-only on recent kernels: run as root or grant read "
                      "access, e.g. `sudo chmod o+r /sys/class/powercap/intel-rapl:*/energy_uj`");
    }
    domains.push_back(std::move(d));
  }

  // Multi-socket hosts report several "dram" zones.
  std::map<std::string, int> counts;
  for (const auto& d : domains) ++counts[d.zone_id];
  for (auto& d : domains) {
    if (counts[d.zone_id] > 1) d.zone_id += "@" + d.counter_path.parent_path().filename().string();
  }
  std::sort(domains.begin(), domains.end(),
            [](const auto& x, const auto& y) { return x.zone_id < y.zone_id; });
  return domains;
}

inline std::uint64_t read_energy_uj(const EnergyDomain& domain) {
  std::uint64_t v;
  try {
    v = detail::read_u64_file(domain.counter_path);
  } catch (const Error& e) {
    throw Error(Errc::io, e.what());
  }
  if (v > domain.max_range_uj) {
    throw Error(Errc::io, domain.counter_path.string() + " reads " + std::to_string(v) +
                              " above max range " + std::to_string(domain.max_range_uj));
  }
  return v;
}

/// Runs `region` reps times between one pair of counter reads per domain.
inline EnergyReading scoped_energy(const std::vector<EnergyDomain>& domains,
                                   const std::function<void()>& region, int reps) {
  if (domains.empty()) throw Error(Errc::argument, "scoped energy needs at least one domain");
  if (reps < 1) throw Error(Errc::argument, "reps must be >= 1");

  auto read_all = [&] {
    std::vector<std::uint64_t> v;
    v.reserve(domains.size());
    try {
      for (const auto& d : domains) v.push_back(read_energy_uj(d));
    } catch (const Error& e) {
      throw Error(Errc::measurement, std::string("counter read failed: ") + e.what());
    }
    return v;
  };

  const auto before = read_all();
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) region();
  const auto t1 = std::chrono::steady_clock::now();
  const auto after = read_all();

  EnergyReading reading;
  reading.scope = EnergyScope::scoped;
  reading.reps = reps;
  // Floor at one clock tick so an empty region still yields a defined power.
  reading.elapsed_s = std::max(std::chrono::duration<double>(t1 - t0).count(), 1e-9) / reps;
  for (std::size_t i = 0; i < domains.size(); ++i) {
    const auto delta = wrap_delta(before[i], after[i], domains[i].max_range_uj);
    reading.per_domain[domains[i].zone_id] = static_cast<double>(delta) / 1e6 / reps;
  }
  for (const auto& [zone, j] : reading.per_domain) reading.joules += j;
  reading.mean_watts = watts(reading);
  return reading;
}

// ---------------------------------------------------------------------------
// perf stat wrapper

inline std::string perf_binary() {
  if (const char* env = std::getenv(kPerfBinEnv); env && *env) return env;
  return "perf";
}

inline const std::vector<std::string>& perf_energy_events() {
  static const std::vector<std::string> events{"power/energy-pkg/", "power/energy-ram/"};
  return events;
}

struct PerfStatResult {
  std::map<std::string, double> joules;  // "pkg" -> J
  std::vector<std::string> unsupported;  // domains reported as <not supported>/<not counted>
};

/// Domain name of a perf energy event: "power/energy-pkg/" -> "pkg".
inline std::string perf_event_domain(std::string_view event) {
  std::string_view s = event;
  if (s.starts_with("power/")) s.remove_prefix(6);
  if (s.starts_with("energy-")) s.remove_prefix(7);
  while (!s.empty() && s.back() == '/') s.remove_suffix(1);
  return std::string(s);
}

/// Parses the `-x ';'` records of perf stat (value;unit;event;...). Lines
/// that are not energy records (comments, the child's own stderr) are skipped.
inline PerfStatResult parse_perf_stat(std::string_view text) {
  PerfStatResult out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto trimmed = detail::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (true) {
      const auto semi = trimmed.find(';', pos);
      fields.push_back(trimmed.substr(pos, semi == std::string_view::npos ? semi : semi - pos));
      if (semi == std::string_view::npos) break;
      pos = semi + 1;
    }
    if (fields.size() < 3) continue;
    const auto event = detail::trim(fields[2]);
    if (!event.starts_with("power/energy-")) continue;
    const std::string domain = perf_event_domain(event);
    const auto value = detail::trim(fields[0]);
    if (value.starts_with("<")) {
      out.unsupported.push_back(domain);
      continue;
    }
    double j = 0.0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), j);
    if (ec != std::errc{} || ptr != value.data() + value.size() || j < 0.0) {
      throw Error(Errc::io, "cannot parse perf value '" + std::string(value) + "' for " +
                                std::string(event));
    }
    out.joules[domain] += j;
  }
  return out;
}

/// Builds an EnergyReading from parsed perf output and the wall time of the
/// wrapped run.
inline EnergyReading process_reading(const PerfStatResult& parsed, double elapsed_s) {
  if (parsed.joules.empty()) {
    throw Error(Errc::capability, "counter tool reported no energy events" +
                                      (parsed.unsupported.empty()
                                           ? std::string()
                                           : " (not supported: " + parsed.unsupported.front() + ")"));
  }
  EnergyReading r;
  r.scope = EnergyScope::process;
  r.per_domain = parsed.joules;
  for (const auto& [d, j] : r.per_domain) r.joules += j;
  r.elapsed_s = elapsed_s;
  r.mean_watts = watts(r);
  r.warning = !parsed.unsupported.empty();
  for (const auto& d : parsed.unsupported) {
    r.note += (r.note.empty() ? "not supported: " : ", ") + d;
  }
  return r;
}

/// Runs `command` under `perf stat` and returns whole-process energy.
inline EnergyReading process_energy(const std::vector<std::string>& command,
                                    const std::string& tool = perf_binary()) {
  if (command.empty()) throw Error(Errc::argument, "empty command");
  std::string events;
  for (const auto& e : perf_energy_events()) events += (events.empty() ? "" : ",") + e;
  std::vector<std::string> argv{tool, "stat", "-x", ";", "-e", events, "--"};
  argv.insert(argv.end(), command.begin(), command.end());

  const auto t0 = std::chrono::steady_clock::now();
  Subprocess child;
  try {
    child = Subprocess::spawn(argv, {.pipe_stdout = true, .pipe_stderr = true});
  } catch (const Error& e) {
    throw Error(Errc::capability, "counter tool '" + tool + "' is not available: " + e.what());
  }
  auto [out, err] = child.communicate();
  const auto t1 = std::chrono::steady_clock::now();
  const int code = Subprocess::exit_code(child.wait());
  if (code != 0) {
    throw Error(Errc::measurement, "'" + tool + "' run exited with status " +
                                       std::to_string(code) + "; output:\n" + out + err);
  }
  return process_reading(parse_perf_stat(err), std::chrono::duration<double>(t1 - t0).count());
}

// ---------------------------------------------------------------------------
// Providers used by the sweep driver

struct CellContext {
  std::string kernel;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::size_t tile = 0;
  std::size_t workers = 0;
};

class EnergyProvider {
 public:
  virtual ~EnergyProvider() = default;
  virtual EnergyScope scope() const = 0;
  /// Energy of one kernel execution, averaged over reps runs of `region`.
  virtual EnergyReading measure(const CellContext& cell, const std::function<void()>& region,
                                int reps) = 0;
};

class ScopedEnergyProvider final : public EnergyProvider {
 public:
  explicit ScopedEnergyProvider(std::vector<EnergyDomain> domains) : domains_(std::move(domains)) {}

  EnergyScope scope() const override { return EnergyScope::scoped; }
  EnergyReading measure(const CellContext&, const std::function<void()>& region,
                        int reps) override {
    return scoped_energy(domains_, region, reps);
  }
  const std::vector<EnergyDomain>& domains() const noexcept { return domains_; }

 private:
  std::vector<EnergyDomain> domains_;
};

/// Process scope: each cell is rerun in a child process under perf stat.
/// `make_command` returns the child's argv for a cell and repetition count.
class ProcessEnergyProvider final : public EnergyProvider {
 public:
  using CommandFn = std::function<std::vector<std::string>(const CellContext&, int reps)>;

  explicit ProcessEnergyProvider(CommandFn make_command, std::string tool = perf_binary())
      : make_command_(std::move(make_command)), tool_(std::move(tool)) {}

  EnergyScope scope() const override { return EnergyScope::process; }
  EnergyReading measure(const CellContext& cell, const std::function<void()>&,
                        int reps) override {
    EnergyReading r = process_energy(make_command_(cell, reps), tool_);
    r.reps = reps;
    r.joules = 0.0;
    for (auto& [d, j] : r.per_domain) {
      j /= reps;
      r.joules += j;
    }
    r.elapsed_s /= reps;
    r.mean_watts = watts(r);
    return r;
  }

 private:
  CommandFn make_command_;
  std::string tool_;
};

}  // namespace gemmbench
