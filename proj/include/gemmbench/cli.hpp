#pragma once

// gemmbench command line: list | run | verify | report.
// Exit status: 0 success, 1 failed cell / verification failure / runtime
// error, 2 usage error.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gemmbench/backend.hpp"
#include "gemmbench/energy.hpp"
#include "gemmbench/error.hpp"
#include "gemmbench/kernels.hpp"
#include "gemmbench/measure.hpp"
#include "gemmbench/report.hpp"
#include "gemmbench/results.hpp"
#include "gemmbench/verify.hpp"

namespace gemmbench {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

inline std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

inline std::optional<EnergyMode> parse_energy_mode(std::string_view s) {
  if (s == "none") return EnergyMode::none;
  if (s == "scoped") return EnergyMode::scoped;
  if (s == "process") return EnergyMode::process;
  return std::nullopt;
}

inline std::size_t parse_workers(const std::string& s) {
  if (s == "auto") return default_workers();
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || v == 0) {
    throw Error(Errc::usage, "--workers expects a positive integer or 'auto', got '" + s + "'");
  }
  return v;
}

/// Returns an empty string when `tool` can be executed, the reason otherwise.
inline std::string probe_tool(const std::string& tool) {
  try {
    auto p = Subprocess::spawn({tool, "--version"}, {.pipe_stdout = true, .pipe_stderr = true});
    p.communicate();
    return {};
  } catch (const Error& e) {
    return e.what();
  }
}

struct RunOptions {
  std::string sizes;
  std::size_t max_n = kDefaultSizeCap;
  std::string kernels = "naive,ikj,tiled,simd,parallel";
  std::vector<std::string> backends;
  int time_reps = 10;
  int energy_reps = 20;
  int warmup = 1;
  std::uint64_t seed = 42;
  std::size_t tile = kDefaultTile;
  std::string workers = "auto";
  std::string energy = "none";
  std::string out = "results.jsonl";
  double backend_timeout_s = 3600.0;
};

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> items;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto comma = s.find(',', pos);
    const auto item = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (!item.empty()) items.push_back(item);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return items;
}

inline int run_command(const RunOptions& o, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  cfg.sizes = o.sizes.empty() ? default_sizes(o.max_n) : parse_sizes(o.sizes);
  cfg.kernel_ids = split_list(o.kernels);
  cfg.time_reps = o.time_reps;
  cfg.energy_reps = o.energy_reps;
  cfg.warmup = o.warmup;
  cfg.seed = o.seed;
  cfg.tile = o.tile;
  cfg.workers = parse_workers(o.workers);
  const auto mode = parse_energy_mode(o.energy);
  if (!mode) throw Error(Errc::usage, "--energy must be none, scoped or process");
  cfg.energy_mode = *mode;
  if (cfg.kernel_ids.empty() && o.backends.empty()) throw Error(Errc::usage, "no kernels selected");
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Error(Errc::usage, e.what());
  }
  const auto kernels = resolve_kernels(cfg);

  // Fail on an unwritable results file before any measurement starts.
  const std::filesystem::path out_path = o.out;
  ensure_appendable(out_path);

  SweepHooks hooks;
  std::unique_ptr<EnergyProvider> provider;
  if (cfg.energy_mode == EnergyMode::scoped) {
    try {
      auto domains = rapl_domains();
      if (domains.empty()) throw Error(Errc::capability, "no RAPL domains under " + powercap_root().string());
      provider = std::make_unique<ScopedEnergyProvider>(std::move(domains));
    } catch (const Error& e) {
      hooks.energy_note = std::string("energy unavailable: ") + e.what();
    }
  } else if (cfg.energy_mode == EnergyMode::process) {
    const std::string tool = perf_binary();
    if (const auto why = probe_tool(tool); !why.empty()) {
      hooks.energy_note = "energy unavailable: " + why;
    } else {
      const std::string self = std::filesystem::read_symlink("/proc/self/exe").string();
      provider = std::make_unique<ProcessEnergyProvider>(
          [self](const CellContext& c, int reps) {
            return std::vector<std::string>{self,
                                            "cell",
                                            "--kernel",
                                            c.kernel,
                                            "--n",
                                            std::to_string(c.n),
                                            "--seed",
                                            std::to_string(c.seed),
                                            "--tile",
                                            std::to_string(c.tile),
                                            "--workers",
                                            std::to_string(c.workers),
                                            "--reps",
                                            std::to_string(reps)};
          },
          tool);
    }
  }
  if (!hooks.energy_note.empty()) err << "warning: " << hooks.energy_note << '\n';

  std::vector<std::unique_ptr<SubprocessBackend>> backends;
  std::vector<ExternalKernel*> backend_ptrs;
  const auto timeout = std::chrono::milliseconds(static_cast<long long>(o.backend_timeout_s * 1000.0));
  for (const auto& cmd : o.backends) {
    const auto argv = split_words(cmd);
    if (argv.empty()) throw Error(Errc::usage, "--backend needs a command");
    backends.push_back(std::make_unique<SubprocessBackend>(BackendHandle::spawn(argv), timeout));
    backend_ptrs.push_back(backends.back().get());
  }

  std::size_t failed = 0;
  hooks.on_row = [&](const Measurement& m) {
    append_results(out_path, {m});
    if (!m.ok()) ++failed;
    out << "n=" << m.n << ' ' << m.kernel << ": ";
    if (m.ok()) {
      out << detail::fmt("%.3f", m.timing->mean_ms) << " ms, mse " << detail::fmt("%.3e", m.mse.value);
      if (m.energy) out << ", " << detail::fmt("%.3f", m.energy->joules) << " J";
    } else {
      out << "FAILED: " << m.message;
    }
    out << '\n';
  };
  const auto rows = run_sweep(cfg, kernels, backend_ptrs, provider.get(), hooks);
  out << rows.size() << " rows appended to " << out_path.string() << '\n';
  if (failed > 0) {
    err << failed << " cell(s) failed\n";
    return kExitFailure;
  }
  return kExitOk;
}

inline int list_command(const std::vector<std::string>& backend_cmds, std::ostream& out) {
  out << "kernels:\n";
  for (const auto& k : kernel_registry()) {
    out << "  " << k.name() << (k.bit_identical_tier ? "  (bit-identical)" : "  (bounded error)");
    if (k.id == KernelId::simd) out << "  width=" << to_string(detect_simd_width());
    if (k.id == KernelId::parallel) out << "  workers=auto(" << default_workers() << ")";
    out << '\n';
  }
  out << "energy domains (" << powercap_root().string() << "):\n";
  try {
    const auto domains = rapl_domains();
    if (domains.empty()) out << "  none\n";
    for (const auto& d : domains) out << "  " << d.zone_id << "  " << d.counter_path.string() << '\n';
  } catch (const Error& e) {
    out << "  unavailable: " << e.what() << '\n';
  }
  const std::string tool = perf_binary();
  const auto why = probe_tool(tool);
  out << "process energy tool: " << tool << (why.empty() ? " (found)" : " (" + why + ")") << '\n';
  for (const auto& cmd : backend_cmds) {
    const auto argv = split_words(cmd);
    out << "backend '" << cmd << "': ";
    try {
      auto h = BackendHandle::spawn(argv);
      const auto& info = h.info();
      out << info.name << " protocol=" << info.protocol_version << " device=" << info.device << '\n';
      h.shutdown();
    } catch (const Error& e) {
      out << "unavailable: " << e.what() << '\n';
    }
  }
  return kExitOk;
}

struct ReportOptions {
  std::string in;
  std::string baseline;
  std::string plot;
  std::string metric = "time";
  bool mark_provenance = false;
};

inline int report_command(const ReportOptions& o, std::ostream& out) {
  const auto rows = read_results(o.in);
  if (rows.empty()) throw Error(Errc::argument, "no result rows in " + o.in);
  std::string baseline = o.baseline;
  if (baseline.empty()) {
    const auto names = series_names(rows);
    baseline = std::find(names.begin(), names.end(), "naive") != names.end() ? "naive" : names.front();
  }
  out << render_table(rows, baseline, o.mark_provenance);
  if (!o.plot.empty()) {
    const auto metric = parse_plot_metric(o.metric);
    if (!metric) throw Error(Errc::usage, "--plot-metric must be time, mse, watts or joules");
    render_plot(rows, {*metric, o.mark_provenance}, o.plot);
    out << "plot written to " << o.plot << '\n';
  }
  return kExitOk;
}

struct CellOptions {
  std::string kernel;
  std::size_t n = 0;
  std::uint64_t seed = 42;
  std::size_t tile = kDefaultTile;
  std::size_t workers = 1;
  int reps = 1;
};

/// Body of one energy cell run under the process-scope counter tool.
inline int cell_command(const CellOptions& o) {
  const auto id = parse_kernel_id(o.kernel);
  if (!id) throw Error(Errc::usage, "unknown kernel '" + o.kernel + "'; valid kernels: " + kernel_names());
  const KernelSpec spec = make_kernel_spec(*id, o.tile, o.workers);
  const Matrix a = random_matrix(o.n, o.n, operand_seed(o.seed, o.n, 0));
  const Matrix b = random_matrix(o.n, o.n, operand_seed(o.seed, o.n, 1));
  for (int r = 0; r < o.reps; ++r) (void)run_kernel(spec, a, b);
  return kExitOk;
}

}  // namespace detail

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"GEMM benchmark harness"};
  app.name("gemmbench");
  app.require_subcommand(1);

  std::vector<std::string> list_backends;
  auto* list = app.add_subcommand("list", "Show kernels, energy domains and backends");
  list->add_option("--backend", list_backends, "Backend command line to probe (repeatable)");

  detail::RunOptions run_opt;
  auto* run = app.add_subcommand("run", "Run a benchmark sweep and append result rows");
  run->add_option("--sizes", run_opt.sizes, "Comma list or A..BxF geometric range");
  run->add_option("--max-n", run_opt.max_n, "Largest size of the default sweep")->check(CLI::PositiveNumber);
  run->add_option("--kernels", run_opt.kernels, "Comma-separated kernel ids")->capture_default_str();
  run->add_option("--backend", run_opt.backends, "Backend command line, quoted (repeatable)");
  run->add_option("--time-reps", run_opt.time_reps, "Timed repetitions per cell")->capture_default_str();
  run->add_option("--energy-reps", run_opt.energy_reps, "Energy repetitions per cell")->capture_default_str();
  run->add_option("--warmup", run_opt.warmup, "Untimed warmup runs per cell")->capture_default_str();
  run->add_option("--seed", run_opt.seed, "Operand seed")->capture_default_str();
  run->add_option("--tile", run_opt.tile, "Tile edge for the tiled kernel")->capture_default_str();
  run->add_option("--workers", run_opt.workers, "Threads for the parallel kernel, or auto")->capture_default_str();
  run->add_option("--energy", run_opt.energy, "none, scoped or process")->capture_default_str();
  run->add_option("--out", run_opt.out, "Results file (appended)")->capture_default_str();
  run->add_option("--backend-timeout", run_opt.backend_timeout_s, "Seconds to wait for one backend request")
      ->capture_default_str();

  std::size_t verify_max_n = 64;
  auto* verify = app.add_subcommand("verify", "Check kernel tiers against the serial oracle");
  verify->add_option("--max-n", verify_max_n, "Check every n from 1 to this")->capture_default_str();

  detail::ReportOptions report_opt;
  auto* report = app.add_subcommand("report", "Render a table and plots from a results file");
  report->add_option("--in", report_opt.in, "Results file")->required();
  report->add_option("--baseline", report_opt.baseline, "Kernel the speedups are relative to");
  report->add_option("--plot", report_opt.plot, "Write an SVG chart to this path");
  report->add_option("--plot-metric", report_opt.metric, "time, mse, watts or joules")->capture_default_str();
  report->add_flag("--mark-provenance", report_opt.mark_provenance, "Label energy series with their scope");

  detail::CellOptions cell_opt;
  auto* cell = app.add_subcommand("cell", "Run one cell (used under the counter tool)");
  cell->group("");
  cell->add_option("--kernel", cell_opt.kernel)->required();
  cell->add_option("--n", cell_opt.n)->required()->check(CLI::PositiveNumber);
  cell->add_option("--seed", cell_opt.seed);
  cell->add_option("--tile", cell_opt.tile);
  cell->add_option("--workers", cell_opt.workers);
  cell->add_option("--reps", cell_opt.reps)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*list) return detail::list_command(list_backends, out);
    if (*run) return detail::run_command(run_opt, out, err);
    if (*verify) return verify_tiers(verify_max_n, default_verify_seeds(), out).ok() ? kExitOk : kExitFailure;
    if (*report) return detail::report_command(report_opt, out);
    if (*cell) return detail::cell_command(cell_opt);
  } catch (const Error& e) {
    err << "gemmbench: " << e.what() << '\n';
    return (e.code() == Errc::usage || e.code() == Errc::argument) ? kExitUsage : kExitFailure;
  } catch (const std::exception& e) {
    err << "gemmbench: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace gemmbench
