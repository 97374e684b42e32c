#pragma once

// Result rows: one JSON object per line, appended as cells complete so an
// interrupted sweep keeps everything it finished.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gemmbench/error.hpp"
#include "gemmbench/measure.hpp"

namespace gemmbench {

inline constexpr int kSchemaVersion = 1;

using ResultRow = Measurement;

namespace detail {

using json = nlohmann::json;

inline json timing_to_json(const TimingStats& t) {
  return {{"mean", t.mean_ms}, {"std", t.std_ms},       {"min", t.min_ms},
          {"max", t.max_ms},   {"median", t.median_ms}, {"samples", t.samples_ms}};
}

inline TimingStats timing_from_json(const json& j) {
  TimingStats t;
  t.mean_ms = j.at("mean").get<double>();
  t.std_ms = j.at("std").get<double>();
  t.min_ms = j.at("min").get<double>();
  t.max_ms = j.at("max").get<double>();
  t.median_ms = j.at("median").get<double>();
  t.samples_ms = j.value("samples", std::vector<double>{});
  return t;
}

inline json energy_to_json(const EnergyReading& e) {
  return {{"scope", to_string(e.scope)}, {"joules", e.joules},   {"mean_watts", e.mean_watts},
          {"elapsed_s", e.elapsed_s},    {"reps", e.reps},       {"per_domain", e.per_domain},
          {"warning", e.warning},        {"note", e.note}};
}

inline EnergyReading energy_from_json(const json& j) {
  EnergyReading e;
  const auto scope = parse_energy_scope(j.at("scope").get<std::string>());
  if (!scope) throw Error(Errc::format, "unknown energy scope " + j.at("scope").dump());
  e.scope = *scope;
  e.joules = j.at("joules").get<double>();
  e.mean_watts = j.at("mean_watts").get<double>();
  e.elapsed_s = j.at("elapsed_s").get<double>();
  e.reps = j.at("reps").get<int>();
  e.per_domain = j.at("per_domain").get<std::map<std::string, double>>();
  e.warning = j.value("warning", false);
  e.note = j.value("note", std::string{});
  return e;
}

}  // namespace detail

inline nlohmann::json row_to_json(const ResultRow& r) {
  using detail::json;
  json j{{"schema_version", kSchemaVersion},
         {"timestamp", r.timestamp},
         {"host",
          {{"cpu", r.host.cpu_model},
           {"logical_cores", r.host.logical_cores},
           {"lane_width", r.host.lane_width}}},
         {"kernel", r.kernel},
         {"backend", nullptr},
         {"bit_identical_tier", r.bit_identical_tier},
         {"n", r.n},
         {"time_ms", nullptr},
         {"mse", r.mse.value},
         {"energy", nullptr},
         {"tunables",
          {{"tile", r.tunables.tile},
           {"workers", r.tunables.workers},
           {"seed", r.tunables.seed},
           {"time_reps", r.tunables.time_reps},
           {"energy_reps", r.tunables.energy_reps},
           {"warmup", r.tunables.warmup}}},
         {"status", r.ok() ? "ok" : "failed"},
         {"message", nullptr}};
  if (r.backend) {
    j["backend"] = r.backend->name;
    j["backend_info"] = {{"protocol_version", r.backend->protocol_version},
                         {"device", r.backend->device},
                         {"includes_transfer_time", r.backend->includes_transfer_time},
                         {"reports_energy", r.backend->reports_energy}};
  }
  if (r.timing) j["time_ms"] = detail::timing_to_json(*r.timing);
  if (r.energy) j["energy"] = detail::energy_to_json(*r.energy);
  if (!r.message.empty()) j["message"] = r.message;
  return j;
}

inline ResultRow row_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("schema_version")) {
    throw Error(Errc::format, "result row has no schema_version");
  }
  const auto& ver = j["schema_version"];
  if (!ver.is_number_integer() || ver.get<long long>() != kSchemaVersion) {
    throw Error(Errc::format, "unsupported result schema_version " + ver.dump() +
                                  " (this build reads version " + std::to_string(kSchemaVersion) +
                                  ")");
  }
  try {
    ResultRow r;
    r.timestamp = j.at("timestamp").get<std::string>();
    const auto& host = j.at("host");
    r.host.cpu_model = host.at("cpu").get<std::string>();
    r.host.logical_cores = host.at("logical_cores").get<unsigned>();
    r.host.lane_width = host.at("lane_width").get<int>();
    r.kernel = j.at("kernel").get<std::string>();
    if (j.contains("backend") && !j["backend"].is_null()) {
      BackendInfo info;
      info.name = j["backend"].get<std::string>();
      if (j.contains("backend_info")) {
        const auto& bi = j["backend_info"];
        info.protocol_version = bi.value("protocol_version", 1);
        info.device = bi.value("device", std::string{});
        info.includes_transfer_time = bi.value("includes_transfer_time", false);
        info.reports_energy = bi.value("reports_energy", false);
      }
      r.backend = info;
    }
    r.bit_identical_tier = j.value("bit_identical_tier", false);
    r.n = j.at("n").get<std::size_t>();
    if (!j.at("time_ms").is_null()) r.timing = detail::timing_from_json(j["time_ms"]);
    r.mse.value = j.at("mse").get<double>();
    if (j.contains("energy") && !j["energy"].is_null()) r.energy = detail::energy_from_json(j["energy"]);
    const auto& t = j.at("tunables");
    r.tunables.tile = t.at("tile").get<std::size_t>();
    r.tunables.workers = t.at("workers").get<std::size_t>();
    r.tunables.seed = t.at("seed").get<std::uint64_t>();
    r.tunables.time_reps = t.at("time_reps").get<int>();
    r.tunables.energy_reps = t.at("energy_reps").get<int>();
    r.tunables.warmup = t.at("warmup").get<int>();
    const auto status = j.at("status").get<std::string>();
    if (status == "ok") {
      r.status = CellStatus::ok;
    } else if (status == "failed") {
      r.status = CellStatus::failed;
    } else {
      throw Error(Errc::format, "unknown status '" + status + "'");
    }
    if (j.contains("message") && !j["message"].is_null()) r.message = j["message"].get<std::string>();
    if (r.ok() && !r.timing) throw Error(Errc::format, "ok row without time_ms");
    if (!r.ok() && r.message.empty()) throw Error(Errc::format, "failed row without message");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::format, std::string("malformed result row: ") + e.what());
  }
}

/// Creates the file if needed and confirms it can be appended to.
inline void ensure_appendable(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for appending");
}

inline void append_results(const std::filesystem::path& path, const std::vector<ResultRow>& rows) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for appending");
  for (const auto& r : rows) out << row_to_json(r).dump() << '\n';
  out.flush();
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

/// Reads every row. A final line without a newline that fails to parse is
/// the remnant of an interrupted write and is dropped.
inline std::vector<ResultRow> read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<ResultRow> rows;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const bool complete = nl != std::string::npos;
    const std::string line = text.substr(pos, complete ? nl - pos : std::string::npos);
    pos = complete ? nl + 1 : text.size();
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      if (!complete) break;
      throw Error(Errc::format, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      rows.push_back(row_from_json(j));
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace gemmbench
