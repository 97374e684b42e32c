#pragma once

// Subprocess backend protocol. The harness spawns an external GEMM
// implementation and talks to it over the child's stdin/stdout, one JSON
// record per line:
//
//   {"id": <int>, "type": <string>, "payload": {...}}
//
//   hello     child -> harness  id 0, payload = BackendInfo
//   gemm      harness -> child  {a_path, b_path, n, reps, warmup, result_path}
//   result    child -> harness  echoes the request id;
//                               {status, per_rep_time_ms, result_path, energy_j, message}
//   shutdown  harness -> child  {}
//
// Operands and results travel as GEMMMAT1 files; matrices never go inline.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gemmbench/error.hpp"
#include "gemmbench/matrix.hpp"
#include "gemmbench/measure.hpp"
#include "gemmbench/subprocess.hpp"

namespace gemmbench {

inline constexpr int kProtocolVersion = 1;

enum class BackendStatus { ok, error };

struct BackendResult {
  std::vector<double> per_rep_time_ms;
  std::filesystem::path result_path;
  std::optional<double> energy_j;
  BackendStatus status = BackendStatus::ok;
  std::string message;
};

// ---------------------------------------------------------------------------
// Message encoding, shared by the harness and conforming backends.

namespace protocol {

using json = nlohmann::json;

inline std::string message(std::uint64_t id, std::string_view type, json payload) {
  return json{{"id", id}, {"type", type}, {"payload", std::move(payload)}}.dump();
}

inline json hello_payload(const BackendInfo& info) {
  return {{"protocol_version", info.protocol_version},
          {"name", info.name},
          {"device", info.device},
          {"includes_transfer_time", info.includes_transfer_time},
          {"reports_energy", info.reports_energy}};
}

struct GemmRequest {
  std::filesystem::path a_path, b_path, result_path;
  std::size_t n = 0;
  int reps = 1;
  int warmup = 0;
};

inline json gemm_payload(const GemmRequest& r) {
  return {{"a_path", r.a_path.string()}, {"b_path", r.b_path.string()},
          {"n", r.n},                    {"reps", r.reps},
          {"warmup", r.warmup},          {"result_path", r.result_path.string()}};
}

inline json result_payload(const BackendResult& r) {
  json p{{"status", r.status == BackendStatus::ok ? "ok" : "error"},
         {"per_rep_time_ms", r.per_rep_time_ms},
         {"result_path", r.result_path.string()},
         {"energy_j", nullptr},
         {"message", r.message}};
  if (r.energy_j) p["energy_j"] = *r.energy_j;
  return p;
}

struct Envelope {
  std::uint64_t id = 0;
  std::string type;
  json payload;
};

inline Envelope parse(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(Errc::protocol, "malformed message '" + line + "': " + e.what());
  }
  if (!j.is_object() || !j.contains("id") || !j.contains("type") || !j.contains("payload") ||
      !j["id"].is_number_unsigned() || !j["type"].is_string() || !j["payload"].is_object()) {
    throw Error(Errc::protocol, "message lacks id/type/payload: " + line);
  }
  return {j["id"].get<std::uint64_t>(), j["type"].get<std::string>(), j["payload"]};
}

template <typename T>
T field(const json& payload, const char* key) {
  try {
    return payload.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(Errc::protocol, std::string("bad field '") + key + "': " + e.what());
  }
}

inline BackendInfo parse_hello(const json& p) {
  BackendInfo info;
  info.protocol_version = field<int>(p, "protocol_version");
  info.name = field<std::string>(p, "name");
  info.device = p.value("device", std::string{});
  info.includes_transfer_time = p.value("includes_transfer_time", false);
  info.reports_energy = p.value("reports_energy", false);
  return info;
}

inline GemmRequest parse_gemm(const json& p) {
  GemmRequest r;
  r.a_path = field<std::string>(p, "a_path");
  r.b_path = field<std::string>(p, "b_path");
  r.result_path = field<std::string>(p, "result_path");
  r.n = field<std::size_t>(p, "n");
  r.reps = field<int>(p, "reps");
  r.warmup = field<int>(p, "warmup");
  return r;
}

inline BackendResult parse_result(const json& p) {
  BackendResult r;
  const auto status = field<std::string>(p, "status");
  if (status == "ok") {
    r.status = BackendStatus::ok;
  } else if (status == "error") {
    r.status = BackendStatus::error;
  } else {
    throw Error(Errc::protocol, "unknown result status '" + status + "'");
  }
  r.message = p.value("message", std::string{});
  if (r.status == BackendStatus::error) return r;
  r.per_rep_time_ms = field<std::vector<double>>(p, "per_rep_time_ms");
  r.result_path = field<std::string>(p, "result_path");
  if (p.contains("energy_j") && !p["energy_j"].is_null()) r.energy_j = field<double>(p, "energy_j");
  return r;
}

}  // namespace protocol

// ---------------------------------------------------------------------------
// Harness side

class BackendHandle {
 public:
  using ms = std::chrono::milliseconds;
  static constexpr ms kHandshakeTimeout{5000};
  static constexpr ms kShutdownGrace{2000};

  /// Starts the backend and waits for its hello.
  static BackendHandle spawn(const std::vector<std::string>& argv, ms handshake_timeout = kHandshakeTimeout) {
    if (argv.empty()) throw Error(Errc::backend, "empty backend command");
    BackendHandle h;
    h.argv_ = argv;
    char tmpl[] = "/tmp/gemmbench-backend-stderr-XXXXXX";
    if (const int fd = ::mkstemp(tmpl); fd >= 0) {
      ::close(fd);
      h.stderr_path_ = tmpl;
    }
    try {
      h.child_ = Subprocess::spawn(
          argv, {.pipe_stdin = true, .pipe_stdout = true, .stderr_file = h.stderr_path_.string()});
    } catch (const Error& e) {
      throw Error(Errc::backend, "cannot start backend '" + argv[0] + "': " + e.what());
    }

    std::string line;
    switch (h.child_.read_line(line, handshake_timeout)) {
      case ReadStatus::timeout:
        h.shutdown();
        throw Error(Errc::backend, "no hello from '" + argv[0] + "' within " +
                                       std::to_string(handshake_timeout.count()) + " ms");
      case ReadStatus::eof:
        throw Error(Errc::backend, "backend '" + argv[0] + "' exited before handshake" + h.diagnostics());
      case ReadStatus::line: break;
    }
    const auto env = protocol::parse(line);
    if (env.type != "hello") throw Error(Errc::protocol, "expected hello, got " + env.type);
    h.info_ = protocol::parse_hello(env.payload);
    if (h.info_.protocol_version != kProtocolVersion) {
      const int got = h.info_.protocol_version;
      h.shutdown();
      throw Error(Errc::backend, "protocol version mismatch: harness speaks " +
                                     std::to_string(kProtocolVersion) + ", backend speaks " +
                                     std::to_string(got));
    }
    if (h.info_.name.empty()) throw Error(Errc::protocol, "backend name is empty");
    return h;
  }

  BackendHandle(BackendHandle&& o) noexcept
      : child_(std::move(o.child_)),
        info_(std::move(o.info_)),
        argv_(std::move(o.argv_)),
        stderr_path_(std::exchange(o.stderr_path_, {})),
        next_id_(o.next_id_),
        closed_(std::exchange(o.closed_, true)) {}
  BackendHandle& operator=(BackendHandle&& o) noexcept {
    if (this != &o) {
      shutdown();
      child_ = std::move(o.child_);
      info_ = std::move(o.info_);
      argv_ = std::move(o.argv_);
      stderr_path_ = std::exchange(o.stderr_path_, {});
      next_id_ = o.next_id_;
      closed_ = std::exchange(o.closed_, true);
    }
    return *this;
  }
  ~BackendHandle() {
    shutdown();
    std::error_code ec;
    if (!stderr_path_.empty()) std::filesystem::remove(stderr_path_, ec);
  }

  const BackendInfo& info() const noexcept { return info_; }
  const std::vector<std::string>& argv() const noexcept { return argv_; }
  bool alive() const noexcept { return !closed_ && child_.running(); }

  /// Sends one gemm request and waits for its reply. A timeout shuts the
  /// backend down and raises a backend error.
  BackendResult request_gemm(const std::filesystem::path& a_path, const std::filesystem::path& b_path,
                             std::size_t n, int reps, int warmup,
                             const std::filesystem::path& result_path, ms timeout) {
    if (!alive()) throw Error(Errc::backend, "backend '" + info_.name + "' is not running");
    const std::uint64_t id = next_id_++;
    const protocol::GemmRequest req{a_path, b_path, result_path, n, reps, warmup};
    if (!child_.write_line(protocol::message(id, "gemm", protocol::gemm_payload(req)))) {
      child_.wait_for(kShutdownGrace);
      closed_ = true;
      throw Error(Errc::backend, "backend '" + info_.name + "' closed its input" + diagnostics());
    }

    std::string line;
    switch (child_.read_line(line, timeout)) {
      case ReadStatus::timeout:
        shutdown();
        throw Error(Errc::backend, "backend '" + info_.name + "' did not reply within " +
                                       std::to_string(timeout.count()) + " ms; shut down");
      case ReadStatus::eof: {
        const auto status = child_.wait_for(kShutdownGrace);
        closed_ = true;
        throw Error(Errc::backend,
                    "backend '" + info_.name + "' exited mid-request" +
                        (status ? " with status " + std::to_string(Subprocess::exit_code(*status))
                                : std::string()) +
                        diagnostics());
      }
      case ReadStatus::line: break;
    }
    const auto env = protocol::parse(line);
    if (env.type != "result") throw Error(Errc::protocol, "expected result, got " + env.type);
    if (env.id != id) {
      throw Error(Errc::protocol, "reply id " + std::to_string(env.id) + " does not match request " +
                                      std::to_string(id));
    }
    BackendResult result = protocol::parse_result(env.payload);
    if (result.status == BackendStatus::ok &&
        result.per_rep_time_ms.size() != static_cast<std::size_t>(reps)) {
      throw Error(Errc::protocol, "reply carries " + std::to_string(result.per_rep_time_ms.size()) +
                                      " samples for " + std::to_string(reps) + " reps");
    }
    return result;
  }

  /// Asks the backend to exit, waits up to 2 s, then kills it. Idempotent.
  void shutdown() noexcept {
    if (closed_) return;
    closed_ = true;
    if (!child_.running()) return;
    try {
      child_.write_line(protocol::message(next_id_++, "shutdown", nlohmann::json::object()));
    } catch (...) {
    }
    child_.close_stdin();
    if (!child_.wait_for(kShutdownGrace)) child_.kill_and_reap();
  }

 private:
  BackendHandle() = default;

  std::string diagnostics() const {
    std::error_code ec;
    if (stderr_path_.empty() || !std::filesystem::exists(stderr_path_, ec)) return {};
    std::ifstream in(stderr_path_);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (text.empty()) return {};
    if (text.size() > 2000) text = "..." + text.substr(text.size() - 2000);
    return "; stderr: " + text;
  }

  Subprocess child_;
  BackendInfo info_;
  std::vector<std::string> argv_;
  std::filesystem::path stderr_path_;
  std::uint64_t next_id_ = 1;
  bool closed_ = false;
};

inline BackendHandle spawn_backend(const std::vector<std::string>& argv) {
  return BackendHandle::spawn(argv);
}

inline void shutdown(BackendHandle& handle) noexcept { handle.shutdown(); }

/// Adapts a backend handle to the sweep driver: writes operands to a
/// scratch directory, requests the product, and loads the result file.
class SubprocessBackend final : public ExternalKernel {
 public:
  explicit SubprocessBackend(BackendHandle handle,
                             std::chrono::milliseconds request_timeout = std::chrono::hours(1))
      : handle_(std::move(handle)), timeout_(request_timeout) {
    std::string tmpl = (std::filesystem::temp_directory_path() / "gemmbench-xchg-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw Error(Errc::io, "cannot create scratch directory");
    scratch_ = tmpl;
  }
  SubprocessBackend(const SubprocessBackend&) = delete;
  SubprocessBackend& operator=(const SubprocessBackend&) = delete;
  ~SubprocessBackend() override {
    handle_.shutdown();
    std::error_code ec;
    std::filesystem::remove_all(scratch_, ec);
  }

  const BackendInfo& info() const override { return handle_.info(); }
  BackendHandle& handle() noexcept { return handle_; }

  ExternalRun run(const Matrix& a, const Matrix& b, int reps, int warmup) override {
    const auto a_path = scratch_ / "a.gemmmat", b_path = scratch_ / "b.gemmmat";
    const auto c_path = scratch_ / ("c-" + std::to_string(++calls_) + ".gemmmat");
    write_matrix_file(a_path, a);
    write_matrix_file(b_path, b);
    const BackendResult r = handle_.request_gemm(a_path, b_path, a.rows(), reps, warmup, c_path, timeout_);
    if (r.status == BackendStatus::error) {
      throw Error(Errc::backend, "backend '" + info().name + "' reported: " + r.message);
    }
    Matrix c = read_matrix_file(r.result_path);
    std::error_code ec;
    std::filesystem::remove(r.result_path, ec);
    if (c.rows() != a.rows() || c.cols() != b.cols()) {
      throw Error(Errc::format, "backend result is " + std::to_string(c.rows()) + "x" +
                                    std::to_string(c.cols()) + ", expected " +
                                    std::to_string(a.rows()) + "x" + std::to_string(b.cols()));
    }
    return {r.per_rep_time_ms, std::move(c), r.energy_j};
  }

 private:
  BackendHandle handle_;
  std::chrono::milliseconds timeout_;
  std::filesystem::path scratch_;
  std::uint64_t calls_ = 0;
};

}  // namespace gemmbench
