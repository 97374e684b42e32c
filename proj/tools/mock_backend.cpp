// Conforming stand-in for an external GEMM backend. Computes the product
// with the in-process ikj kernel and speaks the line protocol on
// stdin/stdout. Flags force the failure modes the harness must survive.

#include <chrono>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "gemmbench/backend.hpp"
#include "gemmbench/kernels.hpp"

namespace {

using namespace gemmbench;
using Json = nlohmann::json;

[[noreturn]] void sleep_forever() {
  for (;;) std::this_thread::sleep_for(std::chrono::hours(1));
}

void send(std::uint64_t id, std::string_view type, Json payload) {
  std::cout << protocol::message(id, type, std::move(payload)) << std::endl;
}

struct Options {
  int protocol_version = kProtocolVersion;
  std::string name = "mock";
  bool inject_error = false;
  double perturb = 0.0;
  bool ignore_shutdown = false;
  bool hang = false;
  double sleep_ms = -1.0;
};

BackendResult serve(const protocol::GemmRequest& req, const Options& opt) {
  BackendResult r;
  if (opt.inject_error) {
    r.status = BackendStatus::error;
    r.message = "injected error";
    return r;
  }
  const Matrix a = read_matrix_file(req.a_path);
  const Matrix b = read_matrix_file(req.b_path);
  if (a.rows() != req.n || b.rows() != req.n) {
    r.status = BackendStatus::error;
    r.message = "operand size does not match n";
    return r;
  }
  for (int w = 0; w < req.warmup; ++w) (void)gemm_ikj(a, b);
  std::optional<Matrix> c;
  for (int rep = 0; rep < req.reps; ++rep) {
    const auto t0 = std::chrono::steady_clock::now();
    c = gemm_ikj(a, b);
    if (opt.sleep_ms >= 0) {
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(opt.sleep_ms));
      r.per_rep_time_ms.push_back(opt.sleep_ms);
    } else {
      r.per_rep_time_ms.push_back(
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
  }
  if (opt.perturb != 0.0) {
    // +eps or -eps per element, sign from the operand stream.
    auto d = c->data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const float sign = random_element(0x5eed, i) < 0.0f ? -1.0f : 1.0f;
      d[i] += sign * static_cast<float>(opt.perturb);
    }
  }
  write_matrix_file(req.result_path, *c);
  r.result_path = req.result_path;
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  CLI::App app{"gemmbench mock backend"};
  app.add_option("--protocol-version", opt.protocol_version, "Version announced in hello");
  app.add_option("--name", opt.name, "Backend name announced in hello");
  app.add_flag("--inject-error", opt.inject_error, "Answer every request with status error");
  app.add_option("--perturb", opt.perturb, "Add +/-eps to every result element");
  app.add_flag("--ignore-shutdown", opt.ignore_shutdown, "Keep running after shutdown");
  app.add_flag("--hang", opt.hang, "Never answer gemm requests");
  app.add_option("--sleep-ms", opt.sleep_ms, "Sleep and report exactly this time per rep");
  CLI11_PARSE(app, argc, argv);

  send(0, "hello",
       protocol::hello_payload({opt.protocol_version, opt.name, "cpu", false, false}));

  std::string line;
  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    protocol::Envelope env;
    try {
      env = protocol::parse(line);
    } catch (const std::exception& e) {
      std::cerr << "mock: " << e.what() << '\n';
      continue;
    }
    if (env.type == "shutdown") {
      if (opt.ignore_shutdown) continue;
      return 0;
    }
    if (env.type != "gemm") {
      std::cerr << "mock: unexpected message type " << env.type << '\n';
      continue;
    }
    if (opt.hang) sleep_forever();
    BackendResult r;
    try {
      r = serve(protocol::parse_gemm(env.payload), opt);
    } catch (const std::exception& e) {
      r = {};
      r.status = BackendStatus::error;
      r.message = e.what();
    }
    send(env.id, "result", protocol::result_payload(r));
  }
  if (opt.ignore_shutdown) sleep_forever();
  return 0;
}
