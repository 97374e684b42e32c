#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gemmbench {

enum class Errc {
  size,         // dimension overflow
  shape,        // operand dimensions do not agree
  format,       // malformed GEMMMAT1 file or result record
  io,           // read/write/parse failure
  capability,   // missing tool, permission, unsupported feature
  measurement,  // timing or counter failure inside a cell
  argument,     // invalid argument to an operation
  backend,      // external backend failed or died
  protocol,     // malformed or mismatched backend message
  usage,        // command-line misuse
};

constexpr std::string_view to_string(Errc e) noexcept {
  switch (e) {
    case Errc::size: return "size error";
    case Errc::shape: return "shape error";
    case Errc::format: return "format error";
    case Errc::io: return "I/O error";
    case Errc::capability: return "capability error";
    case Errc::measurement: return "measurement error";
    case Errc::argument: return "argument error";
    case Errc::backend: return "backend error";
    case Errc::protocol: return "protocol error";
    case Errc::usage: return "usage error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace gemmbench
