#pragma once

// Minimal POSIX child-process wrapper: fork/exec with optional pipes on the
// child's stdin/stdout/stderr, line reads with a deadline, bounded waits.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "gemmbench/error.hpp"

namespace gemmbench {

namespace detail {

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Fd() { reset(); }

  int get() const noexcept { return fd_; }
  explicit operator bool() const noexcept { return fd_ >= 0; }
  void reset() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

inline std::pair<Fd, Fd> make_pipe() {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) {
    throw Error(Errc::io, std::string("pipe: ") + std::strerror(errno));
  }
  return {Fd(fds[0]), Fd(fds[1])};
}

}  // namespace detail

struct SpawnOptions {
  bool pipe_stdin = false;
  bool pipe_stdout = false;
  bool pipe_stderr = false;
  std::string stderr_file;  // when set (and pipe_stderr is not), stderr goes here
};

enum class ReadStatus { line, eof, timeout };

class Subprocess {
 public:
  using Clock = std::chrono::steady_clock;

  /// Starts argv[0] (PATH lookup) with the requested pipes. Throws a
  /// capability error if the program cannot be executed.
  static Subprocess spawn(const std::vector<std::string>& argv, SpawnOptions opts = {}) {
    if (argv.empty()) throw Error(Errc::argument, "empty command line");
    ::signal(SIGPIPE, SIG_IGN);

    detail::Fd in_r, in_w, out_r, out_w, err_r, err_w;
    if (opts.pipe_stdin) std::tie(in_r, in_w) = detail::make_pipe();
    if (opts.pipe_stdout) std::tie(out_r, out_w) = detail::make_pipe();
    if (opts.pipe_stderr) std::tie(err_r, err_w) = detail::make_pipe();
    auto [exec_r, exec_w] = detail::make_pipe();

    std::vector<char*> cargv;
    for (const auto& s : argv) cargv.push_back(const_cast<char*>(s.c_str()));
    cargv.push_back(nullptr);

    const pid_t pid = ::fork();
    if (pid < 0) throw Error(Errc::io, std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
      if (in_r) ::dup2(in_r.get(), STDIN_FILENO);
      if (out_w) ::dup2(out_w.get(), STDOUT_FILENO);
      if (err_w) {
        ::dup2(err_w.get(), STDERR_FILENO);
      } else if (!opts.stderr_file.empty()) {
        const int fd = ::open(opts.stderr_file.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (fd >= 0) ::dup2(fd, STDERR_FILENO);
      }
      ::execvp(cargv[0], cargv.data());
      const int code = errno;
      [[maybe_unused]] auto n = ::write(exec_w.get(), &code, sizeof code);
      ::_exit(127);
    }

    exec_w.reset();
    int child_errno = 0;
    ssize_t got;
    do {
      got = ::read(exec_r.get(), &child_errno, sizeof child_errno);
    } while (got < 0 && errno == EINTR);
    if (got == sizeof child_errno) {
      int status;
      ::waitpid(pid, &status, 0);
      throw Error(Errc::capability,
                  "cannot execute '" + argv[0] + "': " + std::strerror(child_errno));
    }

    Subprocess p;
    p.pid_ = pid;
    p.stdin_ = std::move(in_w);
    p.stdout_ = std::move(out_r);
    p.stderr_ = std::move(err_r);
    return p;
  }

  Subprocess() = default;
  Subprocess(Subprocess&& o) noexcept
      : pid_(std::exchange(o.pid_, -1)),
        exit_status_(o.exit_status_),
        stdin_(std::move(o.stdin_)),
        stdout_(std::move(o.stdout_)),
        stderr_(std::move(o.stderr_)),
        out_buf_(std::move(o.out_buf_)) {}
  Subprocess& operator=(Subprocess&& o) noexcept {
    if (this != &o) {
      kill_and_reap();
      pid_ = std::exchange(o.pid_, -1);
      exit_status_ = o.exit_status_;
      stdin_ = std::move(o.stdin_);
      stdout_ = std::move(o.stdout_);
      stderr_ = std::move(o.stderr_);
      out_buf_ = std::move(o.out_buf_);
    }
    return *this;
  }
  ~Subprocess() { kill_and_reap(); }

  pid_t pid() const noexcept { return pid_; }

  /// Writes `line` plus a newline to the child's stdin. Returns false if the
  /// pipe is closed.
  bool write_line(const std::string& line) {
    if (!stdin_) return false;
    std::string buf = line + "\n";
    const char* p = buf.data();
    std::size_t left = buf.size();
    while (left > 0) {
      const ssize_t w = ::write(stdin_.get(), p, left);
      if (w < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      p += w;
      left -= static_cast<std::size_t>(w);
    }
    return true;
  }

  void close_stdin() noexcept { stdin_.reset(); }

  /// Reads one line (without the newline) from the child's stdout.
  ReadStatus read_line(std::string& line, std::chrono::milliseconds timeout) {
    const auto deadline = Clock::now() + timeout;
    for (;;) {
      if (const auto nl = out_buf_.find('\n'); nl != std::string::npos) {
        line = out_buf_.substr(0, nl);
        out_buf_.erase(0, nl + 1);
        return ReadStatus::line;
      }
      if (!stdout_) return ReadStatus::eof;
      const auto left =
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
      if (left.count() <= 0) return ReadStatus::timeout;
      pollfd pfd{stdout_.get(), POLLIN, 0};
      const int r = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(left.count(), 1 << 30)));
      if (r < 0 && errno == EINTR) continue;
      if (r == 0) return ReadStatus::timeout;
      char chunk[4096];
      const ssize_t got = ::read(stdout_.get(), chunk, sizeof chunk);
      if (got < 0 && errno == EINTR) continue;
      if (got <= 0) {
        stdout_.reset();
        if (!out_buf_.empty()) {
          line = std::exchange(out_buf_, {});
          return ReadStatus::line;
        }
        return ReadStatus::eof;
      }
      out_buf_.append(chunk, static_cast<std::size_t>(got));
    }
  }

  /// Drains stdout and stderr until both close, then reaps the child.
  /// Returns {stdout, stderr}.
  std::pair<std::string, std::string> communicate() {
    close_stdin();
    std::string out = std::exchange(out_buf_, {}), err;
    while (stdout_ || stderr_) {
      pollfd pfds[2];
      int count = 0;
      if (stdout_) pfds[count++] = {stdout_.get(), POLLIN, 0};
      if (stderr_) pfds[count++] = {stderr_.get(), POLLIN, 0};
      if (::poll(pfds, static_cast<nfds_t>(count), -1) < 0) {
        if (errno == EINTR) continue;
        break;
      }
      for (int i = 0; i < count; ++i) {
        if (!(pfds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
        detail::Fd& fd = (stdout_ && pfds[i].fd == stdout_.get()) ? stdout_ : stderr_;
        std::string& dst = (&fd == &stdout_) ? out : err;
        char chunk[4096];
        const ssize_t got = ::read(fd.get(), chunk, sizeof chunk);
        if (got < 0 && errno == EINTR) continue;
        if (got <= 0) {
          fd.reset();
        } else {
          dst.append(chunk, static_cast<std::size_t>(got));
        }
      }
    }
    wait();
    return {std::move(out), std::move(err)};
  }

  /// Waits for exit up to `timeout`; returns the raw wait status on exit.
  std::optional<int> wait_for(std::chrono::milliseconds timeout) {
    if (pid_ < 0) return exit_status_;
    const auto deadline = Clock::now() + timeout;
    for (;;) {
      int status = 0;
      const pid_t r = ::waitpid(pid_, &status, WNOHANG);
      if (r == pid_) {
        pid_ = -1;
        exit_status_ = status;
        return status;
      }
      if (r < 0 && errno != EINTR) {
        pid_ = -1;
        return exit_status_;
      }
      if (Clock::now() >= deadline) return std::nullopt;
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }

  int wait() {
    if (pid_ >= 0) {
      int status = 0;
      while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
      }
      pid_ = -1;
      exit_status_ = status;
    }
    return exit_status_.value_or(-1);
  }

  bool running() const noexcept { return pid_ >= 0; }

  void kill_and_reap() noexcept {
    if (pid_ >= 0) {
      ::kill(pid_, SIGKILL);
      int status;
      while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
      }
      exit_status_ = status;
      pid_ = -1;
    }
  }

  /// Exit code for a normal exit, 128+signal otherwise.
  static int exit_code(int status) noexcept {
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
    return -1;
  }

 private:
  pid_t pid_ = -1;
  std::optional<int> exit_status_;
  detail::Fd stdin_, stdout_, stderr_;
  std::string out_buf_;
};

}  // namespace gemmbench
