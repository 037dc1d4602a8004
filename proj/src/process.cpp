#include "toolstar/process.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "toolstar/errors.hpp"

namespace toolstar {

namespace {

using clock = std::chrono::steady_clock;

struct Pipe {
  int r = -1;
  int w = -1;
  Pipe() {
    int fds[2];
    if (::pipe2(fds, O_CLOEXEC) != 0) {
      throw Error(Errc::Io, std::string("pipe: ") + std::strerror(errno));
    }
    r = fds[0];
    w = fds[1];
  }
};

void close_fd(int& fd) {
  if (fd >= 0) ::close(fd);
  fd = -1;
}

// Forks argv with the given pipe ends as stdio. Exec failures are reported
// through a close-on-exec status pipe.
int spawn(const std::vector<std::string>& argv, int in_r, int out_w,
          int err_w) {
  if (argv.empty()) throw Error(Errc::Io, "empty command");
  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);

  Pipe status;
  const pid_t pid = ::fork();
  if (pid < 0) {
    throw Error(Errc::Io, std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(in_r, 0);
    ::dup2(out_w, 1);
    ::dup2(err_w, 2);
    ::execvp(args[0], args.data());
    const int e = errno;
    [[maybe_unused]] auto n = ::write(status.w, &e, sizeof e);
    ::_exit(127);
  }
  ::close(status.w);
  int child_errno = 0;
  const auto n = ::read(status.r, &child_errno, sizeof child_errno);
  ::close(status.r);
  if (n == sizeof child_errno) {
    ::waitpid(pid, nullptr, 0);
    throw Error(Errc::Io, "cannot execute " + argv[0] + ": " +
                              std::strerror(child_errno));
  }
  return pid;
}

}  // namespace

ProcessResult run_process(const std::vector<std::string>& argv,
                          const std::string& input,
                          std::chrono::milliseconds timeout) {
  ::signal(SIGPIPE, SIG_IGN);
  Pipe in, out, err;
  const auto start = clock::now();
  int pid;
  try {
    pid = spawn(argv, in.r, out.w, err.w);
  } catch (...) {
    for (int* fd : {&in.r, &in.w, &out.r, &out.w, &err.r, &err.w}) close_fd(*fd);
    throw;
  }
  close_fd(in.r);
  close_fd(out.w);
  close_fd(err.w);
  ::fcntl(in.w, F_SETFL, O_NONBLOCK);

  ProcessResult res;
  std::size_t written = 0;
  if (input.empty()) close_fd(in.w);
  const auto deadline = start + timeout;
  char buf[65536];
  while (out.r >= 0 || err.r >= 0) {
    const auto now = clock::now();
    if (now >= deadline) {
      res.timed_out = true;
      break;
    }
    std::vector<pollfd> fds;
    if (in.w >= 0) fds.push_back({in.w, POLLOUT, 0});
    if (out.r >= 0) fds.push_back({out.r, POLLIN, 0});
    if (err.r >= 0) fds.push_back({err.r, POLLIN, 0});
    const auto left =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now);
    const int rc = ::poll(fds.data(), fds.size(),
                          static_cast<int>(std::max<std::int64_t>(1, left.count())));
    if (rc < 0 && errno != EINTR) break;
    for (const auto& p : fds) {
      if (p.revents == 0) continue;
      if (p.fd == in.w) {
        const auto n = ::write(in.w, input.data() + written, input.size() - written);
        if (n > 0) written += static_cast<std::size_t>(n);
        if (n < 0 && errno != EAGAIN) written = input.size();
        if (written >= input.size()) close_fd(in.w);
      } else {
        const auto n = ::read(p.fd, buf, sizeof buf);
        if (n > 0) {
          (p.fd == out.r ? res.out : res.err).append(buf, static_cast<std::size_t>(n));
        } else if (n == 0 || errno != EINTR) {
          if (p.fd == out.r) {
            close_fd(out.r);
          } else {
            close_fd(err.r);
          }
        }
      }
    }
  }
  close_fd(in.w);
  close_fd(out.r);
  close_fd(err.r);
  if (res.timed_out) ::kill(-pid, SIGKILL);
  int status = 0;
  ::waitpid(pid, &status, 0);
  if (WIFEXITED(status)) {
    res.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    res.signaled = true;
  }
  res.wall_ms = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::milliseconds>(clock::now() - start)
          .count());
  return res;
}

ChildProcess::ChildProcess(const std::vector<std::string>& argv) {
  ::signal(SIGPIPE, SIG_IGN);
  Pipe in, out;
  try {
    pid_ = spawn(argv, in.r, out.w, 2);
  } catch (...) {
    for (int* fd : {&in.r, &in.w, &out.r, &out.w}) close_fd(*fd);
    throw;
  }
  ::close(in.r);
  ::close(out.w);
  in_fd_ = in.w;
  out_fd_ = out.r;
}

ChildProcess::~ChildProcess() { close(std::chrono::milliseconds(500)); }

void ChildProcess::write_line(const std::string& line) {
  if (in_fd_ < 0) throw Error(Errc::Io, "child stdin is closed");
  std::string data = line + "\n";
  std::size_t off = 0;
  while (off < data.size()) {
    const auto n = ::write(in_fd_, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::Io, std::string("write to child: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

std::optional<std::string> ChildProcess::read_line(
    std::chrono::milliseconds timeout) {
  const auto deadline = clock::now() + timeout;
  char buf[4096];
  while (true) {
    if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    if (out_fd_ < 0) return std::nullopt;
    const auto now = clock::now();
    if (now >= deadline) return std::nullopt;
    pollfd p{out_fd_, POLLIN, 0};
    const auto left =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now);
    const int rc = ::poll(&p, 1, static_cast<int>(std::max<std::int64_t>(1, left.count())));
    if (rc < 0 && errno == EINTR) continue;
    if (rc <= 0) continue;
    const auto n = ::read(out_fd_, buf, sizeof buf);
    if (n > 0) {
      buffer_.append(buf, static_cast<std::size_t>(n));
    } else if (n == 0 || errno != EINTR) {
      close_fd(out_fd_);
      if (!buffer_.empty()) {
        std::string line = std::move(buffer_);
        buffer_.clear();
        return line;
      }
      return std::nullopt;
    }
  }
}

int ChildProcess::close(std::chrono::milliseconds grace) {
  if (pid_ < 0) return -1;
  close_fd(in_fd_);
  const auto deadline = clock::now() + grace;
  int status = 0;
  int code = -1;
  while (true) {
    const pid_t r = ::waitpid(pid_, &status, WNOHANG);
    if (r == pid_) {
      if (WIFEXITED(status)) code = WEXITSTATUS(status);
      break;
    }
    if (r < 0 || clock::now() >= deadline) {
      ::kill(-pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
      break;
    }
    ::usleep(5000);
  }
  close_fd(out_fd_);
  pid_ = -1;
  return code;
}

}  // namespace toolstar
