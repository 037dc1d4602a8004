#pragma once
// POSIX child-process helpers: one-shot runs with a deadline and a
// line-oriented long-lived child.

#include <chrono>
#include <optional>
#include <string>
#include <vector>

namespace toolstar {

struct ProcessResult {
  int exit_code = -1;
  bool signaled = false;
  bool timed_out = false;
  std::string out;
  std::string err;
  std::uint64_t wall_ms = 0;
};

// Runs argv with `input` on stdin; the process group is killed at the
// deadline. Throws Error{Io} when argv[0] cannot be executed.
ProcessResult run_process(const std::vector<std::string>& argv,
                          const std::string& input,
                          std::chrono::milliseconds timeout);

class ChildProcess {
 public:
  // Throws Error{Io} when argv[0] cannot be executed.
  explicit ChildProcess(const std::vector<std::string>& argv);
  ~ChildProcess();
  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  // Throws Error{Io} when the child has exited.
  void write_line(const std::string& line);
  // nullopt on EOF or timeout.
  std::optional<std::string> read_line(std::chrono::milliseconds timeout);
  // Closes stdin and waits up to `grace` before killing; returns exit code.
  int close(std::chrono::milliseconds grace = std::chrono::milliseconds(2000));

 private:
  int pid_ = -1;
  int in_fd_ = -1;
  int out_fd_ = -1;
  std::string buffer_;
};

}  // namespace toolstar
