#include "mer/subprocess.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>

#include "mer/error.hpp"

namespace mer {

std::vector<std::string> expand_command(const std::string& command_template,
                                        const std::map<std::string, std::string>& vars) {
  std::vector<std::string> args;
  std::string cur;
  bool in_token = false;
  char quote = 0;
  for (char ch : command_template) {
    if (quote != 0) {
      if (ch == quote) {
        quote = 0;
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '\'' || ch == '"') {
      quote = ch;
      in_token = true;
    } else if (ch == ' ' || ch == '\t' || ch == '\n') {
      if (in_token) args.push_back(std::move(cur));
      cur.clear();
      in_token = false;
    } else {
      cur.push_back(ch);
      in_token = true;
    }
  }
  if (quote != 0) throw Error(ErrorKind::InvalidConfig, "unterminated quote in command");
  if (in_token) args.push_back(std::move(cur));

  for (auto& arg : args) {
    for (const auto& [name, value] : vars) {
      const std::string key = "{" + name + "}";
      for (auto pos = arg.find(key); pos != std::string::npos;
           pos = arg.find(key, pos + value.size())) {
        arg.replace(pos, key.size(), value);
      }
    }
  }
  if (args.empty()) throw Error(ErrorKind::InvalidConfig, "empty command");
  return args;
}

namespace {

struct Pipe {
  int fd[2] = {-1, -1};
  Pipe() {
    if (::pipe2(fd, O_CLOEXEC) != 0) {
      throw Error(ErrorKind::BackendFailure, std::string("pipe: ") + std::strerror(errno));
    }
  }
  ~Pipe() {
    close_read();
    close_write();
  }
  void close_read() {
    if (fd[0] >= 0) ::close(fd[0]);
    fd[0] = -1;
  }
  void close_write() {
    if (fd[1] >= 0) ::close(fd[1]);
    fd[1] = -1;
  }
};

}  // namespace

ProcessResult run_process(const std::vector<std::string>& argv, const std::string& input) {
  if (argv.empty()) throw Error(ErrorKind::InvalidConfig, "empty command");
  // A child that exits before reading its stdin must not kill us.
  static const bool sigpipe_ignored = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)sigpipe_ignored;
  Pipe in, out, err, exec_status;

  std::vector<char*> cargv;
  cargv.reserve(argv.size() + 1);
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);

  const pid_t pid = ::fork();
  if (pid < 0) throw Error(ErrorKind::BackendFailure, "fork failed");
  if (pid == 0) {
    ::dup2(in.fd[0], STDIN_FILENO);
    ::dup2(out.fd[1], STDOUT_FILENO);
    ::dup2(err.fd[1], STDERR_FILENO);
    ::execvp(cargv[0], cargv.data());
    const int code = errno;
    [[maybe_unused]] auto n = ::write(exec_status.fd[1], &code, sizeof(code));
    ::_exit(127);
  }

  in.close_read();
  out.close_write();
  err.close_write();
  exec_status.close_write();

  int exec_errno = 0;
  const bool exec_failed =
      ::read(exec_status.fd[0], &exec_errno, sizeof(exec_errno)) == sizeof(exec_errno);
  exec_status.close_read();

  ProcessResult result;
  std::size_t written = 0;
  if (input.empty() || exec_failed) in.close_write();

  // Feed stdin and drain stdout/stderr in one poll loop.
  std::array<char, 65536> buf;
  while (out.fd[0] >= 0 || err.fd[0] >= 0) {
    std::array<pollfd, 3> fds{};
    nfds_t n = 0;
    int out_idx = -1, err_idx = -1, in_idx = -1;
    if (out.fd[0] >= 0) { out_idx = static_cast<int>(n); fds[n++] = {out.fd[0], POLLIN, 0}; }
    if (err.fd[0] >= 0) { err_idx = static_cast<int>(n); fds[n++] = {err.fd[0], POLLIN, 0}; }
    if (in.fd[1] >= 0) { in_idx = static_cast<int>(n); fds[n++] = {in.fd[1], POLLOUT, 0}; }
    if (::poll(fds.data(), n, -1) < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (in_idx >= 0 && (fds[in_idx].revents & (POLLOUT | POLLERR | POLLHUP))) {
      const ssize_t w = ::write(in.fd[1], input.data() + written, input.size() - written);
      if (w <= 0) {
        in.close_write();
      } else {
        written += static_cast<std::size_t>(w);
        if (written == input.size()) in.close_write();
      }
    }
    auto drain = [&](int idx, Pipe& p, std::string& sink) {
      if (idx < 0 || !(fds[idx].revents & (POLLIN | POLLHUP | POLLERR))) return;
      const ssize_t r = ::read(p.fd[0], buf.data(), buf.size());
      if (r <= 0) {
        p.close_read();
      } else {
        sink.append(buf.data(), static_cast<std::size_t>(r));
      }
    };
    drain(out_idx, out, result.out);
    drain(err_idx, err, result.err);
  }
  in.close_write();

  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (exec_failed) {
    throw Error(ErrorKind::DecoderNotFound,
                argv[0] + ": " + std::strerror(exec_errno));
  }
  if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.exit_code = 128 + WTERMSIG(status);
  }
  return result;
}

}  // namespace mer
