#ifndef SENSPROBE_SOLVER_HPP
#define SENSPROBE_SOLVER_HPP

// Runs an external SMT-LIB solver on a script file and reads back its answer.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cctype>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sensprobe/error.hpp"
#include "sensprobe/exact.hpp"
#include "sensprobe/smt_encode.hpp"

extern char** environ;

namespace sensprobe {

struct SolverConfig {
  std::string command = "z3";
  /// "{file}" is replaced by the script path.
  std::vector<std::string> args{"-smt2", "{file}"};
  /// Appended when `seed` is set; "{seed}" is replaced by its value.
  std::vector<std::string> seed_args{"smt.random_seed={seed}"};
  std::optional<unsigned> seed;
  /// Where scripts are written; the system temp dir when empty.
  std::filesystem::path scratch_dir;

  /// Default config, honouring the SENSPROBE_SOLVER environment variable.
  static SolverConfig from_env() {
    SolverConfig c;
    if (const char* cmd = std::getenv("SENSPROBE_SOLVER"); cmd && *cmd) c.command = cmd;
    return c;
  }
};

enum class SolveStatus { Sat, Unsat, Unknown, Timeout };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Sat: return "sat";
    case SolveStatus::Unsat: return "unsat";
    case SolveStatus::Unknown: return "unknown";
    case SolveStatus::Timeout: return "timeout";
  }
  return "?";
}

struct SolveResult {
  SolveStatus status = SolveStatus::Unknown;
  /// Requested values; filled for Sat only.
  std::map<std::string, Rational> values;
  double seconds = 0;
  std::string output;
  /// Why a Sat answer was downgraded, if it was.
  std::string note;

  const Rational& value(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) throw SolverError("no value for " + name, output);
    return it->second;
  }
};

// ---------------------------------------------------------------------------
// S-expressions as printed by get-value.

struct SExpr {
  std::string atom;
  std::vector<SExpr> items;
  bool is_list = false;

  bool is_atom(std::string_view a) const { return !is_list && atom == a; }
};

class SExprReader {
 public:
  explicit SExprReader(std::string_view text) : text_(text) {}

  bool at_end() {
    skip_space();
    return pos_ >= text_.size();
  }

  SExpr read() {
    skip_space();
    if (pos_ >= text_.size()) throw SolverError("unexpected end of solver output", std::string(text_));
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      SExpr e;
      e.is_list = true;
      while (true) {
        skip_space();
        if (pos_ >= text_.size()) throw SolverError("unbalanced parentheses in solver output", std::string(text_));
        if (text_[pos_] == ')') {
          ++pos_;
          return e;
        }
        e.items.push_back(read());
      }
    }
    if (c == ')') throw SolverError("unexpected ')' in solver output", std::string(text_));
    SExpr e;
    if (c == '"') {
      std::size_t end = pos_ + 1;
      while (end < text_.size() && !(text_[end] == '"' && (end + 1 >= text_.size() || text_[end + 1] != '"')))
        end += text_[end] == '"' ? 2 : 1;
      e.atom = std::string(text_.substr(pos_, end + 1 - pos_));
      pos_ = end + 1;
      return e;
    }
    if (c == '|') {
      const std::size_t end = text_.find('|', pos_ + 1);
      if (end == std::string_view::npos) throw SolverError("unterminated quoted symbol", std::string(text_));
      e.atom = std::string(text_.substr(pos_ + 1, end - pos_ - 1));
      pos_ = end + 1;
      return e;
    }
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) && text_[pos_] != '(' &&
           text_[pos_] != ')')
      ++pos_;
    e.atom = std::string(text_.substr(start, pos_ - start));
    return e;
  }

 private:
  void skip_space() {
    while (pos_ < text_.size()) {
      if (std::isspace(static_cast<unsigned char>(text_[pos_]))) {
        ++pos_;
      } else if (text_[pos_] == ';') {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

/// Exact value of a numeral, decimal, (- v) or (/ p q) term, nested freely.
inline Rational parse_value(const SExpr& e) {
  if (!e.is_list) return parse_decimal(e.atom);
  if (e.items.size() == 2 && e.items[0].is_atom("-")) return -parse_value(e.items[1]);
  if (e.items.size() == 3 && e.items[0].is_atom("/")) {
    const Rational den = parse_value(e.items[2]);
    if (den == 0) throw UnsupportedValue("division by zero in model value");
    return parse_value(e.items[1]) / den;
  }
  std::string head = e.items.empty() || e.items[0].is_list ? "()" : e.items[0].atom;
  throw UnsupportedValue("unsupported model value form: " + head);
}

inline Rational parse_value(std::string_view text) {
  SExprReader r(text);
  SExpr e = r.read();
  if (!r.at_end()) throw UnsupportedValue("trailing text after value");
  return parse_value(e);
}

namespace detail {

/// Interprets solver stdout: a status line, then for sat one get-value list.
inline void read_answer(SolveResult& res, const std::vector<std::string>& requested) {
  SExprReader reader(res.output);
  if (reader.at_end()) throw SolverError("solver produced no output", res.output);
  const SExpr head = reader.read();
  if (head.is_atom("unsat")) {
    res.status = SolveStatus::Unsat;
    return;
  }
  if (head.is_atom("unknown")) {
    res.status = SolveStatus::Unknown;
    return;
  }
  if (head.is_list && !head.items.empty() && head.items[0].is_atom("error"))
    throw SolverError("solver reported an error", res.output);
  if (!head.is_atom("sat")) throw SolverError("unparsable solver output", res.output);
  res.status = SolveStatus::Sat;
  if (requested.empty()) return;
  if (reader.at_end()) throw SolverError("sat answer without requested values", res.output);
  const SExpr vals = reader.read();
  if (!vals.is_list) throw SolverError("unparsable get-value output", res.output);
  if (!vals.items.empty() && vals.items[0].is_atom("error")) throw SolverError("solver reported an error", res.output);
  try {
    for (const auto& pair : vals.items) {
      if (!pair.is_list || pair.items.size() != 2 || pair.items[0].is_list)
        throw SolverError("unparsable get-value entry", res.output);
      res.values[pair.items[0].atom] = parse_value(pair.items[1]);
    }
  } catch (const UnsupportedValue& e) {
    res.status = SolveStatus::Unknown;
    res.values.clear();
    res.note = e.what();
    return;
  }
  for (const auto& name : requested)
    if (!res.values.contains(name)) throw SolverError("solver omitted value for " + name, res.output);
}

class ScratchFile {
 public:
  ScratchFile(const std::filesystem::path& dir, const std::string& contents) {
    const auto base = dir.empty() ? std::filesystem::temp_directory_path() : dir;
    std::string tmpl = (base / "sensprobe-XXXXXX.smt2").string();
    const int fd = ::mkstemps(tmpl.data(), 5);
    if (fd < 0) throw SolverError(std::string("cannot create script file: ") + std::strerror(errno));
    path_ = tmpl;
    std::size_t off = 0;
    while (off < contents.size()) {
      const ssize_t n = ::write(fd, contents.data() + off, contents.size() - off);
      if (n < 0) {
        ::close(fd);
        throw SolverError("cannot write script file");
      }
      off += static_cast<std::size_t>(n);
    }
    ::close(fd);
  }
  ~ScratchFile() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  ScratchFile(const ScratchFile&) = delete;
  ScratchFile& operator=(const ScratchFile&) = delete;

  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

inline std::string replace_all(std::string s, std::string_view from, const std::string& to) {
  for (std::size_t p = s.find(from); p != std::string::npos; p = s.find(from, p + to.size())) s.replace(p, from.size(), to);
  return s;
}

}  // namespace detail

/// Runs the solver on `script_text`, killing it once `timeout_s` seconds of
/// wall time have passed. No timeout when `timeout_s` is empty.
inline SolveResult solve_text(const std::string& script_text, const std::vector<std::string>& requested,
                              std::optional<double> timeout_s, const SolverConfig& cfg = SolverConfig::from_env()) {
  detail::ScratchFile file(cfg.scratch_dir, script_text);

  std::vector<std::string> argv_s{cfg.command};
  for (const auto& a : cfg.args) argv_s.push_back(detail::replace_all(a, "{file}", file.path()));
  if (cfg.seed)
    for (const auto& a : cfg.seed_args) argv_s.push_back(detail::replace_all(a, "{seed}", std::to_string(*cfg.seed)));
  std::vector<char*> argv;
  for (auto& a : argv_s) argv.push_back(a.data());
  argv.push_back(nullptr);

  int pipefd[2];
  if (::pipe2(pipefd, O_CLOEXEC) != 0) throw SolverError("pipe failed");
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null", O_RDONLY, 0);
  posix_spawn_file_actions_adddup2(&actions, pipefd[1], STDOUT_FILENO);
  posix_spawn_file_actions_adddup2(&actions, pipefd[1], STDERR_FILENO);

  // Own process group, so a timeout also takes down anything the solver forked.
  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
  posix_spawnattr_setpgroup(&attr, 0);

  const auto start = std::chrono::steady_clock::now();
  pid_t pid = 0;
  const int rc = ::posix_spawnp(&pid, cfg.command.c_str(), &actions, &attr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  posix_spawnattr_destroy(&attr);
  ::close(pipefd[1]);
  if (rc != 0) {
    ::close(pipefd[0]);
    throw SolverError("cannot start solver '" + cfg.command + "': " + std::strerror(rc));
  }

  SolveResult res;
  bool timed_out = false;
  char buf[8192];
  while (true) {
    int wait_ms = -1;
    if (timeout_s) {
      const double left = *timeout_s - std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (left <= 0) {
        timed_out = true;
        break;
      }
      wait_ms = static_cast<int>(std::ceil(left * 1000.0));
    }
    pollfd pfd{pipefd[0], POLLIN, 0};
    const int pr = ::poll(&pfd, 1, wait_ms);
    if (pr < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (pr == 0) continue;  // deadline re-checked at the top
    const ssize_t n = ::read(pipefd[0], buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    res.output.append(buf, static_cast<std::size_t>(n));
  }
  if (timed_out) ::kill(-pid, SIGKILL);
  ::close(pipefd[0]);
  int wstatus = 0;
  while (::waitpid(pid, &wstatus, 0) < 0 && errno == EINTR) {
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (timed_out) {
    res.status = SolveStatus::Timeout;
    return res;
  }
  if (WIFSIGNALED(wstatus)) throw SolverError("solver terminated by signal " + std::to_string(WTERMSIG(wstatus)), res.output);
  if (WIFEXITED(wstatus) && WEXITSTATUS(wstatus) == 127 && res.output.empty())
    throw SolverError("solver '" + cfg.command + "' could not be executed");
  detail::read_answer(res, requested);
  return res;
}

inline SolveResult solve(const SmtScript& script, std::optional<double> timeout_s,
                         const SolverConfig& cfg = SolverConfig::from_env()) {
  return solve_text(script.text(), script.query_symbols, timeout_s, cfg);
}

}  // namespace sensprobe

#endif  // SENSPROBE_SOLVER_HPP
