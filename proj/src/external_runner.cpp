#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <regex>

#include <fmt/format.h>

#include "cfglearn/error.hpp"
#include "cfglearn/solver_adapter.hpp"

namespace cfglearn {

namespace {

std::string shell_quote(std::string_view s) {
  std::string out = "'";
  for (char ch : s) {
    if (ch == '\'')
      out += "'\\''";
    else
      out.push_back(ch);
  }
  out.push_back('\'');
  return out;
}

std::string sanitize(std::string_view s) {
  std::string out;
  for (char ch : s)
    out.push_back(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '.' ? ch : '_');
  return out;
}

// Placeholder names appearing in the template, without braces.
std::vector<std::string> placeholders(const std::string& tpl) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = tpl.find('{', pos)) != std::string::npos) {
    const std::size_t end = tpl.find('}', pos);
    if (end == std::string::npos) throw ArgumentError("unterminated placeholder in command template");
    out.push_back(tpl.substr(pos + 1, end - pos - 1));
    pos = end + 1;
  }
  return out;
}

}  // namespace

void CommandSpec::validate(const ParameterSchema& schema) const {
  if (command_template.empty()) throw ArgumentError("command template is empty");
  if (seeds_per_pair == 0) throw ArgumentError("seeds_per_pair must be positive");
  if (!(time_limit_seconds > 0.0)) throw ArgumentError("time limit must be positive");
  if (!(grace_seconds >= 0.0)) throw ArgumentError("grace period must be nonnegative");
  try {
    std::regex re(gap_pattern);
    if (re.mark_count() < 1) throw ArgumentError("gap pattern needs a capture group");
  } catch (const std::regex_error& e) {
    throw ArgumentError(fmt::format("invalid gap pattern: {}", e.what()));
  }

  const auto names = placeholders(command_template);
  auto has = [&](const std::string& n) { return std::find(names.begin(), names.end(), n) != names.end(); };
  for (const std::string& n : names) {
    if (n == "instance" || n == "seed" || n == "timelimit") continue;
    if (n.rfind("param:", 0) == 0 && schema.find_parameter(n.substr(6))) continue;
    throw ArgumentError(fmt::format("unknown placeholder '{{{}}}' in command template", n));
  }
  if (!has("instance")) throw ArgumentError("command template lacks {instance}");
  if (!has("seed")) throw ArgumentError("command template lacks {seed}");
  for (const Parameter& p : schema.parameters())
    if (!has("param:" + p.name))
      throw ArgumentError(fmt::format("command template lacks {{param:{}}}", p.name));
}

std::string render_command(const CommandSpec& spec, const ParameterSchema& schema,
                           const std::string& instance_path, const Configuration& c,
                           std::uint64_t seed) {
  const SettingTuple settings = decode_configuration(schema, c);
  const std::string& tpl = spec.command_template;
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = tpl.find('{', pos);
    if (open == std::string::npos) {
      out += tpl.substr(pos);
      break;
    }
    const std::size_t close = tpl.find('}', open);
    if (close == std::string::npos) throw ArgumentError("unterminated placeholder in command template");
    out += tpl.substr(pos, open - pos);
    const std::string name = tpl.substr(open + 1, close - open - 1);
    if (name == "instance") {
      out += shell_quote(instance_path);
    } else if (name == "seed") {
      out += std::to_string(seed);
    } else if (name == "timelimit") {
      out += fmt::format("{}", spec.time_limit_seconds);
    } else if (name.rfind("param:", 0) == 0) {
      const auto p = schema.find_parameter(name.substr(6));
      if (!p) throw ArgumentError(fmt::format("unknown parameter in placeholder '{}'", name));
      out += shell_quote(schema.parameter(*p).settings[settings[*p]]);
    } else {
      throw ArgumentError(fmt::format("unknown placeholder '{{{}}}'", name));
    }
    pos = close + 1;
  }
  return out;
}

CommandOutcome run_command(const std::string& command, double kill_after_seconds) {
  int fds[2];
  if (::pipe(fds) != 0) throw ExternalError(fmt::format("pipe failed: {}", std::strerror(errno)));

  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(fds[0]);
    ::close(fds[1]);
    throw ExternalError(fmt::format("fork failed: {}", std::strerror(errno)));
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(fds[1], STDOUT_FILENO);
    ::dup2(fds[1], STDERR_FILENO);
    ::close(fds[0]);
    ::close(fds[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  ::close(fds[1]);

  CommandOutcome outcome;
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                            std::chrono::duration<double>(kill_after_seconds));
  char buf[4096];
  bool open = true;
  while (open) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      outcome.timed_out = true;
      ::kill(-pid, SIGKILL);
      break;
    }
    pollfd pfd{fds[0], POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(left.count(), 100)));
    if (ready < 0 && errno != EINTR) break;
    if (ready > 0) {
      const ssize_t got = ::read(fds[0], buf, sizeof buf);
      if (got > 0)
        outcome.output.append(buf, static_cast<std::size_t>(got));
      else if (got == 0 || errno != EINTR)
        open = false;
    }
  }
  ::close(fds[0]);

  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (outcome.timed_out) {
    outcome.exit_status = -1;
    return outcome;
  }
  outcome.exit_status = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  if (outcome.exit_status == 126 || outcome.exit_status == 127)
    throw ExternalError(fmt::format("command could not be executed (status {}): {}",
                                    outcome.exit_status, outcome.output));
  return outcome;
}

double parse_gap(const std::string& output, const std::string& pattern) {
  const std::regex re(pattern);
  double gap = kInfinity;
  bool found = false;
  for (auto it = std::sregex_iterator(output.begin(), output.end(), re);
       it != std::sregex_iterator(); ++it) {
    const std::string text = (*it)[1].str();
    if (text == "inf" || text == "Inf") {
      gap = kInfinity;
      found = true;
      continue;
    }
    try {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used == text.size() && v >= 0.0 && std::isfinite(v)) {
        gap = v;
        found = true;
      }
    } catch (const std::exception&) {
    }
  }
  return found ? gap : kInfinity;
}

double run_external(const CommandSpec& spec, const std::string& instance_path,
                    const Configuration& c, const ParameterSchema& schema) {
  spec.validate(schema);
  const std::string cid = config_id(decode_configuration(schema, c));
  std::vector<double> gaps;
  for (std::size_t k = 0; k < spec.seeds_per_pair; ++k) {
    const std::uint64_t seed = spec.base_seed + k;
    const std::string cmd = render_command(spec, schema, instance_path, c, seed);
    const CommandOutcome out = run_command(cmd, spec.time_limit_seconds + spec.grace_seconds);
    const double gap = out.timed_out ? kInfinity : parse_gap(out.output, spec.gap_pattern);
    gaps.push_back(gap);

    if (spec.log_dir) {
      const auto dir = *spec.log_dir /
                       (sanitize(std::filesystem::path(instance_path).filename().string()) + "__" + cid);
      std::filesystem::create_directories(dir);
      std::ofstream log(dir / fmt::format("seed_{}.log", seed));
      log << "# command: " << cmd << "\n# exit: " << out.exit_status
          << (out.timed_out ? " (timed out)" : "") << "\n# gap: " << gap << "\n"
          << out.output;
    }
  }
  return second_best(gaps);
}

}  // namespace cfglearn
