#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace uiscout {

// Bad or inconsistent configuration values (weights, dimensions, CLI options).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A store or graph was asked to do something that would corrupt its invariants.
struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed persisted data; carries the 1-based line number of the offending record.
struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, std::size_t line_no)
      : std::runtime_error(msg + " (line " + std::to_string(line_no) + ")"),
        line(line_no) {}
  std::size_t line;
};

// Scenario file failed validation; `violations` lists every detected problem.
struct ScenarioError : std::runtime_error {
  explicit ScenarioError(std::vector<std::string> problems)
      : std::runtime_error(join(problems)), violations(std::move(problems)) {}
  std::vector<std::string> violations;

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "scenario validation failed:";
    for (const auto& s : v) {
      out += "\n  - ";
      out += s;
    }
    return out;
  }
};

}  // namespace uiscout
