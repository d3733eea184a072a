#pragma once

// Command implementations behind the C API and the command-line tool.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "identikit/config.hpp"
#include "identikit/error.hpp"
#include "identikit/models.hpp"

namespace identikit {

inline constexpr const char* kVersion = "0.1.0";

struct CommandOptions {
  std::string out_dir;  // empty: the config's output directory
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  std::optional<std::size_t> simulate;
  std::string data;
};

struct CommandResult {
  std::vector<std::string> files;  // written, in order
  Json summary;
};

const std::vector<std::string>& command_names();

// Throws Error; the kind selects the exit code.
CommandResult run_command(const std::string& command, RunConfig config, const CommandOptions& options);

// Score operator of a configured model at the coarse or fine grid (the
// pricing operator A for the Euler model).
LinOp build_operator(const RunConfig& config, bool fine);

int exit_code(ErrorKind kind);

}  // namespace identikit
