#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace spiked::cli {

enum ExitCode : int {
  kSuccess = 0,
  kInternalError = 1,
  kValidationError = 2,
  kBudgetError = 3,
  kNonConvergence = 4,
};

struct Invocation {
  std::string subcommand;
  std::optional<std::string> config_path;
  std::optional<std::string> config_text;  // used when no path is given
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out_dir;
};

const std::vector<std::string>& subcommands();

// Validates the whole config, runs the subcommand, writes CSV files plus
// manifest.json into the output directory, and returns the exit status. On
// failure an error record goes to stderr and error.json.
int run(const Invocation& invocation);

// SHA-1 of "blob <size>\0<content>", hex encoded.
std::string content_hash(std::string_view content);

}  // namespace spiked::cli
