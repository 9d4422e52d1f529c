#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace langevin::cli {

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> threads;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitIo = 4;

// Runs one of: sample, rates, blr, lyapunov, check-stationarity. Never throws;
// the returned value is the process exit code.
int run_command(const std::string& command, const GlobalOptions& options);

// Hex SHA-256 of the canonical (sorted-key, compact) dump of a JSON value.
std::string config_digest(const std::string& canonical_text);

}  // namespace langevin::cli
