#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gamvar/config.hpp"
#include "gamvar/io.hpp"

namespace gamvar {

/// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfigError = 2,
  kExitRefused = 3,
  kExitOracleFailure = 4,
};

struct CommandOutput {
  Json json;
  int exit_code = kExitOk;
};

/// First-order table and second-order pairs (i < i*). Above `max_pairs`
/// second-order rows, a sample of pairs drawn with cfg.seed is reported
/// instead (ConfigError without a seed).
CommandOutput cmd_probs(const RunConfig& cfg, std::size_t max_pairs = 20000);

/// One draw from the mechanism; optionally also written as unit,treatment CSV.
CommandOutput cmd_assign(const RunConfig& cfg, std::uint64_t seed,
                         const std::optional<std::filesystem::path>& csv_out);

/// HT treatment means and the contrast estimate from observed outcomes.
CommandOutput cmd_estimate(const RunConfig& cfg, const std::filesystem::path& observed,
                           const std::optional<std::filesystem::path>& partition);

/// Exact sampling variance of the contrast from the full science table.
CommandOutput cmd_variance(const RunConfig& cfg, const std::string& q_choice);

/// tau-hat and V-hat_Q from one realized assignment. On SAP failure the
/// output carries the witness pair and exit code kExitRefused.
CommandOutput cmd_analyze(const RunConfig& cfg, const std::string& q_choice,
                          const std::filesystem::path& observed,
                          const std::optional<std::filesystem::path>& partition);

/// Q validity, GA/SAP conditions, the variance report and the minimax Q.
CommandOutput cmd_check(const RunConfig& cfg, const std::string& q_choice,
                        const std::optional<std::filesystem::path>& partition);

/// Named battery, or (when cfg is given) the config's own design.
CommandOutput cmd_oracle(const std::string& battery, std::uint64_t seed,
                         std::size_t cap = kDefaultSupportCap);
CommandOutput cmd_oracle(const RunConfig& cfg);

struct SimulateOptions {
  std::vector<std::string> models{"I", "II", "III", "IV", "V", "VI"};
  std::size_t reps = 100;
  std::uint64_t seed = 0;
  std::vector<double> g{1.0, -2.0, 1.0};
  std::vector<std::size_t> sizes{30, 20};
  unsigned threads = 0;
  bool end_to_end = false;
  std::size_t draws = 200;
  std::optional<std::filesystem::path> out_dir;  // writes study.json and boxplot.csv
};

CommandOutput cmd_simulate(const SimulateOptions& options);

/// Kronecker contrast over lexicographic level labels; with `basis`, the
/// full orthonormal basis of the effect instead.
CommandOutput cmd_factorial(const std::vector<std::size_t>& levels, const std::vector<int>& effect,
                            const std::optional<std::vector<std::vector<double>>>& vectors,
                            bool basis);

}  // namespace gamvar
