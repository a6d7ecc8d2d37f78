#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "gamvar/assignment.hpp"
#include "gamvar/io.hpp"
#include "gamvar/population.hpp"
#include "gamvar/qframework.hpp"

namespace gamvar {

/// Everything a CLI run needs, resolved against the population file.
///
/// Treatment columns of `population` are reordered to the mechanism's arm
/// order, so arm index z and column z always agree.
struct RunConfig {
  std::filesystem::path base_dir;
  std::filesystem::path population_path;
  PopulationFile population;
  std::optional<AssignmentMechanism> mechanism;
  std::optional<Contrast> contrast;
  std::string q_choice = "strict";
  std::optional<std::filesystem::path> q_file;
  double ga_tol = kDefaultGaTolerance;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
  std::size_t support_cap = kDefaultSupportCap;
};

/// Reads TOML (default) or JSON (by .json extension) into a JSON document.
/// TOML syntax errors report line and column.
Json read_config_document(const std::filesystem::path& path);

/// Builds a RunConfig from a parsed document. Relative paths resolve against
/// `base_dir`. Field errors name the offending key, e.g. "mechanism.counts".
RunConfig config_from_json(const Json& doc, const std::filesystem::path& base_dir);

RunConfig load_config(const std::filesystem::path& path);

/// strict | strat | wholeplot | half | file, sized to the population.
QMatrix resolve_q(const RunConfig& config, const std::string& choice);

/// Short JSON description of a mechanism.
Json describe_mechanism(const AssignmentMechanism& mech, const PopulationFile& population);

}  // namespace gamvar
