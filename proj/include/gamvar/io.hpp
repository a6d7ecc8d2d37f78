#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "gamvar/assignment.hpp"
#include "gamvar/estimation.hpp"
#include "gamvar/population.hpp"
#include "gamvar/qframework.hpp"

namespace gamvar {

using Json = nlohmann::ordered_json;

/// Compact JSON with keys in insertion order and doubles printed with 17
/// significant digits; NaN and infinities become null.
std::string dump_json(const Json& value, int indent = 2);

/// Rows of a CSV file with quoted fields; blank lines are skipped.
std::vector<std::vector<std::string>> read_csv(std::istream& in);
std::vector<std::vector<std::string>> read_csv_file(const std::filesystem::path& path);

/// A population file: unit id first, then optional `stratum`, `wholeplot`,
/// `cluster` columns, then one column per treatment. Outcome cells may be
/// left blank, in which case only the unit frame is usable.
struct PopulationFile {
  UnitFrame frame;
  std::vector<std::string> treatments;
  std::optional<Eigen::MatrixXd> outcomes;

  /// Throws ConfigError when outcome cells are missing.
  PotentialOutcomesTable table() const;
  std::size_t unit_index(const std::string& id) const;
  std::size_t treatment_index(const std::string& label) const;
};

PopulationFile parse_population_csv(std::istream& in, const std::string& source = "<stream>");
PopulationFile read_population_csv(const std::filesystem::path& path);

/// Custom support: header lists unit ids then `probability`; each row gives the
/// treatment label of every unit and a probability written "num/den", as an
/// integer, or as a decimal (read exactly, so 0.1 is 1/10).
AssignmentMechanism read_custom_support_csv(const std::filesystem::path& path,
                                            const PopulationFile& population);

/// `unit,treatment` rows, one per unit.
Partition read_partition_csv(const std::filesystem::path& path, const PopulationFile& population);
void write_partition_csv(std::ostream& out, const Partition& partition,
                         const PopulationFile& population);

/// `unit,treatment,outcome` rows, exactly one per unit.
ObservedOutcomes read_observed_csv(const std::filesystem::path& path,
                                   const PopulationFile& population);

/// Square numeric CSV without a header.
QMatrix read_q_csv(const std::filesystem::path& path);

/// "num/den", integer or decimal; exact.
Rational parse_rational(const std::string& text);
std::string to_string(const Rational& r);

}  // namespace gamvar
