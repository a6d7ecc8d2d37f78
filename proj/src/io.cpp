#include "gamvar/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/tokenizer.hpp>

#include "gamvar/error.hpp"

namespace gamvar {

// ---------------------------------------------------------------- JSON

namespace {

void escape_string(std::string& out, const std::string& s) {
  out += Json(s).dump();
}

void emit(std::string& out, const Json& v, int indent, int depth) {
  const auto newline = [&](int d) {
    if (indent < 0) return;
    out += '\n';
    out.append(static_cast<std::size_t>(indent * d), ' ');
  };
  switch (v.type()) {
    case Json::value_t::object: {
      if (v.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) out += ',';
        first = false;
        newline(depth + 1);
        escape_string(out, it.key());
        out += indent < 0 ? ":" : ": ";
        emit(out, it.value(), indent, depth + 1);
      }
      newline(depth);
      out += '}';
      return;
    }
    case Json::value_t::array: {
      if (v.empty()) {
        out += "[]";
        return;
      }
      // Arrays of scalars stay on one line.
      const bool flat = std::none_of(v.begin(), v.end(), [](const Json& e) {
        return e.is_object() || e.is_array();
      });
      out += '[';
      bool first = true;
      for (const auto& e : v) {
        if (!first) out += flat ? ", " : ",";
        first = false;
        if (!flat) newline(depth + 1);
        emit(out, e, indent, depth + 1);
      }
      if (!flat) newline(depth);
      out += ']';
      return;
    }
    case Json::value_t::number_float: {
      const double d = v.get<double>();
      if (!std::isfinite(d)) {
        out += "null";
        return;
      }
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", d);
      std::string s(buf);
      if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
      out += s;
      return;
    }
    default:
      out += v.dump();
  }
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  return in;
}

double parse_number(const std::string& text, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    if (!std::isfinite(v)) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(where + ": '" + text + "' is not a finite number");
  }
}

bool is_label_column(const std::string& name, const char* key) {
  std::string lower;
  for (char c : name) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return lower == key;
}

}  // namespace

std::string dump_json(const Json& value, int indent) {
  std::string out;
  emit(out, value, indent, 0);
  return out;
}

// ---------------------------------------------------------------- CSV

std::vector<std::vector<std::string>> read_csv(std::istream& in) {
  using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string> row;
    try {
      for (const auto& field : Tokenizer(line, boost::escaped_list_separator<char>('\\', ',', '"')))
        row.push_back(trim(field));
    } catch (const boost::escaped_list_error& e) {
      throw ConfigError("malformed CSV line " + std::to_string(rows.size() + 1) + ": " + e.what());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::vector<std::string>> read_csv_file(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_csv(in);
}

// ---------------------------------------------------------------- population

PotentialOutcomesTable PopulationFile::table() const {
  if (!outcomes) throw ConfigError("population file has no potential outcomes");
  return PotentialOutcomesTable(frame, treatments, *outcomes);
}

std::size_t PopulationFile::unit_index(const std::string& id) const {
  for (std::size_t i = 0; i < frame.unit_ids.size(); ++i)
    if (frame.unit_ids[i] == id) return i;
  throw ConfigError("unknown unit '" + id + "'");
}

std::size_t PopulationFile::treatment_index(const std::string& label) const {
  for (std::size_t z = 0; z < treatments.size(); ++z)
    if (treatments[z] == label) return z;
  throw ConfigError("unknown treatment '" + label + "'");
}

PopulationFile parse_population_csv(std::istream& in, const std::string& source) {
  const auto rows = read_csv(in);
  if (rows.size() < 2) throw ConfigError(source + ": need a header row and at least one unit");
  const auto& header = rows.front();
  std::optional<std::size_t> stratum_col, wholeplot_col, cluster_col;
  std::vector<std::size_t> treatment_cols;
  PopulationFile pop;
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (is_label_column(header[c], "stratum"))
      stratum_col = c;
    else if (is_label_column(header[c], "wholeplot"))
      wholeplot_col = c;
    else if (is_label_column(header[c], "cluster"))
      cluster_col = c;
    else {
      treatment_cols.push_back(c);
      pop.treatments.push_back(header[c]);
    }
  }
  if (pop.treatments.size() < 2) throw ConfigError(source + ": need at least two treatment columns");
  const auto n = rows.size() - 1;
  std::vector<std::string> strata, plots, clusters;
  Eigen::MatrixXd y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(treatment_cols.size()));
  std::size_t blanks = 0;
  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const auto where = source + " line " + std::to_string(r + 1);
    if (row.size() != header.size())
      throw ConfigError(where + ": expected " + std::to_string(header.size()) + " fields, found " +
                        std::to_string(row.size()));
    if (!seen.insert(row[0]).second) throw ConfigError(where + ": duplicate unit id '" + row[0] + "'");
    pop.frame.unit_ids.push_back(row[0]);
    if (stratum_col) strata.push_back(row[*stratum_col]);
    if (wholeplot_col) plots.push_back(row[*wholeplot_col]);
    if (cluster_col) clusters.push_back(row[*cluster_col]);
    for (std::size_t k = 0; k < treatment_cols.size(); ++k) {
      const auto& cell = row[treatment_cols[k]];
      const auto i = static_cast<Eigen::Index>(r - 1);
      const auto z = static_cast<Eigen::Index>(k);
      if (cell.empty() || cell == "NA") {
        ++blanks;
        y(i, z) = 0.0;
      } else {
        y(i, z) = parse_number(cell, where + " column " + header[treatment_cols[k]]);
      }
    }
  }
  if (stratum_col) pop.frame.strata = Grouping::from_labels(strata);
  if (wholeplot_col) pop.frame.wholeplots = Grouping::from_labels(plots);
  if (cluster_col) pop.frame.clusters = Grouping::from_labels(clusters);
  if (blanks == 0) {
    pop.outcomes = std::move(y);
    try {
      (void)pop.table();
    } catch (const ContractViolation& e) {
      throw ConfigError(source + ": " + e.what());
    }
  } else if (blanks != n * treatment_cols.size()) {
    throw ConfigError(source + ": outcome cells must be either all present or all blank");
  }
  return pop;
}

PopulationFile read_population_csv(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_population_csv(in, path.string());
}

// ---------------------------------------------------------------- rationals

Rational parse_rational(const std::string& text) {
  const auto slash = text.find('/');
  try {
    if (slash == std::string::npos) {
      const auto t = trim(text);
      const auto dot = t.find('.');
      if (dot == std::string::npos) return Rational(BigInt(t));
      const auto frac = t.substr(dot + 1);
      if (frac.empty() || frac.find_first_not_of("0123456789") != std::string::npos)
        throw std::invalid_argument("bad decimal");
      const bool negative = !t.empty() && t[0] == '-';
      const auto whole_text = t.substr(0, dot);
      const BigInt whole(whole_text.empty() || whole_text == "-" || whole_text == "+"
                             ? BigInt(0)
                             : BigInt(whole_text));
      BigInt scale = 1;
      for (std::size_t k = 0; k < frac.size(); ++k) scale *= 10;
      const Rational magnitude = Rational(boost::multiprecision::abs(whole)) + Rational(BigInt(frac), scale);
      return negative ? Rational(-magnitude) : magnitude;
    }
    const BigInt num(trim(text.substr(0, slash)));
    const BigInt den(trim(text.substr(slash + 1)));
    if (den == 0) throw std::invalid_argument("zero denominator");
    return Rational(num, den);
  } catch (const std::exception&) {
    throw ConfigError("'" + text + "' is not a rational number (num/den, integer or decimal)");
  }
}

std::string to_string(const Rational& r) {
  const auto num = boost::multiprecision::numerator(r);
  const auto den = boost::multiprecision::denominator(r);
  if (den == 1) return num.str();
  return num.str() + "/" + den.str();
}

// ---------------------------------------------------------------- design files

AssignmentMechanism read_custom_support_csv(const std::filesystem::path& path,
                                            const PopulationFile& population) {
  const auto rows = read_csv_file(path);
  if (rows.size() < 2) throw ConfigError(path.string() + ": empty support file");
  const auto& header = rows.front();
  const auto n = population.frame.size();
  if (header.size() != n + 1 || header.back() != "probability")
    throw ConfigError(path.string() + ": header must list every unit id and end with 'probability'");
  std::vector<std::size_t> unit_of_col;
  for (std::size_t c = 0; c < n; ++c) unit_of_col.push_back(population.unit_index(header[c]));
  std::vector<Partition> partitions;
  std::vector<Rational> probs;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto where = path.string() + " line " + std::to_string(r + 1);
    if (rows[r].size() != header.size()) throw ConfigError(where + ": wrong number of fields");
    std::vector<std::size_t> arm_of(n);
    for (std::size_t c = 0; c < n; ++c)
      arm_of[unit_of_col[c]] = population.treatment_index(rows[r][c]);
    try {
      partitions.emplace_back(std::move(arm_of), population.treatments.size());
    } catch (const ContractViolation& e) {
      throw ConfigError(where + ": " + e.what());
    }
    probs.push_back(parse_rational(rows[r].back()));
  }
  try {
    return AssignmentMechanism::custom(population.treatments.size(), std::move(partitions),
                                       std::move(probs));
  } catch (const ContractViolation& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

namespace {

std::vector<std::vector<std::string>> keyed_rows(const std::filesystem::path& path,
                                                 const std::vector<std::string>& columns) {
  auto rows = read_csv_file(path);
  if (rows.empty() || rows.front() != columns) {
    std::string expected;
    for (const auto& c : columns) expected += (expected.empty() ? "" : ",") + c;
    throw ConfigError(path.string() + ": header must be " + expected);
  }
  rows.erase(rows.begin());
  for (std::size_t r = 0; r < rows.size(); ++r)
    if (rows[r].size() != columns.size())
      throw ConfigError(path.string() + " line " + std::to_string(r + 2) + ": wrong number of fields");
  return rows;
}

}  // namespace

Partition read_partition_csv(const std::filesystem::path& path, const PopulationFile& population) {
  const auto rows = keyed_rows(path, {"unit", "treatment"});
  const auto n = population.frame.size();
  std::vector<std::optional<std::size_t>> arm(n);
  for (const auto& row : rows) {
    const auto i = population.unit_index(row[0]);
    if (arm[i]) throw ConfigError(path.string() + ": unit " + row[0] + " listed twice");
    arm[i] = population.treatment_index(row[1]);
  }
  std::vector<std::size_t> arm_of;
  for (std::size_t i = 0; i < n; ++i) {
    if (!arm[i]) throw ConfigError(path.string() + ": unit " + population.frame.unit_ids[i] + " missing");
    arm_of.push_back(*arm[i]);
  }
  try {
    return Partition(std::move(arm_of), population.treatments.size());
  } catch (const ContractViolation& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_partition_csv(std::ostream& out, const Partition& partition,
                         const PopulationFile& population) {
  out << "unit,treatment\n";
  for (std::size_t i = 0; i < partition.num_units(); ++i)
    out << population.frame.unit_ids[i] << ',' << population.treatments[partition.arm_of(i)] << '\n';
}

ObservedOutcomes read_observed_csv(const std::filesystem::path& path,
                                   const PopulationFile& population) {
  const auto rows = keyed_rows(path, {"unit", "treatment", "outcome"});
  const auto n = population.frame.size();
  std::vector<std::optional<std::size_t>> arm(n);
  std::vector<double> value(n);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const auto i = population.unit_index(row[0]);
    if (arm[i])
      throw ConfigError(path.string() + ": extra observation for unit " + row[0] +
                        " (each unit reveals exactly one outcome)");
    arm[i] = population.treatment_index(row[1]);
    value[i] = parse_number(row[2], path.string() + " line " + std::to_string(r + 2));
  }
  std::vector<std::size_t> arm_of;
  for (std::size_t i = 0; i < n; ++i) {
    if (!arm[i])
      throw ConfigError(path.string() + ": missing observation for unit " + population.frame.unit_ids[i]);
    arm_of.push_back(*arm[i]);
  }
  try {
    return ObservedOutcomes(Partition(std::move(arm_of), population.treatments.size()), value);
  } catch (const ContractViolation& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

QMatrix read_q_csv(const std::filesystem::path& path) {
  const auto rows = read_csv_file(path);
  const auto n = rows.size();
  Eigen::MatrixXd q(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    if (rows[r].size() != n) throw ConfigError(path.string() + ": Q must be square");
    for (std::size_t c = 0; c < n; ++c)
      q(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          parse_number(rows[r][c], path.string() + " line " + std::to_string(r + 1));
  }
  try {
    return QMatrix(std::move(q), "file");
  } catch (const ContractViolation& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace gamvar
