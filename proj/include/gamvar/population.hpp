#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gamvar {

/// Assignment of units to named groups (strata, whole-plots, clusters).
struct Grouping {
  std::vector<std::string> names;     // group labels in first-seen order
  std::vector<std::size_t> group_of;  // unit -> index into names

  static Grouping from_labels(const std::vector<std::string>& labels);
  /// Consecutive blocks: units [0, sizes[0]) form group 0, and so on.
  static Grouping contiguous(const std::vector<std::size_t>& sizes);

  std::size_t num_groups() const { return names.size(); }
  std::size_t num_units() const { return group_of.size(); }
  std::vector<std::size_t> sizes() const;
  std::vector<std::vector<std::size_t>> members() const;
};

/// Unit identifiers plus optional design labels, without outcomes.
struct UnitFrame {
  std::vector<std::string> unit_ids;
  std::optional<Grouping> strata;
  std::optional<Grouping> wholeplots;
  std::optional<Grouping> clusters;

  std::size_t size() const { return unit_ids.size(); }
};

/// Full science table: every potential outcome Y_i(z) for every unit.
///
/// Rows are units, columns are treatments in canonical order. The table is
/// immutable after construction; observed-data code paths go through
/// ObservedOutcomes and never see unobserved cells.
class PotentialOutcomesTable {
 public:
  PotentialOutcomesTable(UnitFrame units, std::vector<std::string> treatments,
                         Eigen::MatrixXd y);

  /// Units labelled "1".."N" with no design labels.
  static PotentialOutcomesTable from_matrix(std::vector<std::string> treatments,
                                            Eigen::MatrixXd y);

  std::size_t num_units() const { return static_cast<std::size_t>(y_.rows()); }
  std::size_t num_treatments() const {
    return static_cast<std::size_t>(y_.cols());
  }
  const UnitFrame& units() const { return units_; }
  const std::vector<std::string>& treatments() const { return treatments_; }
  const Eigen::MatrixXd& outcomes() const { return y_; }
  double outcome(std::size_t unit, std::size_t arm) const {
    return y_(static_cast<Eigen::Index>(unit), static_cast<Eigen::Index>(arm));
  }
  Eigen::VectorXd column(std::size_t arm) const {
    return y_.col(static_cast<Eigen::Index>(arm));
  }
  std::size_t treatment_index(const std::string& label) const;

  /// Same units and labels, new outcome matrix.
  PotentialOutcomesTable with_outcomes(Eigen::MatrixXd y) const;

 private:
  UnitFrame units_;
  std::vector<std::string> treatments_;
  Eigen::MatrixXd y_;
};

/// Coefficients g(z) over treatment labels; sum zero and not all zero.
class Contrast {
 public:
  Contrast(std::vector<std::string> treatments, std::vector<double> weights);

  const std::vector<std::string>& treatments() const { return treatments_; }
  const std::vector<double>& weights() const { return weights_; }

  /// Coefficient vector laid out in the given treatment order. Treatments the
  /// contrast does not mention get zero; unknown labels are rejected.
  Eigen::VectorXd aligned(const std::vector<std::string>& order) const;

  Contrast scaled(double factor) const;

 private:
  std::vector<std::string> treatments_;
  std::vector<double> weights_;
};

Contrast linear_combination(double alpha, const Contrast& a, double beta,
                            const Contrast& b);

struct FactorialStructure {
  std::vector<std::size_t> levels;  // s_1..s_K
  std::vector<int> effect;          // x_1..x_K, binary
  std::optional<std::vector<std::vector<double>>> per_factor_vectors;
};

/// Lexicographic level-tuple labels, e.g. {2,3} -> 00 01 02 10 11 12.
/// Digits are joined with '.' once any factor has more than ten levels.
std::vector<std::string> factorial_treatment_labels(
    const std::vector<std::size_t>& levels);

/// Orthonormal Helmert contrasts for s levels: s-1 vectors of length s.
std::vector<std::vector<double>> helmert_contrasts(std::size_t s);

/// g = g_1 (x) ... (x) g_K mapped onto lexicographic treatment labels.
/// Missing per-factor vectors default to ones/s_k for x_k = 0 and to the
/// first orthonormal Helmert vector for x_k = 1.
Contrast factorial_contrast(const FactorialStructure& fs);

/// Every Kronecker product of Helmert vectors for the factors in the effect:
/// an orthonormal basis of the effect's contrast space.
std::vector<Contrast> factorial_effect_basis(
    const std::vector<std::size_t>& levels, const std::vector<int>& effect);

std::vector<double> treatment_means(const PotentialOutcomesTable& table);
Eigen::VectorXd unit_contrasts(const PotentialOutcomesTable& table,
                               const Contrast& c);
double population_contrast(const PotentialOutcomesTable& table,
                           const Contrast& c);

}  // namespace gamvar
