#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_int.hpp>

#include "gamvar/population.hpp"

namespace gamvar {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

inline constexpr std::size_t kDefaultSupportCap = 1'000'000;

/// T = {T(z)}: every unit carries exactly one arm index, every arm is used.
class Partition {
 public:
  Partition(std::vector<std::size_t> arm_of, std::size_t num_arms);

  std::size_t num_units() const { return arm_of_.size(); }
  std::size_t num_arms() const { return num_arms_; }
  std::size_t arm_of(std::size_t unit) const { return arm_of_[unit]; }
  const std::vector<std::size_t>& arms() const { return arm_of_; }
  std::vector<std::size_t> members(std::size_t arm) const;
  bool assigned(std::size_t unit, std::size_t arm) const { return arm_of_[unit] == arm; }

  /// Arm index per unit in unit order, one base-36 digit per unit when
  /// |Z| <= 36, otherwise dot-separated decimals. Sorting by this string
  /// matches lexicographic order of the arm vectors.
  std::string encode() const;

  friend bool operator==(const Partition&, const Partition&) = default;
  friend auto operator<=>(const Partition& a, const Partition& b) {
    return a.arm_of_ <=> b.arm_of_;
  }

 private:
  std::vector<std::size_t> arm_of_;
  std::size_t num_arms_;
};

struct CompletelyRandomized {
  std::vector<std::size_t> counts;  // r(z)
};

struct Stratified {
  Grouping strata;
  std::vector<std::vector<std::size_t>> counts;  // counts[h][z] = r_h(z)
};

/// Two-stage design. Arm index of treatment z1z2 is z1 * |Z2| + z2.
struct SplitPlot {
  Grouping wholeplots;
  std::vector<std::size_t> wholeplot_counts;  // r1(z1), sums to H
  std::vector<std::size_t> subplot_counts;    // r2(z2), sums to N0
};

/// Clusters Delta(1..|Z|) receive a uniformly random permutation of arms.
struct Unicluster {
  Grouping clusters;
};

struct CustomSupport {
  std::size_t num_units = 0;
  std::size_t num_arms = 0;
  std::vector<Partition> partitions;
  std::vector<Rational> probabilities;
};

enum class MechanismKind { CompletelyRandomized, Stratified, SplitPlot, Unicluster, Custom };

std::string to_string(MechanismKind kind);

/// A distribution p(T) over partitions of N units into |Z| arms.
class AssignmentMechanism {
 public:
  using Design =
      std::variant<CompletelyRandomized, Stratified, SplitPlot, Unicluster, CustomSupport>;

  static AssignmentMechanism completely_randomized(std::vector<std::size_t> counts);
  static AssignmentMechanism stratified(Grouping strata,
                                        std::vector<std::vector<std::size_t>> counts);
  /// Whole-plot h holds units h*N0 .. (h+1)*N0 - 1.
  static AssignmentMechanism split_plot(std::size_t num_wholeplots, std::size_t wholeplot_size,
                                        std::vector<std::size_t> wholeplot_counts,
                                        std::vector<std::size_t> subplot_counts);
  static AssignmentMechanism split_plot(Grouping wholeplots,
                                        std::vector<std::size_t> wholeplot_counts,
                                        std::vector<std::size_t> subplot_counts);
  static AssignmentMechanism unicluster(Grouping clusters);
  /// Zero-probability entries are dropped; duplicate partitions are merged.
  static AssignmentMechanism custom(std::size_t num_arms, std::vector<Partition> partitions,
                                    std::vector<Rational> probabilities);

  MechanismKind kind() const;
  const Design& design() const { return design_; }
  std::size_t num_units() const { return num_units_; }
  std::size_t num_arms() const { return num_arms_; }

 private:
  AssignmentMechanism(Design design, std::size_t n, std::size_t arms)
      : design_(std::move(design)), num_units_(n), num_arms_(arms) {}

  Design design_;
  std::size_t num_units_;
  std::size_t num_arms_;
};

/// pi_i(z), exact.
Rational first_order_exact(const AssignmentMechanism& mech, std::size_t unit, std::size_t arm);
double first_order(const AssignmentMechanism& mech, std::size_t unit, std::size_t arm);

/// pi_{ii*}(z, z*) for i != i*, exact. Closed forms for the structured designs,
/// a support sum for Custom.
Rational second_order_exact(const AssignmentMechanism& mech, std::size_t unit,
                            std::size_t other_unit, std::size_t arm, std::size_t other_arm);
double second_order(const AssignmentMechanism& mech, std::size_t unit, std::size_t other_unit,
                    std::size_t arm, std::size_t other_arm);

/// Dense first- and second-order tables in double precision.
/// Row/column index of (unit i, arm z) in `joint` is i * |Z| + z; entries with
/// i == i* are zero and never used.
struct AssignmentProbabilities {
  std::size_t num_units = 0;
  std::size_t num_arms = 0;
  Eigen::MatrixXd first;  // N x |Z|
  Eigen::MatrixXd joint;  // N|Z| x N|Z|

  Eigen::Index index(std::size_t unit, std::size_t arm) const {
    return static_cast<Eigen::Index>(unit * num_arms + arm);
  }
  double pi(std::size_t unit, std::size_t arm) const {
    return first(static_cast<Eigen::Index>(unit), static_cast<Eigen::Index>(arm));
  }
  double pi(std::size_t unit, std::size_t other, std::size_t arm, std::size_t other_arm) const {
    return joint(index(unit, arm), index(other, other_arm));
  }
  bool all_pairs_positive() const;
};

AssignmentProbabilities assignment_probabilities(const AssignmentMechanism& mech);

/// Every pi_i(z) > 0.
bool positivity_holds(const AssignmentMechanism& mech);

/// Number of partitions with positive probability.
BigInt support_size(const AssignmentMechanism& mech);

struct Support {
  std::size_t num_units = 0;
  std::size_t num_arms = 0;
  std::vector<Partition> partitions;  // sorted by encoding
  std::vector<Rational> probabilities;

  std::size_t size() const { return partitions.size(); }
};

/// Full support with exact probabilities; throws SupportTooLarge above `cap`.
Support enumerate_support(const AssignmentMechanism& mech, std::size_t cap = kDefaultSupportCap);

/// One draw from p(T); a pure function of (mech, seed).
Partition sample(const AssignmentMechanism& mech, std::uint64_t seed);

struct ReplicationRange {
  std::size_t min = 0;
  std::size_t max = 0;
  bool constant() const { return min == max; }
};

/// Number of units receiving `arm` across the support.
ReplicationRange replication_counts(const AssignmentMechanism& mech, std::size_t arm);

/// Smallest count of units sharing an arm within a randomization block
/// (r(z), r_h(z), r1(z1)); below 2 the design only supports point estimates.
std::size_t min_block_replication(const AssignmentMechanism& mech);
bool point_estimate_only(const AssignmentMechanism& mech);

}  // namespace gamvar
