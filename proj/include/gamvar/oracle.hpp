#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gamvar/assignment.hpp"
#include "gamvar/estimation.hpp"
#include "gamvar/population.hpp"
#include "gamvar/qframework.hpp"

namespace gamvar {

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

struct ExactMoment {
  double value = 0.0;
  std::size_t support_size = 0;
  Rational weight_check = 0;  // sum of p(T); exactly 1 for a valid support
};

using Statistic = std::function<double(const Partition&)>;

/// Sum_T p(T) statistic(T) over the full support, in support order.
ExactMoment expectation(const Support& support, const Statistic& statistic);
ExactMoment expectation(const AssignmentMechanism& mech, const Statistic& statistic,
                        std::size_t cap = kDefaultSupportCap);

/// |a - b| and |a - b| / max(|a|, |b|, scale); the relative part is 0 when
/// the denominator is 0.
struct Residual {
  double value = 0.0;
  double reference = 0.0;
  double absolute = 0.0;
  double relative = 0.0;
};

Residual compare(double value, double reference, double scale = 0.0);

/// E[tau-hat] against tau-bar.
Residual verify_unbiasedness(const PotentialOutcomesTable& table, const AssignmentMechanism& mech,
                             const Lue& lue, const Contrast& c);

/// Coefficient assembly of the variance against E[tau-hat^2] - E[tau-hat]^2.
Residual verify_variance(const PotentialOutcomesTable& table, const AssignmentMechanism& mech,
                         const Lue& lue, const Contrast& c);

struct VqCheck {
  Residual against_v_q;  // E[V-hat_Q] vs V_Q
  Residual against_var;  // E[V-hat_Q] vs var(tau-hat); zero under GA
  double bias = 0.0;     // tau' Q tau, computed directly
};

/// Throws SapViolation when (Q, mech, c) fails the SAP condition.
VqCheck verify_vq_estimator(const PotentialOutcomesTable& table, const AssignmentMechanism& mech,
                            const Lue& lue, const Contrast& c, const QMatrix& q);

struct CovarianceCheck {
  Residual assembly;     // R assembly vs enumeration covariance
  Residual against_c_q;  // E[c-hat_Q] vs C_Q
  Residual against_cov;  // E[c-hat_Q] vs enumeration covariance
};

CovarianceCheck verify_covariance(const PotentialOutcomesTable& table,
                                  const AssignmentMechanism& mech, const Lue& lue,
                                  const Contrast& c1, const Contrast& c2, const QMatrix& q);

struct ProbabilityCheck {
  std::size_t first_order_mismatches = 0;
  std::size_t second_order_mismatches = 0;
  std::size_t support_size = 0;
  bool weights_sum_to_one = false;
};

/// Closed-form pi_i(z) and pi_ii*(z,z*) against exact support sums.
ProbabilityCheck verify_assignment_probabilities(const AssignmentMechanism& mech,
                                                 std::size_t cap = kDefaultSupportCap);

/// An unbiased non-HT linear estimator for an enumerable mechanism: HT
/// weights and zero intercepts, each perturbed per partition by seeded noise
/// that averages out under p(T).
CustomLue perturbed_lue(const AssignmentMechanism& mech, std::uint64_t seed,
                        std::size_t cap = kDefaultSupportCap);

struct OracleCheck {
  std::string name;
  std::string detail;  // Q name or contrast pair, when relevant
  Residual residual;
  double tolerance = 0.0;
  bool passed = false;
};

struct OracleCase {
  std::string label;
  std::size_t support_size = 0;
  std::vector<OracleCheck> checks;

  bool passed() const;
};

struct BatteryReport {
  std::string name;
  std::uint64_t seed = 0;
  std::vector<OracleCase> cases;

  bool passed() const;
  std::size_t num_checks() const;
  /// Largest relative residual per check name.
  std::map<std::string, double> max_relative() const;
};

/// Every oracle check for one design: probabilities, unbiasedness, both
/// variance routes, the var = V_Q - tau'Qtau identity per Q, V-hat_Q (or its refusal) per Q, and the
/// covariance checks for each pair of contrasts.
OracleCase run_oracle_case(std::string label, const AssignmentMechanism& mech,
                           const PotentialOutcomesTable& table,
                           const std::vector<Contrast>& contrasts, const std::vector<QMatrix>& qs,
                           const Lue& lue = HorvitzThompson{},
                           std::size_t cap = kDefaultSupportCap);

/// Names accepted by run_battery.
std::vector<std::string> battery_names();

/// "cr", "stratified", "splitplot", "unicluster", "custom", or "grid" (the
/// full cross-product of designs, tables, contrasts and Q choices).
BatteryReport run_battery(const std::string& name, std::uint64_t seed,
                          std::size_t cap = kDefaultSupportCap);

}  // namespace gamvar
