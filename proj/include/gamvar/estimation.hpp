#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "gamvar/assignment.hpp"
#include "gamvar/population.hpp"

namespace gamvar {

/// Outcomes revealed by one realized partition: Y_i(z) for i in T(z) only.
///
/// Holds no unobserved cell. Asking for Y_i(z) with i outside T(z) throws
/// std::logic_error, so estimator code cannot silently peek at the science.
class ObservedOutcomes {
 public:
  ObservedOutcomes(Partition partition, std::vector<double> observed);

  /// Copies exactly the observed cells out of a full table.
  static ObservedOutcomes observe(const PotentialOutcomesTable& table, const Partition& partition);

  const Partition& partition() const { return partition_; }
  std::size_t num_units() const { return observed_.size(); }
  double outcome(std::size_t unit, std::size_t arm) const;
  /// Y_i^obs, whatever arm unit i received.
  double observed(std::size_t unit) const { return observed_[unit]; }

 private:
  Partition partition_;
  std::vector<double> observed_;
};

struct HorvitzThompson {};

/// a(T, z) and b_i(T, z) for one partition. Only b(i, z) with i in T(z) is read.
struct LueCoefficients {
  Eigen::VectorXd a;  // |Z|
  Eigen::MatrixXd b;  // N x |Z|
};

/// General linear estimator keyed by partition encoding; needs an enumerable
/// mechanism.
struct CustomLue {
  std::map<std::string, LueCoefficients> by_partition;
};

using Lue = std::variant<HorvitzThompson, CustomLue>;

/// Checks unbiasedness structurally: sum_T p(T) a(T,z) = 0 and
/// sum_{T: i in T(z)} p(T) b_i(T,z) = 1/N. Throws ContractViolation otherwise.
void validate_lue(const AssignmentMechanism& mech, const Lue& lue,
                  std::size_t cap = kDefaultSupportCap);

/// Treatment-mean estimator for a fixed (mechanism, LUE) pair.
class MeanEstimator {
 public:
  MeanEstimator(const AssignmentMechanism& mech, Lue lue);

  double mean(const ObservedOutcomes& obs, std::size_t arm) const;
  std::vector<double> means(const ObservedOutcomes& obs) const;
  double contrast(const ObservedOutcomes& obs, const Eigen::VectorXd& g) const;

 private:
  std::size_t num_units_;
  std::size_t num_arms_;
  Lue lue_;
  Eigen::MatrixXd ht_weight_;  // 1 / (N pi_i(z)), HT only
};

/// Sum_{i in T(z)} Y_i(z) / (N pi_i(z)).
double ht_mean_estimate(const ObservedOutcomes& obs, const AssignmentMechanism& mech,
                        std::size_t arm);

/// sum_z g(z) * means[z], with `means` in the contrast's treatment order given
/// by `order`.
double contrast_estimate(const Contrast& c, const std::vector<std::string>& order,
                         const std::vector<double>& means);

/// Coefficients of E[Yhat(z) Yhat(z*)] as a polynomial in the potential
/// outcomes. Pair (i, z) maps to index i * |Z| + z.
struct CrossMomentCoefficients {
  std::size_t num_units = 0;
  std::size_t num_arms = 0;
  Eigen::MatrixXd A;   // |Z| x |Z|
  Eigen::MatrixXd A1;  // N x |Z|^2, column z * |Z| + z*
  Eigen::MatrixXd A2;  // N x |Z|^2
  Eigen::MatrixXd B;   // N|Z| x N|Z|

  Eigen::Index index(std::size_t unit, std::size_t arm) const {
    return static_cast<Eigen::Index>(unit * num_arms + arm);
  }
  Eigen::Index pair(std::size_t arm, std::size_t other_arm) const {
    return static_cast<Eigen::Index>(arm * num_arms + other_arm);
  }
  double b(std::size_t i, std::size_t j, std::size_t z, std::size_t w) const {
    return B(index(i, z), index(j, w));
  }
};

/// HT: closed form from the assignment probabilities. Custom: by enumeration.
CrossMomentCoefficients cross_moments(const AssignmentMechanism& mech, const Lue& lue,
                                      std::size_t cap = kDefaultSupportCap);

/// E[Yhat(z) Yhat(z*)] from the cross-moment coefficients.
double second_moment(const CrossMomentCoefficients& k, const PotentialOutcomesTable& table,
                     std::size_t arm, std::size_t other_arm);

/// c + sum_{i,z} (l_i(z) Y_i(z) + s_i(z) Y_i(z)^2) + sum_{z,z*} sum_{i != i*} x Y_i(z) Y_i*(z*).
///
/// Shared shape of the M, M-tilde, R and R-tilde coefficient families.
struct QuadraticCoefficients {
  std::size_t num_units = 0;
  std::size_t num_arms = 0;
  double constant = 0.0;
  Eigen::MatrixXd linear;  // N x |Z|
  Eigen::MatrixXd square;  // N x |Z|
  Eigen::MatrixXd cross;   // N|Z| x N|Z|, zero on the i == i* blocks

  double evaluate(const PotentialOutcomesTable& table) const;
};

/// M, M_i(z), M_ii(z), M_ii*(z, z*) for contrast coefficients g.
QuadraticCoefficients m_coefficients(const CrossMomentCoefficients& k, const Eigen::VectorXd& g);
/// R, R_i(z), R_ii(z), R_ii*(z, z*) for the pair (g1, g2).
QuadraticCoefficients r_coefficients(const CrossMomentCoefficients& k, const Eigen::VectorXd& g1,
                                     const Eigen::VectorXd& g2);

/// var(tau-hat): M-coefficient assembly minus tau-bar squared.
double sampling_variance(const PotentialOutcomesTable& table, const CrossMomentCoefficients& k,
                         const Contrast& c);
double sampling_variance(const PotentialOutcomesTable& table, const AssignmentMechanism& mech,
                         const Lue& lue, const Contrast& c);

/// var(tau-hat) as sum_{z,z*} g(z) g(z*) E[Yhat(z) Yhat(z*)] - tau-bar^2.
double sampling_variance_pairwise(const PotentialOutcomesTable& table,
                                  const CrossMomentCoefficients& k, const Contrast& c);

/// cov(tau-hat_1, tau-hat_2): R-coefficient assembly minus tau-bar_1 tau-bar_2.
double sampling_covariance(const PotentialOutcomesTable& table, const CrossMomentCoefficients& k,
                           const Contrast& c1, const Contrast& c2);
double sampling_covariance(const PotentialOutcomesTable& table, const AssignmentMechanism& mech,
                           const Lue& lue, const Contrast& c1, const Contrast& c2);

struct NeymanDecomposition {
  double s00 = 0.0;       // S(0,0), divisor N - 1
  double s11 = 0.0;       // S(1,1)
  double s_tau = 0.0;     // S(tau,tau) for tau_i = Y_i(1) - Y_i(0)
  double variance = 0.0;  // S00/r0 + S11/r1 - S_tau/N
};

/// Two-arm completely randomized design; column 0 is control, column 1 treated.
NeymanDecomposition neyman_two_arm_variance(const PotentialOutcomesTable& table, std::size_t r0,
                                            std::size_t r1);

/// Stratified HT variance in closed form:
/// (1/N^2) sum_h N_h (sum_z g(z)^2 N_h / r_h(z) S_h(z,z) - S_h(tau,tau)).
double stratified_variance_closed_form(const PotentialOutcomesTable& table,
                                       const Stratified& design, const Contrast& c);

}  // namespace gamvar
