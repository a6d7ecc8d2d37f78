#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gamvar/assignment.hpp"
#include "gamvar/error.hpp"
#include "gamvar/estimation.hpp"
#include "gamvar/population.hpp"

namespace gamvar {

/// Row-sum, diagonal and psd diagnostics for a candidate Q.
struct QValidation {
  bool square = false;
  bool symmetric = false;
  bool row_sums_zero = false;
  bool diagonal_ok = false;
  bool psd = false;
  double max_asymmetry = 0.0;
  double max_row_sum = 0.0;       // max |sum_j q_ij|
  double max_diagonal_error = 0.0;  // max |q_ii - 1/N^2|
  double min_eigenvalue = 0.0;

  bool ok() const { return square && symmetric && row_sums_zero && diagonal_ok && psd; }
};

/// Checks membership in the class: symmetric, Q 1 = 0 (1e-10), q_ii = 1/N^2,
/// minimum eigenvalue >= -1e-10. The diagonal is compared with a relative
/// tolerance of 1e-12 so that matrices read back from text still pass.
QValidation validate_q(const Eigen::MatrixXd& q);

/// A validated member of the Q class.
class QMatrix {
 public:
  /// Throws ContractViolation with the failing diagnostics.
  explicit QMatrix(Eigen::MatrixXd q, std::string name = "custom");

  const Eigen::MatrixXd& matrix() const { return q_; }
  const std::string& name() const { return name_; }
  std::size_t size() const { return static_cast<std::size_t>(q_.rows()); }
  double operator()(std::size_t i, std::size_t j) const {
    return q_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

 private:
  Eigen::MatrixXd q_;
  std::string name_;
};

/// (N(N-1))^{-1} (I - J/N).
QMatrix q_strict(std::size_t n);
/// Block diagonal over strata; within a block the off-diagonal is -1/(N^2(N_h-1)).
QMatrix q_strat(const Grouping& strata);
QMatrix q_strat(const std::vector<std::size_t>& sizes);
/// Diagonal blocks all 1/N^2, off-diagonal blocks all -1/(N^2(H-1)).
QMatrix q_wholeplot(const Grouping& wholeplots);
QMatrix q_wholeplot(std::size_t num_wholeplots, std::size_t wholeplot_size);
/// The two-block case of q_wholeplot: first N0 units against the last N0.
QMatrix q_half(std::size_t half_size);

double lambda_max(const QMatrix& q);

/// tau' Q tau.
double bias(const QMatrix& q, const Eigen::VectorXd& tau);
/// tau_1' Q tau_2.
double bias(const QMatrix& q, const Eigen::VectorXd& tau1, const Eigen::VectorXd& tau2);

inline constexpr double kDefaultGaTolerance = 1e-9;

struct GaResult {
  bool holds = false;
  double max_residual = 0.0;  // max over arm pairs of ||Q(Y(z) - Y(z*))||_inf
  std::size_t arm = 0;        // pair attaining the maximum
  std::size_t other_arm = 0;
};

/// Generalized additivity: Q(Y(z) - Y(z*)) = 0 for every pair of arms.
GaResult ga_condition(const QMatrix& q, const PotentialOutcomesTable& table,
                      double tol = kDefaultGaTolerance);

struct SapResult {
  bool holds = true;
  std::optional<PairWitness> witness;  // first offending (i, i*, z, z*)
};

/// pi_ii*(z,z*) = 0 implies g(z) g(z*) (q_ii* - 1/N^2) = 0, over all i != i*.
SapResult sap_condition(const QMatrix& q, const AssignmentProbabilities& probs,
                        const Eigen::VectorXd& g);
SapResult sap_condition(const QMatrix& q, const AssignmentMechanism& mech,
                        const Eigen::VectorXd& g);
/// pi_ii*(z,z*) = 0 implies q_ii* = 1/N^2, whatever the contrast.
SapResult sap_sufficient(const QMatrix& q, const AssignmentProbabilities& probs);
SapResult sap_sufficient(const QMatrix& q, const AssignmentMechanism& mech);

/// M with M_ii* replaced by g(z) g(z*) (B_ii* + q_ii* - 1/N^2).
QuadraticCoefficients m_tilde_coefficients(const CrossMomentCoefficients& k,
                                           const Eigen::VectorXd& g, const QMatrix& q);
/// R with R_ii* replaced by g1(z) g2(z*) (B_ii* + q_ii* - 1/N^2).
QuadraticCoefficients r_tilde_coefficients(const CrossMomentCoefficients& k,
                                           const Eigen::VectorXd& g1, const Eigen::VectorXd& g2,
                                           const QMatrix& q);

/// V_Q, the estimable upper bound: var + tau' Q tau.
double v_q(const PotentialOutcomesTable& table, const CrossMomentCoefficients& k,
           const Contrast& c, const QMatrix& q);
double v_q(const PotentialOutcomesTable& table, const AssignmentMechanism& mech, const Lue& lue,
           const Contrast& c, const QMatrix& q);
/// C_Q = cov + tau_1' Q tau_2.
double c_q(const PotentialOutcomesTable& table, const CrossMomentCoefficients& k,
           const Contrast& c1, const Contrast& c2, const QMatrix& q);

/// Plug-in estimator of a quadratic form in the potential outcomes from one
/// realized partition: each term is divided by its inclusion probability.
///
/// Construction refuses with SapViolation when some nonzero cross coefficient
/// sits on a pair that is never co-assigned.
class QuadraticFormEstimator {
 public:
  QuadraticFormEstimator(QuadraticCoefficients form, AssignmentProbabilities probs);

  double operator()(const ObservedOutcomes& obs) const;

 private:
  QuadraticCoefficients form_;
  AssignmentProbabilities probs_;
};

/// V-hat_Q for a fixed (mechanism, LUE, contrast, Q).
class VqEstimator {
 public:
  VqEstimator(const AssignmentMechanism& mech, const Lue& lue, const Eigen::VectorXd& g,
              const QMatrix& q);

  double operator()(const ObservedOutcomes& obs) const { return estimator_(obs); }

 private:
  QuadraticFormEstimator estimator_;
};

/// c-hat_Q for a fixed (mechanism, LUE, contrast pair, Q).
class CqEstimator {
 public:
  CqEstimator(const AssignmentMechanism& mech, const Lue& lue, const Eigen::VectorXd& g1,
              const Eigen::VectorXd& g2, const QMatrix& q);

  double operator()(const ObservedOutcomes& obs) const { return estimator_(obs); }

 private:
  QuadraticFormEstimator estimator_;
};

double v_q_hat(const ObservedOutcomes& obs, const AssignmentMechanism& mech, const Lue& lue,
               const Contrast& c, const std::vector<std::string>& order, const QMatrix& q);
double c_q_hat(const ObservedOutcomes& obs, const AssignmentMechanism& mech, const Lue& lue,
               const Contrast& c1, const Contrast& c2, const std::vector<std::string>& order,
               const QMatrix& q);

/// Everything about one (table, design, contrast, Q) combination.
struct VarianceReport {
  double var = 0.0;
  double v_q = 0.0;
  double bias = 0.0;
  std::optional<double> v_q_hat;  // absent when SAP fails or no partition was given
  bool sap_ok = false;
  bool ga_ok = false;
  std::optional<PairWitness> sap_witness;
  double ga_residual = 0.0;
};

VarianceReport variance_report(const PotentialOutcomesTable& table,
                               const AssignmentMechanism& mech, const Lue& lue,
                               const Contrast& c, const QMatrix& q,
                               const std::optional<Partition>& realized = std::nullopt,
                               double ga_tol = kDefaultGaTolerance);

struct MinimaxChoice {
  std::optional<QMatrix> q;  // empty: no Q in the class admits unbiased estimation of V_Q
  std::string rationale;
};

/// Smallest worst-case bias among admissible Q: q_strict when every
/// pi_ii*(z,z*) is positive, q_wholeplot for split-plot designs, otherwise
/// none.
MinimaxChoice minimax_q(const AssignmentMechanism& mech);

/// Bias of V-hat under a strict-additivity Q and an alternative Q*, with the
/// additivity scenario the table falls in: 1 both GA, 2 only Q* GA, 3 neither.
struct BiasTable {
  int scenario = 0;
  bool ga_strict = false;
  bool ga_alternative = false;
  double bias_strict = 0.0;
  double bias_alternative = 0.0;
};

BiasTable bias_table(const PotentialOutcomesTable& table, const Contrast& c,
                     const QMatrix& strict, const QMatrix& alternative,
                     double ga_tol = kDefaultGaTolerance);

/// Stratified HT closed forms with Q = q_strat:
/// V_Q = N^-2 sum_h sum_z g(z)^2 N_h^2 / r_h(z) S_h(z,z), and its plug-in with
/// within-stratum, within-arm sample variances.
double v_q_stratified_closed_form(const PotentialOutcomesTable& table, const Stratified& design,
                                  const Contrast& c);
double v_q_hat_stratified_closed_form(const ObservedOutcomes& obs, const Stratified& design,
                                      const Contrast& c, const std::vector<std::string>& order);

/// tau' Q_strat tau = N^-2 sum_h N_h S_h(tau,tau).
double strat_bias_closed_form(const Eigen::VectorXd& tau, const Grouping& strata);

/// Random member of the Q class of size n and rank at most `rank`: Q = V V'
/// with V column-centred and every row of norm 1/N, found by alternating
/// projections. Returns nothing if the projections do not converge.
std::optional<QMatrix> random_q(std::size_t n, std::size_t rank, std::uint64_t seed,
                                std::uint64_t stream = 0);

/// Q1 (x) (1 1') with Q1 = (H^2/N^2) times a random H x H member of the class.
std::optional<QMatrix> random_kronecker_q(std::size_t num_wholeplots,
                                          std::size_t wholeplot_size, std::uint64_t seed,
                                          std::uint64_t stream = 0);

/// Max-norm distance from Q to the Q1 (x) (1 1') family over contiguous
/// whole-plots of size N0 (block means replace each block; diagonal blocks
/// must equal 1/N^2).
double kronecker_block_distance(const QMatrix& q, std::size_t num_wholeplots,
                                std::size_t wholeplot_size);

}  // namespace gamvar
