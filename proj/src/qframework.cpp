#include "gamvar/qframework.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gamvar/linalg.hpp"
#include "gamvar/rng.hpp"

namespace gamvar {

namespace {

Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }

double inv_n2(std::size_t n) {
  const double d = static_cast<double>(n);
  return 1.0 / (d * d);
}

std::string describe(const QValidation& v) {
  std::ostringstream os;
  os << "not a valid Q matrix:";
  if (!v.square) return os.str() + " not square";
  if (!v.symmetric) os << " asymmetry " << v.max_asymmetry << ";";
  if (!v.row_sums_zero) os << " row sum " << v.max_row_sum << ";";
  if (!v.diagonal_ok) os << " diagonal off by " << v.max_diagonal_error << ";";
  if (!v.psd) os << " minimum eigenvalue " << v.min_eigenvalue << ";";
  return os.str();
}

void check_units(const QMatrix& q, std::size_t n) {
  if (q.size() != n) throw ContractViolation("Q has the wrong number of units");
}

}  // namespace

// ---------------------------------------------------------------- class membership

QValidation validate_q(const Eigen::MatrixXd& q) {
  QValidation v;
  v.square = q.rows() == q.cols() && q.rows() >= 2;
  if (!v.square) return v;
  const auto n = static_cast<std::size_t>(q.rows());
  const double target = inv_n2(n);
  v.max_asymmetry = (q - q.transpose()).cwiseAbs().maxCoeff();
  v.symmetric = v.max_asymmetry <= 1e-12 * target;
  v.max_row_sum = q.rowwise().sum().cwiseAbs().maxCoeff();
  v.row_sums_zero = v.max_row_sum <= 1e-10;
  v.max_diagonal_error = (q.diagonal().array() - target).abs().maxCoeff();
  v.diagonal_ok = v.max_diagonal_error <= 1e-12 * target;
  const Eigen::MatrixXd sym = 0.5 * (q + q.transpose());
  v.min_eigenvalue = min_eigenvalue(sym);
  v.psd = v.min_eigenvalue >= -1e-10;
  return v;
}

QMatrix::QMatrix(Eigen::MatrixXd q, std::string name) : q_(std::move(q)), name_(std::move(name)) {
  const auto v = validate_q(q_);
  if (!v.ok()) throw ContractViolation(describe(v));
}

QMatrix q_strict(std::size_t n) {
  if (n < 2) throw ContractViolation("q_strict needs N >= 2");
  const double d = static_cast<double>(n);
  Eigen::MatrixXd q = Eigen::MatrixXd::Constant(ix(n), ix(n), -1.0 / (d * d * (d - 1.0)));
  q.diagonal().setConstant(inv_n2(n));
  return QMatrix(std::move(q), "strict");
}

QMatrix q_strat(const Grouping& strata) {
  const auto n = strata.num_units();
  const auto sizes = strata.sizes();
  for (auto s : sizes)
    if (s < 2) throw ContractViolation("q_strat needs every stratum to hold at least 2 units");
  const double target = inv_n2(n);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(ix(n), ix(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const auto h = strata.group_of[i];
      if (h != strata.group_of[j]) continue;
      q(ix(i), ix(j)) = i == j ? target : -target / static_cast<double>(sizes[h] - 1);
    }
  return QMatrix(std::move(q), "strat");
}

QMatrix q_strat(const std::vector<std::size_t>& sizes) {
  return q_strat(Grouping::contiguous(sizes));
}

QMatrix q_wholeplot(const Grouping& wholeplots) {
  const auto n = wholeplots.num_units();
  const auto h = wholeplots.num_groups();
  if (h < 2) throw ContractViolation("q_wholeplot needs at least 2 whole-plots");
  const auto sizes = wholeplots.sizes();
  if (std::adjacent_find(sizes.begin(), sizes.end(), std::not_equal_to<>()) != sizes.end())
    throw ContractViolation("q_wholeplot needs whole-plots of equal size");
  const double target = inv_n2(n);
  const double off = -target / static_cast<double>(h - 1);
  Eigen::MatrixXd q(ix(n), ix(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      q(ix(i), ix(j)) = wholeplots.group_of[i] == wholeplots.group_of[j] ? target : off;
  return QMatrix(std::move(q), h == 2 ? "half" : "wholeplot");
}

QMatrix q_wholeplot(std::size_t num_wholeplots, std::size_t wholeplot_size) {
  if (wholeplot_size < 1) throw ContractViolation("whole-plot size must be positive");
  return q_wholeplot(
      Grouping::contiguous(std::vector<std::size_t>(num_wholeplots, wholeplot_size)));
}

QMatrix q_half(std::size_t half_size) {
  auto q = q_wholeplot(2, half_size);
  return QMatrix(q.matrix(), "half");
}

double lambda_max(const QMatrix& q) { return max_eigenvalue(q.matrix()); }

double bias(const QMatrix& q, const Eigen::VectorXd& tau) { return bias(q, tau, tau); }

double bias(const QMatrix& q, const Eigen::VectorXd& tau1, const Eigen::VectorXd& tau2) {
  if (tau1.size() != ix(q.size()) || tau2.size() != ix(q.size()))
    throw ContractViolation("contrast vector length does not match Q");
  return tau1.dot(q.matrix() * tau2);
}

// ---------------------------------------------------------------- GA and SAP

GaResult ga_condition(const QMatrix& q, const PotentialOutcomesTable& table, double tol) {
  check_units(q, table.num_units());
  GaResult out;
  out.other_arm = 1;
  const auto arms = table.num_treatments();
  for (std::size_t z = 0; z < arms; ++z)
    for (std::size_t w = z + 1; w < arms; ++w) {
      const Eigen::VectorXd d = table.column(z) - table.column(w);
      const double r = (q.matrix() * d).cwiseAbs().maxCoeff();
      if (r > out.max_residual) {
        out.max_residual = r;
        out.arm = z;
        out.other_arm = w;
      }
    }
  out.holds = out.max_residual <= tol;
  return out;
}

namespace {

template <typename Offending>
SapResult scan_zero_pairs(const AssignmentProbabilities& probs, Offending&& offending) {
  SapResult out;
  for (std::size_t i = 0; i < probs.num_units; ++i)
    for (std::size_t j = 0; j < probs.num_units; ++j) {
      if (i == j) continue;
      for (std::size_t z = 0; z < probs.num_arms; ++z)
        for (std::size_t w = 0; w < probs.num_arms; ++w)
          if (probs.pi(i, j, z, w) <= 0.0 && offending(i, j, z, w)) {
            out.holds = false;
            out.witness = PairWitness{i, j, z, w};
            return out;
          }
    }
  return out;
}

}  // namespace

SapResult sap_condition(const QMatrix& q, const AssignmentProbabilities& probs,
                        const Eigen::VectorXd& g) {
  check_units(q, probs.num_units);
  if (g.size() != ix(probs.num_arms))
    throw ContractViolation("contrast length does not match the number of treatments");
  const double target = inv_n2(probs.num_units);
  const double tol = 1e-12 * target * g.cwiseAbs2().maxCoeff();
  return scan_zero_pairs(probs, [&](std::size_t i, std::size_t j, std::size_t z, std::size_t w) {
    return std::abs(g(ix(z)) * g(ix(w)) * (q(i, j) - target)) > tol;
  });
}

SapResult sap_condition(const QMatrix& q, const AssignmentMechanism& mech,
                        const Eigen::VectorXd& g) {
  return sap_condition(q, assignment_probabilities(mech), g);
}

SapResult sap_sufficient(const QMatrix& q, const AssignmentProbabilities& probs) {
  check_units(q, probs.num_units);
  const double target = inv_n2(probs.num_units);
  return scan_zero_pairs(probs, [&](std::size_t i, std::size_t j, std::size_t, std::size_t) {
    return std::abs(q(i, j) - target) > 1e-12 * target;
  });
}

SapResult sap_sufficient(const QMatrix& q, const AssignmentMechanism& mech) {
  return sap_sufficient(q, assignment_probabilities(mech));
}

// ---------------------------------------------------------------- V_Q and C_Q

namespace {

void add_q_shift(QuadraticCoefficients& form, const Eigen::VectorXd& g1, const Eigen::VectorXd& g2,
                 const QMatrix& q) {
  check_units(q, form.num_units);
  const double target = inv_n2(form.num_units);
  const auto arms = form.num_arms;
  for (std::size_t i = 0; i < form.num_units; ++i)
    for (std::size_t j = 0; j < form.num_units; ++j) {
      if (i == j) continue;
      const double shift = q(i, j) - target;
      if (shift == 0.0) continue;
      for (std::size_t z = 0; z < arms; ++z)
        for (std::size_t w = 0; w < arms; ++w)
          form.cross(ix(i * arms + z), ix(j * arms + w)) += g1(ix(z)) * g2(ix(w)) * shift;
    }
}

}  // namespace

QuadraticCoefficients m_tilde_coefficients(const CrossMomentCoefficients& k,
                                           const Eigen::VectorXd& g, const QMatrix& q) {
  auto form = m_coefficients(k, g);
  add_q_shift(form, g, g, q);
  return form;
}

QuadraticCoefficients r_tilde_coefficients(const CrossMomentCoefficients& k,
                                           const Eigen::VectorXd& g1, const Eigen::VectorXd& g2,
                                           const QMatrix& q) {
  auto form = r_coefficients(k, g1, g2);
  add_q_shift(form, g1, g2, q);
  return form;
}

double v_q(const PotentialOutcomesTable& table, const CrossMomentCoefficients& k,
           const Contrast& c, const QMatrix& q) {
  return m_tilde_coefficients(k, c.aligned(table.treatments()), q).evaluate(table);
}

double v_q(const PotentialOutcomesTable& table, const AssignmentMechanism& mech, const Lue& lue,
           const Contrast& c, const QMatrix& q) {
  return v_q(table, cross_moments(mech, lue), c, q);
}

double c_q(const PotentialOutcomesTable& table, const CrossMomentCoefficients& k,
           const Contrast& c1, const Contrast& c2, const QMatrix& q) {
  const auto& order = table.treatments();
  return r_tilde_coefficients(k, c1.aligned(order), c2.aligned(order), q).evaluate(table);
}

// ---------------------------------------------------------------- estimators

QuadraticFormEstimator::QuadraticFormEstimator(QuadraticCoefficients form,
                                               AssignmentProbabilities probs)
    : form_(std::move(form)), probs_(std::move(probs)) {
  if (probs_.num_units != form_.num_units || probs_.num_arms != form_.num_arms)
    throw ContractViolation("assignment probabilities do not match the coefficients");
  const auto n = form_.num_units;
  const auto arms = form_.num_arms;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t z = 0; z < arms; ++z) {
      const double pi = probs_.pi(i, z);
      if (pi > 0.0) {
        form_.linear(ix(i), ix(z)) /= pi;
        form_.square(ix(i), ix(z)) /= pi;
      } else if (form_.linear(ix(i), ix(z)) != 0.0 || form_.square(ix(i), ix(z)) != 0.0) {
        throw ContractViolation("estimator needs pi_i(z) > 0 for unit " + std::to_string(i));
      }
    }
  const double tol = 1e-12 * form_.cross.cwiseAbs().maxCoeff();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      for (std::size_t z = 0; z < arms; ++z)
        for (std::size_t w = 0; w < arms; ++w) {
          const auto r = ix(i * arms + z), s = ix(j * arms + w);
          const double pij = probs_.pi(i, j, z, w);
          if (pij > 0.0) {
            form_.cross(r, s) /= pij;
          } else if (std::abs(form_.cross(r, s)) > tol) {
            throw SapViolation("second-order assignment probability is zero for units " +
                                   std::to_string(i) + " and " + std::to_string(j) +
                                   " under arms " + std::to_string(z) + " and " +
                                   std::to_string(w) + ", where the estimator needs it",
                               PairWitness{i, j, z, w});
          } else {
            form_.cross(r, s) = 0.0;
          }
        }
    }
}

double QuadraticFormEstimator::operator()(const ObservedOutcomes& obs) const {
  const auto& t = obs.partition();
  const auto n = form_.num_units;
  const auto arms = form_.num_arms;
  if (t.num_units() != n || t.num_arms() != arms)
    throw ContractViolation("observed data do not match the estimator");
  double total = form_.constant;
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto z = t.arm_of(i);
    y[i] = obs.outcome(i, z);
    total += form_.linear(ix(i), ix(z)) * y[i] + form_.square(ix(i), ix(z)) * y[i] * y[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = ix(i * arms + t.arm_of(i));
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) row += form_.cross(r, ix(j * arms + t.arm_of(j))) * y[j];
    total += row * y[i];
  }
  return total;
}

VqEstimator::VqEstimator(const AssignmentMechanism& mech, const Lue& lue,
                         const Eigen::VectorXd& g, const QMatrix& q)
    : estimator_(m_tilde_coefficients(cross_moments(mech, lue), g, q),
                 assignment_probabilities(mech)) {}

CqEstimator::CqEstimator(const AssignmentMechanism& mech, const Lue& lue,
                         const Eigen::VectorXd& g1, const Eigen::VectorXd& g2, const QMatrix& q)
    : estimator_(r_tilde_coefficients(cross_moments(mech, lue), g1, g2, q),
                 assignment_probabilities(mech)) {}

double v_q_hat(const ObservedOutcomes& obs, const AssignmentMechanism& mech, const Lue& lue,
               const Contrast& c, const std::vector<std::string>& order, const QMatrix& q) {
  return VqEstimator(mech, lue, c.aligned(order), q)(obs);
}

double c_q_hat(const ObservedOutcomes& obs, const AssignmentMechanism& mech, const Lue& lue,
               const Contrast& c1, const Contrast& c2, const std::vector<std::string>& order,
               const QMatrix& q) {
  return CqEstimator(mech, lue, c1.aligned(order), c2.aligned(order), q)(obs);
}

VarianceReport variance_report(const PotentialOutcomesTable& table,
                               const AssignmentMechanism& mech, const Lue& lue,
                               const Contrast& c, const QMatrix& q,
                               const std::optional<Partition>& realized, double ga_tol) {
  check_units(q, table.num_units());
  const auto k = cross_moments(mech, lue);
  const auto g = c.aligned(table.treatments());
  VarianceReport r;
  r.var = sampling_variance(table, k, c);
  r.v_q = m_tilde_coefficients(k, g, q).evaluate(table);
  r.bias = bias(q, unit_contrasts(table, c));
  const auto probs = assignment_probabilities(mech);
  const auto sap = sap_condition(q, probs, g);
  r.sap_ok = sap.holds;
  r.sap_witness = sap.witness;
  const auto ga = ga_condition(q, table, ga_tol);
  r.ga_ok = ga.holds;
  r.ga_residual = ga.max_residual;
  if (realized && r.sap_ok) {
    const QuadraticFormEstimator est(m_tilde_coefficients(k, g, q), probs);
    r.v_q_hat = est(ObservedOutcomes::observe(table, *realized));
  }
  return r;
}

// ---------------------------------------------------------------- minimax

MinimaxChoice minimax_q(const AssignmentMechanism& mech) {
  const auto probs = assignment_probabilities(mech);
  if (probs.all_pairs_positive())
    return {q_strict(mech.num_units()),
            "every second-order assignment probability is positive, so every Q is admissible "
            "and q_strict attains the smallest largest eigenvalue 1/(N(N-1))"};
  if (const auto* sp = std::get_if<SplitPlot>(&mech.design())) {
    auto q = q_wholeplot(sp->wholeplots);
    if (sap_sufficient(q, probs).holds)
      return {std::move(q),
              "split-plot designs never co-assign different whole-plot levels within a "
              "whole-plot; among admissible Q1 (x) (1 1') matrices q_wholeplot attains the "
              "smallest largest eigenvalue 1/(N(H-1))"};
  }
  if (mech.kind() == MechanismKind::Unicluster)
    return {std::nullopt,
            "unicluster assignment leaves every pair of units with some zero co-assignment "
            "probability that a nonzero contrast needs; no Q in the class is admissible"};
  return {std::nullopt,
          "some second-order assignment probabilities are zero and no admissible Q is known "
          "for this design"};
}

BiasTable bias_table(const PotentialOutcomesTable& table, const Contrast& c,
                     const QMatrix& strict, const QMatrix& alternative, double ga_tol) {
  BiasTable t;
  t.ga_strict = ga_condition(strict, table, ga_tol).holds;
  t.ga_alternative = ga_condition(alternative, table, ga_tol).holds;
  const auto tau = unit_contrasts(table, c);
  t.bias_strict = bias(strict, tau);
  t.bias_alternative = bias(alternative, tau);
  t.scenario = t.ga_strict ? 1 : (t.ga_alternative ? 2 : 3);
  return t;
}

// ---------------------------------------------------------------- stratified closed forms

namespace {

double sample_variance(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

}  // namespace

double v_q_stratified_closed_form(const PotentialOutcomesTable& table, const Stratified& design,
                                  const Contrast& c) {
  const auto g = c.aligned(table.treatments());
  const auto members = design.strata.members();
  double total = 0.0;
  for (std::size_t h = 0; h < members.size(); ++h) {
    const double nh = static_cast<double>(members[h].size());
    for (std::size_t z = 0; z < table.num_treatments(); ++z) {
      if (g(ix(z)) == 0.0) continue;
      std::vector<double> y;
      for (auto i : members[h]) y.push_back(table.outcome(i, z));
      total += g(ix(z)) * g(ix(z)) * nh * nh / static_cast<double>(design.counts[h][z]) *
               sample_variance(y);
    }
  }
  return total * inv_n2(table.num_units());
}

double v_q_hat_stratified_closed_form(const ObservedOutcomes& obs, const Stratified& design,
                                      const Contrast& c, const std::vector<std::string>& order) {
  const auto g = c.aligned(order);
  const auto members = design.strata.members();
  const auto& t = obs.partition();
  double total = 0.0;
  for (std::size_t h = 0; h < members.size(); ++h) {
    const double nh = static_cast<double>(members[h].size());
    for (std::size_t z = 0; z < order.size(); ++z) {
      if (g(ix(z)) == 0.0) continue;
      std::vector<double> y;
      for (auto i : members[h])
        if (t.assigned(i, z)) y.push_back(obs.outcome(i, z));
      if (y.size() < 2)
        throw ContractViolation("within-stratum variance needs at least 2 units per arm");
      total += g(ix(z)) * g(ix(z)) * nh * nh / static_cast<double>(y.size()) * sample_variance(y);
    }
  }
  return total * inv_n2(obs.num_units());
}

double strat_bias_closed_form(const Eigen::VectorXd& tau, const Grouping& strata) {
  double total = 0.0;
  for (const auto& m : strata.members()) {
    std::vector<double> v;
    for (auto i : m) v.push_back(tau(ix(i)));
    total += static_cast<double>(m.size()) * sample_variance(v);
  }
  return total * inv_n2(strata.num_units());
}

// ---------------------------------------------------------------- random members

std::optional<QMatrix> random_q(std::size_t n, std::size_t rank, std::uint64_t seed,
                                std::uint64_t stream) {
  if (n < 2 || rank < 1 || rank > n - 1)
    throw ContractViolation("random_q needs N >= 2 and 1 <= rank <= N - 1");
  CounterRng rng(seed, stream);
  Eigen::MatrixXd v(ix(n), ix(rank));
  for (Eigen::Index j = 0; j < v.cols(); ++j)
    for (Eigen::Index i = 0; i < v.rows(); ++i) v(i, j) = rng.normal();
  const double row_norm = 1.0 / static_cast<double>(n);
  bool converged = false;
  for (int iter = 0; iter < 20000; ++iter) {
    v.rowwise() -= v.colwise().mean();
    const Eigen::VectorXd norms = v.rowwise().norm();
    if (norms.minCoeff() < 1e-8 * row_norm) return std::nullopt;
    const double spread = (norms.array() / row_norm - 1.0).abs().maxCoeff();
    if (spread < 1e-14) {
      converged = true;
      break;
    }
    for (Eigen::Index i = 0; i < v.rows(); ++i) v.row(i) *= row_norm / norms(i);
  }
  if (!converged) return std::nullopt;
  Eigen::MatrixXd q = v * v.transpose();
  q = 0.5 * (q + q.transpose()).eval();
  q.diagonal().setConstant(inv_n2(n));
  try {
    return QMatrix(std::move(q), "random");
  } catch (const ContractViolation&) {
    return std::nullopt;
  }
}

std::optional<QMatrix> random_kronecker_q(std::size_t num_wholeplots,
                                          std::size_t wholeplot_size, std::uint64_t seed,
                                          std::uint64_t stream) {
  if (num_wholeplots < 2) throw ContractViolation("need at least 2 whole-plots");
  std::optional<QMatrix> base;
  for (auto rank = 1 + static_cast<std::size_t>(CounterRng(seed, ~stream).below(num_wholeplots - 1));
       !base && rank < num_wholeplots; ++rank)
    base = random_q(num_wholeplots, rank, seed, stream);
  if (!base) return std::nullopt;
  const auto n = num_wholeplots * wholeplot_size;
  const double h = static_cast<double>(num_wholeplots);
  Eigen::MatrixXd q1 = base->matrix() * (h * h * inv_n2(n));
  q1.diagonal().setConstant(inv_n2(n));
  Eigen::MatrixXd q(ix(n), ix(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      q(ix(i), ix(j)) = q1(ix(i / wholeplot_size), ix(j / wholeplot_size));
  try {
    return QMatrix(std::move(q), "kronecker");
  } catch (const ContractViolation&) {
    return std::nullopt;
  }
}

double kronecker_block_distance(const QMatrix& q, std::size_t num_wholeplots,
                                std::size_t wholeplot_size) {
  check_units(q, num_wholeplots * wholeplot_size);
  const double target = inv_n2(q.size());
  const auto b = ix(wholeplot_size);
  double dist = 0.0;
  for (std::size_t r = 0; r < num_wholeplots; ++r)
    for (std::size_t s = 0; s < num_wholeplots; ++s) {
      const auto block = q.matrix().block(ix(r) * b, ix(s) * b, b, b);
      const double mean = block.mean();
      dist = std::max(dist, (block.array() - mean).abs().maxCoeff());
      if (r == s) dist = std::max(dist, std::abs(mean - target));
    }
  return dist;
}

}  // namespace gamvar
