#include "gamvar/estimation.hpp"

#include <cmath>
#include <stdexcept>

#include "gamvar/error.hpp"

namespace gamvar {

namespace {

Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }

/// Y flattened so that entry i * |Z| + z is Y_i(z).
Eigen::VectorXd flatten(const Eigen::MatrixXd& y) {
  Eigen::MatrixXd t = y.transpose();
  return Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
}

void check_shape(const PotentialOutcomesTable& table, std::size_t n, std::size_t arms) {
  if (table.num_units() != n || table.num_treatments() != arms)
    throw ContractViolation("science table shape does not match the assignment mechanism");
}

const LueCoefficients& lookup(const CustomLue& lue, const Partition& t) {
  auto it = lue.by_partition.find(t.encode());
  if (it == lue.by_partition.end())
    throw ContractViolation("custom estimator has no coefficients for partition " + t.encode());
  return it->second;
}

}  // namespace

// ---------------------------------------------------------------- observed data

ObservedOutcomes::ObservedOutcomes(Partition partition, std::vector<double> observed)
    : partition_(std::move(partition)), observed_(std::move(observed)) {
  if (observed_.size() != partition_.num_units())
    throw ContractViolation("need exactly one observed outcome per unit");
  for (double v : observed_)
    if (!std::isfinite(v)) throw ContractViolation("observed outcome is not finite");
}

ObservedOutcomes ObservedOutcomes::observe(const PotentialOutcomesTable& table,
                                           const Partition& partition) {
  if (partition.num_units() != table.num_units() ||
      partition.num_arms() != table.num_treatments())
    throw ContractViolation("partition does not match the science table");
  std::vector<double> observed(table.num_units());
  for (std::size_t i = 0; i < observed.size(); ++i)
    observed[i] = table.outcome(i, partition.arm_of(i));
  return ObservedOutcomes(partition, std::move(observed));
}

double ObservedOutcomes::outcome(std::size_t unit, std::size_t arm) const {
  if (!partition_.assigned(unit, arm))
    throw std::logic_error("attempt to read unobserved potential outcome of unit " +
                           std::to_string(unit) + " under arm " + std::to_string(arm));
  return observed_[unit];
}

// ---------------------------------------------------------------- LUEs

void validate_lue(const AssignmentMechanism& mech, const Lue& lue, std::size_t cap) {
  if (std::holds_alternative<HorvitzThompson>(lue)) {
    if (!positivity_holds(mech))
      throw ContractViolation("Horvitz-Thompson needs every pi_i(z) > 0");
    return;
  }
  const auto& custom = std::get<CustomLue>(lue);
  const auto support = enumerate_support(mech, cap);
  const auto n = mech.num_units();
  const auto arms = mech.num_arms();
  Eigen::VectorXd a_mean = Eigen::VectorXd::Zero(ix(arms));
  Eigen::MatrixXd b_mass = Eigen::MatrixXd::Zero(ix(n), ix(arms));
  for (std::size_t k = 0; k < support.size(); ++k) {
    const auto& t = support.partitions[k];
    const double p = support.probabilities[k].convert_to<double>();
    const auto& coef = lookup(custom, t);
    if (coef.a.size() != ix(arms) || coef.b.rows() != ix(n) || coef.b.cols() != ix(arms))
      throw ContractViolation("custom estimator coefficients have the wrong shape");
    a_mean += p * coef.a;
    for (std::size_t i = 0; i < n; ++i) b_mass(ix(i), ix(t.arm_of(i))) += p * coef.b(ix(i), ix(t.arm_of(i)));
  }
  const double target = 1.0 / static_cast<double>(n);
  if (a_mean.cwiseAbs().maxCoeff() > 1e-12)
    throw ContractViolation("custom estimator is biased: E[a(T,z)] != 0");
  if ((b_mass.array() - target).abs().maxCoeff() > 1e-12)
    throw ContractViolation("custom estimator is biased: sum_T p(T) b_i(T,z) != 1/N");
}

MeanEstimator::MeanEstimator(const AssignmentMechanism& mech, Lue lue)
    : num_units_(mech.num_units()), num_arms_(mech.num_arms()), lue_(std::move(lue)) {
  if (std::holds_alternative<HorvitzThompson>(lue_)) {
    ht_weight_.resize(ix(num_units_), ix(num_arms_));
    const double n = static_cast<double>(num_units_);
    for (std::size_t i = 0; i < num_units_; ++i)
      for (std::size_t z = 0; z < num_arms_; ++z) {
        const double pi = first_order(mech, i, z);
        if (!(pi > 0.0)) throw ContractViolation("Horvitz-Thompson needs every pi_i(z) > 0");
        ht_weight_(ix(i), ix(z)) = 1.0 / (n * pi);
      }
  }
}

double MeanEstimator::mean(const ObservedOutcomes& obs, std::size_t arm) const {
  const auto& t = obs.partition();
  if (t.num_units() != num_units_ || t.num_arms() != num_arms_)
    throw ContractViolation("observed data do not match the estimator's mechanism");
  if (const auto* custom = std::get_if<CustomLue>(&lue_)) {
    const auto& coef = lookup(*custom, t);
    double total = coef.a(ix(arm));
    for (std::size_t i = 0; i < num_units_; ++i)
      if (t.assigned(i, arm)) total += coef.b(ix(i), ix(arm)) * obs.outcome(i, arm);
    return total;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < num_units_; ++i)
    if (t.assigned(i, arm)) total += obs.outcome(i, arm) * ht_weight_(ix(i), ix(arm));
  return total;
}

std::vector<double> MeanEstimator::means(const ObservedOutcomes& obs) const {
  std::vector<double> out(num_arms_);
  for (std::size_t z = 0; z < num_arms_; ++z) out[z] = mean(obs, z);
  return out;
}

double MeanEstimator::contrast(const ObservedOutcomes& obs, const Eigen::VectorXd& g) const {
  double total = 0.0;
  for (std::size_t z = 0; z < num_arms_; ++z)
    if (g(ix(z)) != 0.0) total += g(ix(z)) * mean(obs, z);
  return total;
}

double ht_mean_estimate(const ObservedOutcomes& obs, const AssignmentMechanism& mech,
                        std::size_t arm) {
  const auto& t = obs.partition();
  if (t.num_units() != mech.num_units())
    throw ContractViolation("observed data do not match the mechanism");
  const double n = static_cast<double>(mech.num_units());
  double total = 0.0;
  for (auto i : t.members(arm)) {
    const double pi = first_order(mech, i, arm);
    if (!(pi > 0.0)) throw ContractViolation("Horvitz-Thompson needs every pi_i(z) > 0");
    total += obs.outcome(i, arm) / (n * pi);
  }
  return total;
}

double contrast_estimate(const Contrast& c, const std::vector<std::string>& order,
                         const std::vector<double>& means) {
  if (means.size() != order.size())
    throw ContractViolation("need one estimated mean per treatment");
  const auto g = c.aligned(order);
  double total = 0.0;
  for (std::size_t z = 0; z < means.size(); ++z) total += g(ix(z)) * means[z];
  return total;
}

// ---------------------------------------------------------------- cross moments

CrossMomentCoefficients cross_moments(const AssignmentMechanism& mech, const Lue& lue,
                                      std::size_t cap) {
  const auto n = mech.num_units();
  const auto arms = mech.num_arms();
  CrossMomentCoefficients k;
  k.num_units = n;
  k.num_arms = arms;
  k.A = Eigen::MatrixXd::Zero(ix(arms), ix(arms));
  k.A1 = Eigen::MatrixXd::Zero(ix(n), ix(arms * arms));
  k.A2 = Eigen::MatrixXd::Zero(ix(n), ix(arms * arms));
  k.B = Eigen::MatrixXd::Zero(ix(n * arms), ix(n * arms));

  if (std::holds_alternative<HorvitzThompson>(lue)) {
    const auto probs = assignment_probabilities(mech);
    const double n2 = static_cast<double>(n) * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t z = 0; z < arms; ++z)
        if (!(probs.pi(i, z) > 0.0))
          throw ContractViolation("Horvitz-Thompson needs every pi_i(z) > 0");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t z = 0; z < arms; ++z) {
        const double pi_iz = probs.pi(i, z);
        k.B(k.index(i, z), k.index(i, z)) = 1.0 / (n2 * pi_iz);
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          for (std::size_t w = 0; w < arms; ++w)
            k.B(k.index(i, z), k.index(j, w)) =
                probs.pi(i, j, z, w) / (n2 * pi_iz * probs.pi(j, w));
        }
      }
    return k;
  }

  const auto& custom = std::get<CustomLue>(lue);
  validate_lue(mech, lue, cap);
  const auto support = enumerate_support(mech, cap);
  for (std::size_t s = 0; s < support.size(); ++s) {
    const auto& t = support.partitions[s];
    const double p = support.probabilities[s].convert_to<double>();
    const auto& coef = lookup(custom, t);
    k.A += p * coef.a * coef.a.transpose();
    for (std::size_t i = 0; i < n; ++i) {
      const auto z = t.arm_of(i);
      const double bi = coef.b(ix(i), ix(z));
      for (std::size_t w = 0; w < arms; ++w) {
        k.A1(ix(i), k.pair(z, w)) += p * bi * coef.a(ix(w));
        k.A2(ix(i), k.pair(w, z)) += p * coef.a(ix(w)) * bi;
      }
      for (std::size_t j = 0; j < n; ++j) {
        const auto w = t.arm_of(j);
        k.B(k.index(i, z), k.index(j, w)) += p * bi * coef.b(ix(j), ix(w));
      }
    }
  }
  return k;
}

double second_moment(const CrossMomentCoefficients& k, const PotentialOutcomesTable& table,
                     std::size_t z, std::size_t w) {
  check_shape(table, k.num_units, k.num_arms);
  double total = k.A(ix(z), ix(w));
  for (std::size_t i = 0; i < k.num_units; ++i)
    total += k.A1(ix(i), k.pair(z, w)) * table.outcome(i, z) +
             k.A2(ix(i), k.pair(z, w)) * table.outcome(i, w);
  for (std::size_t i = 0; i < k.num_units; ++i)
    for (std::size_t j = 0; j < k.num_units; ++j)
      total += k.b(i, j, z, w) * table.outcome(i, z) * table.outcome(j, w);
  return total;
}

// ---------------------------------------------------------------- variance and covariance assembly

double QuadraticCoefficients::evaluate(const PotentialOutcomesTable& table) const {
  check_shape(table, num_units, num_arms);
  const auto& y = table.outcomes();
  double total = constant;
  total += (linear.array() * y.array()).sum();
  total += (square.array() * y.array().square()).sum();
  const auto v = flatten(y);
  total += v.dot(cross * v);
  return total;
}

namespace {

QuadraticCoefficients empty_form(const CrossMomentCoefficients& k) {
  QuadraticCoefficients q;
  q.num_units = k.num_units;
  q.num_arms = k.num_arms;
  q.linear = Eigen::MatrixXd::Zero(ix(k.num_units), ix(k.num_arms));
  q.square = Eigen::MatrixXd::Zero(ix(k.num_units), ix(k.num_arms));
  q.cross = Eigen::MatrixXd::Zero(k.B.rows(), k.B.cols());
  return q;
}

void check_contrast(const CrossMomentCoefficients& k, const Eigen::VectorXd& g) {
  if (g.size() != ix(k.num_arms))
    throw ContractViolation("contrast length does not match the number of treatments");
}

}  // namespace

QuadraticCoefficients m_coefficients(const CrossMomentCoefficients& k, const Eigen::VectorXd& g) {
  check_contrast(k, g);
  auto q = empty_form(k);
  const auto arms = k.num_arms;
  for (std::size_t z = 0; z < arms; ++z)
    for (std::size_t w = 0; w < arms; ++w) q.constant += g(ix(z)) * g(ix(w)) * k.A(ix(z), ix(w));
  for (std::size_t i = 0; i < k.num_units; ++i)
    for (std::size_t z = 0; z < arms; ++z) {
      double s = 0.0;
      for (std::size_t w = 0; w < arms; ++w)
        s += g(ix(w)) * (k.A1(ix(i), k.pair(z, w)) + k.A2(ix(i), k.pair(w, z)));
      q.linear(ix(i), ix(z)) = g(ix(z)) * s;
      q.square(ix(i), ix(z)) = g(ix(z)) * g(ix(z)) * k.b(i, i, z, z);
    }
  for (std::size_t i = 0; i < k.num_units; ++i)
    for (std::size_t j = 0; j < k.num_units; ++j) {
      if (i == j) continue;
      for (std::size_t z = 0; z < arms; ++z)
        for (std::size_t w = 0; w < arms; ++w)
          q.cross(k.index(i, z), k.index(j, w)) = g(ix(z)) * g(ix(w)) * k.b(i, j, z, w);
    }
  return q;
}

QuadraticCoefficients r_coefficients(const CrossMomentCoefficients& k, const Eigen::VectorXd& g1,
                                     const Eigen::VectorXd& g2) {
  check_contrast(k, g1);
  check_contrast(k, g2);
  auto q = empty_form(k);
  const auto arms = k.num_arms;
  for (std::size_t z = 0; z < arms; ++z)
    for (std::size_t w = 0; w < arms; ++w) q.constant += g1(ix(z)) * g2(ix(w)) * k.A(ix(z), ix(w));
  for (std::size_t i = 0; i < k.num_units; ++i)
    for (std::size_t z = 0; z < arms; ++z) {
      double first = 0.0, second = 0.0;
      for (std::size_t w = 0; w < arms; ++w) {
        first += g2(ix(w)) * k.A1(ix(i), k.pair(z, w));
        second += g1(ix(w)) * k.A2(ix(i), k.pair(w, z));
      }
      q.linear(ix(i), ix(z)) = g1(ix(z)) * first + g2(ix(z)) * second;
      q.square(ix(i), ix(z)) = g1(ix(z)) * g2(ix(z)) * k.b(i, i, z, z);
    }
  for (std::size_t i = 0; i < k.num_units; ++i)
    for (std::size_t j = 0; j < k.num_units; ++j) {
      if (i == j) continue;
      for (std::size_t z = 0; z < arms; ++z)
        for (std::size_t w = 0; w < arms; ++w)
          q.cross(k.index(i, z), k.index(j, w)) = g1(ix(z)) * g2(ix(w)) * k.b(i, j, z, w);
    }
  return q;
}

double sampling_variance(const PotentialOutcomesTable& table, const CrossMomentCoefficients& k,
                         const Contrast& c) {
  const auto tau = population_contrast(table, c);
  return m_coefficients(k, c.aligned(table.treatments())).evaluate(table) - tau * tau;
}

double sampling_variance(const PotentialOutcomesTable& table, const AssignmentMechanism& mech,
                         const Lue& lue, const Contrast& c) {
  return sampling_variance(table, cross_moments(mech, lue), c);
}

double sampling_variance_pairwise(const PotentialOutcomesTable& table,
                                  const CrossMomentCoefficients& k, const Contrast& c) {
  const auto g = c.aligned(table.treatments());
  double total = 0.0;
  for (std::size_t z = 0; z < k.num_arms; ++z)
    for (std::size_t w = 0; w < k.num_arms; ++w) {
      if (g(ix(z)) == 0.0 || g(ix(w)) == 0.0) continue;
      total += g(ix(z)) * g(ix(w)) * second_moment(k, table, z, w);
    }
  const auto tau = population_contrast(table, c);
  return total - tau * tau;
}

double sampling_covariance(const PotentialOutcomesTable& table, const CrossMomentCoefficients& k,
                           const Contrast& c1, const Contrast& c2) {
  const auto& order = table.treatments();
  return r_coefficients(k, c1.aligned(order), c2.aligned(order)).evaluate(table) -
         population_contrast(table, c1) * population_contrast(table, c2);
}

double sampling_covariance(const PotentialOutcomesTable& table, const AssignmentMechanism& mech,
                           const Lue& lue, const Contrast& c1, const Contrast& c2) {
  return sampling_covariance(table, cross_moments(mech, lue), c1, c2);
}

// ---------------------------------------------------------------- closed forms

NeymanDecomposition neyman_two_arm_variance(const PotentialOutcomesTable& table, std::size_t r0,
                                            std::size_t r1) {
  if (table.num_treatments() != 2)
    throw ContractViolation("the Neyman decomposition needs exactly two treatments");
  const auto n = table.num_units();
  if (r0 < 1 || r1 < 1 || r0 + r1 != n)
    throw ContractViolation("arm sizes must be positive and sum to N");
  const auto sample_var = [](const Eigen::VectorXd& v) {
    return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
  };
  NeymanDecomposition out;
  const Eigen::VectorXd y0 = table.column(0);
  const Eigen::VectorXd y1 = table.column(1);
  out.s00 = sample_var(y0);
  out.s11 = sample_var(y1);
  out.s_tau = sample_var(y1 - y0);
  out.variance = out.s00 / static_cast<double>(r0) + out.s11 / static_cast<double>(r1) -
                 out.s_tau / static_cast<double>(n);
  return out;
}

double stratified_variance_closed_form(const PotentialOutcomesTable& table,
                                       const Stratified& design, const Contrast& c) {
  const auto g = c.aligned(table.treatments());
  const auto tau = unit_contrasts(table, c);
  const double n = static_cast<double>(table.num_units());
  double total = 0.0;
  const auto members = design.strata.members();
  for (std::size_t h = 0; h < members.size(); ++h) {
    const auto& m = members[h];
    const double nh = static_cast<double>(m.size());
    const auto within_var = [&](auto&& value) {
      double mean = 0.0;
      for (auto i : m) mean += value(i);
      mean /= nh;
      double ss = 0.0;
      for (auto i : m) ss += (value(i) - mean) * (value(i) - mean);
      return ss / (nh - 1.0);
    };
    double inner = 0.0;
    for (std::size_t z = 0; z < table.num_treatments(); ++z) {
      if (g(ix(z)) == 0.0) continue;
      const double s = within_var([&](std::size_t i) { return table.outcome(i, z); });
      inner += g(ix(z)) * g(ix(z)) * nh / static_cast<double>(design.counts[h][z]) * s;
    }
    inner -= within_var([&](std::size_t i) { return tau(ix(i)); });
    total += nh * inner;
  }
  return total / (n * n);
}

}  // namespace gamvar
