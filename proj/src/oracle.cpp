#include "gamvar/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gamvar/error.hpp"
#include "gamvar/rng.hpp"

namespace gamvar {

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x))
    carry_ += (sum_ - t) + x;
  else
    carry_ += (x - t) + sum_;
  sum_ = t;
}

ExactMoment expectation(const Support& support, const Statistic& statistic) {
  ExactMoment m;
  m.support_size = support.size();
  CompensatedSum total;
  for (std::size_t k = 0; k < support.size(); ++k) {
    m.weight_check += support.probabilities[k];
    total.add(support.probabilities[k].convert_to<double>() * statistic(support.partitions[k]));
  }
  m.value = total.value();
  return m;
}

ExactMoment expectation(const AssignmentMechanism& mech, const Statistic& statistic,
                        std::size_t cap) {
  return expectation(enumerate_support(mech, cap), statistic);
}

Residual compare(double value, double reference, double scale) {
  Residual r;
  r.value = value;
  r.reference = reference;
  r.absolute = std::abs(value - reference);
  const double denom = std::max({std::abs(value), std::abs(reference), std::abs(scale)});
  r.relative = denom > 0.0 ? r.absolute / denom : 0.0;
  return r;
}

namespace {

/// tau-hat(T) for every partition of the support and every contrast.
struct Realizations {
  std::vector<double> weights;
  std::vector<std::vector<double>> tau_hat;  // [contrast][partition]
};

Realizations realize(const Support& support, const PotentialOutcomesTable& table,
                     const AssignmentMechanism& mech, const Lue& lue,
                     const std::vector<Eigen::VectorXd>& gs) {
  Realizations out;
  const MeanEstimator est(mech, lue);
  out.tau_hat.assign(gs.size(), std::vector<double>(support.size()));
  for (std::size_t k = 0; k < support.size(); ++k) {
    out.weights.push_back(support.probabilities[k].convert_to<double>());
    const auto obs = ObservedOutcomes::observe(table, support.partitions[k]);
    const auto means = est.means(obs);
    for (std::size_t c = 0; c < gs.size(); ++c) {
      double t = 0.0;
      for (std::size_t z = 0; z < means.size(); ++z)
        t += gs[c](static_cast<Eigen::Index>(z)) * means[z];
      out.tau_hat[c][k] = t;
    }
  }
  return out;
}

double weighted_mean(const std::vector<double>& w, const std::vector<double>& x) {
  CompensatedSum s;
  for (std::size_t k = 0; k < w.size(); ++k) s.add(w[k] * x[k]);
  return s.value();
}

double weighted_cross(const std::vector<double>& w, const std::vector<double>& x,
                      const std::vector<double>& y) {
  CompensatedSum s;
  for (std::size_t k = 0; k < w.size(); ++k) s.add(w[k] * x[k] * y[k]);
  return s.value();
}

double estimator_mean(const Support& support, const PotentialOutcomesTable& table,
                      const std::function<double(const ObservedOutcomes&)>& estimator) {
  CompensatedSum s;
  for (std::size_t k = 0; k < support.size(); ++k)
    s.add(support.probabilities[k].convert_to<double>() *
          estimator(ObservedOutcomes::observe(table, support.partitions[k])));
  return s.value();
}

}  // namespace

Residual verify_unbiasedness(const PotentialOutcomesTable& table, const AssignmentMechanism& mech,
                             const Lue& lue, const Contrast& c) {
  const auto support = enumerate_support(mech);
  const auto r = realize(support, table, mech, lue, {c.aligned(table.treatments())});
  const double mean = weighted_mean(r.weights, r.tau_hat[0]);
  const double second = weighted_cross(r.weights, r.tau_hat[0], r.tau_hat[0]);
  return compare(mean, population_contrast(table, c), std::sqrt(second));
}

Residual verify_variance(const PotentialOutcomesTable& table, const AssignmentMechanism& mech,
                         const Lue& lue, const Contrast& c) {
  const auto support = enumerate_support(mech);
  const auto r = realize(support, table, mech, lue, {c.aligned(table.treatments())});
  const double mean = weighted_mean(r.weights, r.tau_hat[0]);
  const double second = weighted_cross(r.weights, r.tau_hat[0], r.tau_hat[0]);
  return compare(sampling_variance(table, mech, lue, c), second - mean * mean, second);
}

VqCheck verify_vq_estimator(const PotentialOutcomesTable& table, const AssignmentMechanism& mech,
                            const Lue& lue, const Contrast& c, const QMatrix& q) {
  const auto g = c.aligned(table.treatments());
  const VqEstimator est(mech, lue, g, q);
  const auto support = enumerate_support(mech);
  const auto k = cross_moments(mech, lue);
  const double expected = estimator_mean(support, table, std::cref(est));
  const auto r = realize(support, table, mech, lue, {g});
  const double mean = weighted_mean(r.weights, r.tau_hat[0]);
  const double second = weighted_cross(r.weights, r.tau_hat[0], r.tau_hat[0]);
  VqCheck out;
  out.against_v_q = compare(expected, v_q(table, k, c, q), second);
  out.against_var = compare(expected, second - mean * mean, second);
  out.bias = bias(q, unit_contrasts(table, c));
  return out;
}

CovarianceCheck verify_covariance(const PotentialOutcomesTable& table,
                                  const AssignmentMechanism& mech, const Lue& lue,
                                  const Contrast& c1, const Contrast& c2, const QMatrix& q) {
  const auto& order = table.treatments();
  const auto g1 = c1.aligned(order);
  const auto g2 = c2.aligned(order);
  const auto support = enumerate_support(mech);
  const auto k = cross_moments(mech, lue);
  const auto r = realize(support, table, mech, lue, {g1, g2});
  const double m1 = weighted_mean(r.weights, r.tau_hat[0]);
  const double m2 = weighted_mean(r.weights, r.tau_hat[1]);
  const double cross = weighted_cross(r.weights, r.tau_hat[0], r.tau_hat[1]);
  const double scale = std::sqrt(weighted_cross(r.weights, r.tau_hat[0], r.tau_hat[0]) *
                                 weighted_cross(r.weights, r.tau_hat[1], r.tau_hat[1]));
  const double cov = cross - m1 * m2;
  const CqEstimator est(mech, lue, g1, g2, q);
  const double expected = estimator_mean(support, table, std::cref(est));
  CovarianceCheck out;
  out.assembly = compare(sampling_covariance(table, k, c1, c2), cov, scale);
  out.against_c_q = compare(expected, c_q(table, k, c1, c2, q), scale);
  out.against_cov = compare(expected, cov, scale);
  return out;
}

ProbabilityCheck verify_assignment_probabilities(const AssignmentMechanism& mech,
                                                 std::size_t cap) {
  const auto support = enumerate_support(mech, cap);
  const auto n = mech.num_units();
  const auto arms = mech.num_arms();
  std::vector<Rational> first(n * arms);
  std::vector<Rational> joint(n * arms * n * arms);
  Rational total = 0;
  for (std::size_t s = 0; s < support.size(); ++s) {
    const auto& t = support.partitions[s];
    const auto& p = support.probabilities[s];
    total += p;
    for (std::size_t i = 0; i < n; ++i) {
      first[i * arms + t.arm_of(i)] += p;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) joint[(i * arms + t.arm_of(i)) * n * arms + j * arms + t.arm_of(j)] += p;
    }
  }
  ProbabilityCheck out;
  out.support_size = support.size();
  out.weights_sum_to_one = total == 1;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t z = 0; z < arms; ++z) {
      if (first_order_exact(mech, i, z) != first[i * arms + z]) ++out.first_order_mismatches;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        for (std::size_t w = 0; w < arms; ++w)
          if (second_order_exact(mech, i, j, z, w) !=
              joint[(i * arms + z) * n * arms + j * arms + w])
            ++out.second_order_mismatches;
      }
    }
  return out;
}

CustomLue perturbed_lue(const AssignmentMechanism& mech, std::uint64_t seed, std::size_t cap) {
  const auto support = enumerate_support(mech, cap);
  const auto n = mech.num_units();
  const auto arms = mech.num_arms();
  const auto idx = [](std::size_t v) { return static_cast<Eigen::Index>(v); };
  CounterRng rng(seed, 0x6c7565);
  std::vector<LueCoefficients> raw(support.size());
  Eigen::VectorXd a_mean = Eigen::VectorXd::Zero(idx(arms));
  Eigen::MatrixXd eps_mass = Eigen::MatrixXd::Zero(idx(n), idx(arms));
  Eigen::MatrixXd pi = Eigen::MatrixXd::Zero(idx(n), idx(arms));
  for (std::size_t s = 0; s < support.size(); ++s) {
    const double p = support.probabilities[s].convert_to<double>();
    auto& coef = raw[s];
    coef.a.resize(idx(arms));
    coef.b = Eigen::MatrixXd::Zero(idx(n), idx(arms));
    for (std::size_t z = 0; z < arms; ++z) coef.a(idx(z)) = rng.uniform() - 0.5;
    a_mean += p * coef.a;
    for (std::size_t i = 0; i < n; ++i) {
      const auto z = support.partitions[s].arm_of(i);
      coef.b(idx(i), idx(z)) = 0.5 * (rng.uniform() - 0.5);
      eps_mass(idx(i), idx(z)) += p * coef.b(idx(i), idx(z));
      pi(idx(i), idx(z)) += p;
    }
  }
  CustomLue lue;
  const double dn = static_cast<double>(n);
  for (std::size_t s = 0; s < support.size(); ++s) {
    auto coef = raw[s];
    coef.a -= a_mean;
    for (std::size_t i = 0; i < n; ++i) {
      const auto z = support.partitions[s].arm_of(i);
      const double p_iz = pi(idx(i), idx(z));
      const double eps = coef.b(idx(i), idx(z)) - eps_mass(idx(i), idx(z)) / p_iz;
      coef.b(idx(i), idx(z)) = (1.0 + eps) / (dn * p_iz);
    }
    lue.by_partition.emplace(support.partitions[s].encode(), std::move(coef));
  }
  return lue;
}

// ---------------------------------------------------------------- batteries

bool OracleCase::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

bool BatteryReport::passed() const {
  return std::all_of(cases.begin(), cases.end(), [](const auto& c) { return c.passed(); });
}

std::size_t BatteryReport::num_checks() const {
  std::size_t n = 0;
  for (const auto& c : cases) n += c.checks.size();
  return n;
}

std::map<std::string, double> BatteryReport::max_relative() const {
  std::map<std::string, double> out;
  for (const auto& c : cases)
    for (const auto& k : c.checks) {
      auto& slot = out[k.name];
      slot = std::max(slot, k.residual.relative);
    }
  return out;
}

std::vector<std::string> battery_names() {
  return {"cr", "stratified", "splitplot", "unicluster", "custom", "grid"};
}

namespace {

constexpr double kOracleTolerance = 1e-10;

struct CaseInput {
  std::string label;
  AssignmentMechanism mech;
  PotentialOutcomesTable table;
  std::vector<Contrast> contrasts;
  std::vector<QMatrix> qs;
  Lue lue = HorvitzThompson{};
};

std::vector<std::string> numbered_labels(std::size_t arms) {
  std::vector<std::string> out;
  for (std::size_t z = 1; z <= arms; ++z) out.push_back(std::to_string(z));
  return out;
}

std::vector<std::size_t> balanced_counts(std::size_t n, std::size_t arms) {
  std::vector<std::size_t> out(arms, n / arms);
  for (std::size_t z = 0; z < n % arms; ++z) ++out[z];
  return out;
}

std::vector<Contrast> default_contrasts(const std::vector<std::string>& labels) {
  if (labels.size() == 2) return {Contrast(labels, {-1.0, 1.0})};
  if (labels.size() == 3)
    return {Contrast(labels, {1.0, -2.0, 1.0}), Contrast(labels, {-1.0, 0.0, 1.0})};
  std::vector<double> w(labels.size(), 0.0);
  w.front() = -1.0;
  w.back() = 1.0;
  return {Contrast(labels, w)};
}

/// Table generators. `shift_group` (optional) lets the treatment effect vary
/// by group while staying additive within it.
Eigen::MatrixXd random_outcomes(std::size_t n, std::size_t arms, CounterRng& rng) {
  Eigen::MatrixXd y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(arms));
  for (Eigen::Index z = 0; z < y.cols(); ++z)
    for (Eigen::Index i = 0; i < y.rows(); ++i) y(i, z) = 10.0 + 3.0 * rng.normal();
  return y;
}

Eigen::MatrixXd group_additive_outcomes(const Grouping& groups, std::size_t arms,
                                        CounterRng& rng) {
  const auto n = groups.num_units();
  Eigen::MatrixXd effect(static_cast<Eigen::Index>(groups.num_groups()),
                         static_cast<Eigen::Index>(arms));
  for (Eigen::Index h = 0; h < effect.rows(); ++h)
    for (Eigen::Index z = 0; z < effect.cols(); ++z) effect(h, z) = 2.0 * rng.normal();
  Eigen::MatrixXd y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(arms));
  for (std::size_t i = 0; i < n; ++i) {
    const double base = 10.0 + 3.0 * rng.normal();
    for (std::size_t z = 0; z < arms; ++z)
      y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(z)) =
          base + effect(static_cast<Eigen::Index>(groups.group_of[i]), static_cast<Eigen::Index>(z));
  }
  return y;
}

/// Additive up to noise that sums to zero inside each group: Q(Y(z)-Y(z*)) = 0
/// for Q = Q1 (x) (1 1') over those groups.
Eigen::MatrixXd group_sum_additive_outcomes(const Grouping& groups, std::size_t arms,
                                            CounterRng& rng) {
  Eigen::MatrixXd y = group_additive_outcomes(Grouping::contiguous({groups.num_units()}), arms, rng);
  for (const auto& m : groups.members())
    for (std::size_t z = 0; z < arms; ++z) {
      std::vector<double> u;
      for (std::size_t k = 0; k < m.size(); ++k) u.push_back(rng.normal());
      double mean = 0.0;
      for (double v : u) mean += v;
      mean /= static_cast<double>(u.size());
      for (std::size_t k = 0; k < m.size(); ++k)
        y(static_cast<Eigen::Index>(m[k]), static_cast<Eigen::Index>(z)) += u[k] - mean;
    }
  return y;
}

OracleCheck make_check(std::string name, std::string detail, Residual r) {
  OracleCheck c;
  c.name = std::move(name);
  c.detail = std::move(detail);
  c.residual = r;
  c.tolerance = kOracleTolerance;
  c.passed = r.relative <= kOracleTolerance;
  return c;
}

std::string contrast_label(const Contrast& c) {
  std::ostringstream os;
  os << "(";
  for (std::size_t k = 0; k < c.weights().size(); ++k) os << (k ? "," : "") << c.weights()[k];
  os << ")";
  return os.str();
}

OracleCase run_case(const CaseInput& input, std::size_t cap) {
  OracleCase out;
  out.label = input.label;
  const auto& table = input.table;
  const auto& mech = input.mech;
  const auto support = enumerate_support(mech, cap);
  out.support_size = support.size();

  const auto probs = verify_assignment_probabilities(mech, cap);
  Residual weights;
  weights.absolute = weights.relative = probs.weights_sum_to_one ? 0.0 : 1.0;
  out.checks.push_back(make_check("weights_sum_to_one", "", weights));
  Residual mismatch;
  mismatch.absolute = mismatch.relative =
      static_cast<double>(probs.first_order_mismatches + probs.second_order_mismatches);
  out.checks.push_back(make_check("assignment_probabilities_exact", "", mismatch));

  const auto k = cross_moments(mech, input.lue, cap);
  std::vector<Eigen::VectorXd> gs;
  for (const auto& c : input.contrasts) gs.push_back(c.aligned(table.treatments()));
  const auto r = realize(support, table, mech, input.lue, gs);
  const auto prob_table = assignment_probabilities(mech);

  std::vector<double> mean(gs.size()), second(gs.size());
  for (std::size_t c = 0; c < gs.size(); ++c) {
    const auto& contrast = input.contrasts[c];
    const auto label = contrast_label(contrast);
    mean[c] = weighted_mean(r.weights, r.tau_hat[c]);
    second[c] = weighted_cross(r.weights, r.tau_hat[c], r.tau_hat[c]);
    const double var = second[c] - mean[c] * mean[c];
    out.checks.push_back(make_check("unbiasedness", label,
                                    compare(mean[c], population_contrast(table, contrast),
                                            std::sqrt(second[c]))));
    out.checks.push_back(make_check("variance_assembly", label,
                                    compare(sampling_variance(table, k, contrast), var, second[c])));
    out.checks.push_back(make_check("variance_pairwise", label,
                                    compare(sampling_variance_pairwise(table, k, contrast), var,
                                            second[c])));
    out.checks.push_back(make_check(
        "covariance_self", label,
        compare(sampling_covariance(table, k, contrast, contrast), var, second[c])));

    const auto tau = unit_contrasts(table, contrast);
    for (const auto& q : input.qs) {
      const auto detail = label + " Q=" + q.name();
      const double vq = v_q(table, k, contrast, q);
      const double b = bias(q, tau);
      out.checks.push_back(make_check("decomposition_identity", detail, compare(vq - b, var, second[c])));
      const auto sap = sap_condition(q, prob_table, gs[c]);
      if (!sap.holds) {
        bool refused = false;
        try {
          VqEstimator est(mech, input.lue, gs[c], q);
        } catch (const SapViolation&) {
          refused = true;
        }
        Residual rr;
        rr.absolute = rr.relative = refused ? 0.0 : 1.0;
        out.checks.push_back(make_check("sap_refusal", detail, rr));
        continue;
      }
      const VqEstimator est(mech, input.lue, gs[c], q);
      const double expected = estimator_mean(support, table, std::cref(est));
      out.checks.push_back(make_check("vq_estimator_unbiased", detail,
                                      compare(expected, vq, second[c])));
      if (ga_condition(q, table).holds)
        out.checks.push_back(make_check("vq_estimator_exact_under_ga", detail,
                                        compare(expected, var, second[c])));
    }
  }

  for (std::size_t a = 0; a < gs.size(); ++a)
    for (std::size_t b = a + 1; b < gs.size(); ++b) {
      const auto& c1 = input.contrasts[a];
      const auto& c2 = input.contrasts[b];
      const auto label = contrast_label(c1) + "x" + contrast_label(c2);
      const double cov = weighted_cross(r.weights, r.tau_hat[a], r.tau_hat[b]) - mean[a] * mean[b];
      const double scale = std::sqrt(second[a] * second[b]);
      out.checks.push_back(make_check("covariance_assembly", label,
                                      compare(sampling_covariance(table, k, c1, c2), cov, scale)));
      for (const auto& q : input.qs) {
        const auto detail = label + " Q=" + q.name();
        const double cq = c_q(table, k, c1, c2, q);
        out.checks.push_back(make_check(
            "covariance_decomposition", detail,
            compare(cq - bias(q, unit_contrasts(table, c1), unit_contrasts(table, c2)), cov, scale)));
        std::optional<CqEstimator> est;
        try {
          est.emplace(mech, input.lue, gs[a], gs[b], q);
        } catch (const SapViolation&) {
          continue;
        }
        const double expected = estimator_mean(support, table, std::cref(*est));
        out.checks.push_back(make_check("cq_estimator_unbiased", detail, compare(expected, cq, scale)));
        if (ga_condition(q, table).holds)
          out.checks.push_back(make_check("cq_estimator_exact_under_ga", detail,
                                          compare(expected, cov, scale)));
      }
    }
  return out;
}

struct CaseBuilder {
  std::uint64_t seed;
  std::uint64_t stream = 0;
  std::vector<CaseInput> specs;

  CounterRng next_rng() { return CounterRng(seed, stream++); }

  void add_tables(const std::string& design, const AssignmentMechanism& mech,
                  const std::vector<std::string>& labels, const std::vector<Contrast>& contrasts,
                  const std::vector<QMatrix>& qs, const std::optional<Grouping>& additive_groups,
                  const std::optional<Grouping>& sum_groups, const Lue& lue = HorvitzThompson{}) {
    const auto n = mech.num_units();
    const auto arms = mech.num_arms();
    auto add = [&](const std::string& kind, Eigen::MatrixXd y) {
      specs.push_back(CaseInput{design + " / " + kind, mech,
                               PotentialOutcomesTable::from_matrix(labels, std::move(y)),
                               contrasts, qs, lue});
    };
    auto rng = next_rng();
    add("random", random_outcomes(n, arms, rng));
    add("additive", group_additive_outcomes(Grouping::contiguous({n}), arms, rng));
    if (additive_groups) add("group-additive", group_additive_outcomes(*additive_groups, arms, rng));
    if (sum_groups) add("group-sum-additive", group_sum_additive_outcomes(*sum_groups, arms, rng));
  }
};

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::ostringstream os;
  for (std::size_t k = 0; k < v.size(); ++k) os << (k ? "," : "") << v[k];
  return os.str();
}

std::vector<QMatrix> generic_qs(std::size_t n) {
  std::vector<QMatrix> qs{q_strict(n)};
  if (n % 2 == 0) qs.push_back(q_half(n / 2));
  return qs;
}

void add_cr(CaseBuilder& b) {
  for (std::size_t arms : {2u, 3u})
    for (std::size_t n : {4u, 5u, 6u}) {
      const auto counts = balanced_counts(n, arms);
      const auto labels = numbered_labels(arms);
      const auto mech = AssignmentMechanism::completely_randomized(counts);
      b.add_tables("CR N=" + std::to_string(n) + " r=(" + join_sizes(counts) + ")", mech, labels,
                   default_contrasts(labels), generic_qs(n), std::nullopt,
                   n % 2 == 0 ? std::optional(Grouping::contiguous({n / 2, n / 2})) : std::nullopt);
    }
}

void add_stratified(CaseBuilder& b) {
  struct Layout {
    std::vector<std::size_t> sizes;
    std::size_t arms;
  };
  const std::vector<Layout> layouts{{{2, 2}, 2}, {{2, 3}, 2}, {{3, 3}, 2}, {{4}, 3},
                                    {{5}, 3},    {{3, 3}, 3}, {{4, 4}, 2}};
  for (const auto& layout : layouts) {
    const auto strata = Grouping::contiguous(layout.sizes);
    std::vector<std::vector<std::size_t>> counts;
    for (auto s : layout.sizes) counts.push_back(balanced_counts(s, layout.arms));
    const auto mech = AssignmentMechanism::stratified(strata, counts);
    const auto labels = numbered_labels(layout.arms);
    auto qs = generic_qs(strata.num_units());
    qs.push_back(q_strat(strata));
    b.add_tables("stratified N_h=(" + join_sizes(layout.sizes) + ")", mech, labels,
                 default_contrasts(labels), qs, strata, std::nullopt);
  }
}

void add_splitplot(CaseBuilder& b, bool include_large) {
  struct Layout {
    std::size_t h, n0;
    std::vector<std::size_t> r2;
  };
  std::vector<Layout> layouts{{4, 2, {1, 1}}};
  if (include_large) layouts.push_back({4, 3, {2, 1}});
  const auto labels = factorial_treatment_labels({2, 2});
  std::vector<Contrast> contrasts;
  for (const auto& effect : std::vector<std::vector<int>>{{1, 0}, {0, 1}, {1, 1}})
    contrasts.push_back(factorial_contrast(FactorialStructure{{2, 2}, effect, std::nullopt}));
  for (const auto& layout : layouts) {
    const auto mech = AssignmentMechanism::split_plot(layout.h, layout.n0, {2, 2}, layout.r2);
    const auto plots = Grouping::contiguous(std::vector<std::size_t>(layout.h, layout.n0));
    auto qs = generic_qs(layout.h * layout.n0);
    qs.push_back(q_wholeplot(plots));
    b.add_tables("split-plot H=" + std::to_string(layout.h) + " N0=" + std::to_string(layout.n0),
                 mech, labels, contrasts, qs, std::nullopt, plots);
  }
}

void add_unicluster(CaseBuilder& b) {
  for (const auto& sizes : std::vector<std::vector<std::size_t>>{{2, 2}, {2, 2, 2}, {1, 2, 3}}) {
    const auto clusters = Grouping::contiguous(sizes);
    const auto mech = AssignmentMechanism::unicluster(clusters);
    const auto labels = numbered_labels(sizes.size());
    auto qs = generic_qs(clusters.num_units());
    if (std::all_of(sizes.begin(), sizes.end(), [](auto s) { return s >= 2; }))
      qs.push_back(q_strat(clusters));
    b.add_tables("unicluster sizes=(" + join_sizes(sizes) + ")", mech, labels,
                 default_contrasts(labels), qs, std::nullopt, std::nullopt);
  }
}

void add_custom(CaseBuilder& b) {
  const auto base = enumerate_support(AssignmentMechanism::completely_randomized({2, 2}));
  const std::vector<Rational> weights{Rational(1, 12), Rational(1, 12), Rational(1, 6),
                                      Rational(1, 6),  Rational(1, 4),  Rational(1, 4)};
  const auto skewed = AssignmentMechanism::custom(2, base.partitions, weights);
  const auto labels = numbered_labels(2);
  b.add_tables("custom skewed CR N=4", skewed, labels, default_contrasts(labels), generic_qs(4),
               std::nullopt, Grouping::contiguous({2, 2}));
  b.add_tables("custom skewed CR N=4, perturbed LUE", skewed, labels, default_contrasts(labels),
               generic_qs(4), std::nullopt, std::nullopt, perturbed_lue(skewed, b.seed));

  const auto strat = AssignmentMechanism::stratified(Grouping::contiguous({3, 3}), {{1, 1, 1}, {1, 1, 1}});
  const auto labels3 = numbered_labels(3);
  b.add_tables("stratified N_h=(3,3), perturbed LUE", strat, labels3, default_contrasts(labels3),
               {q_strict(6), q_strat(std::vector<std::size_t>{3, 3})}, std::nullopt, std::nullopt,
               perturbed_lue(strat, b.seed + 1));

  const auto sp = AssignmentMechanism::split_plot(4, 2, {2, 2}, {1, 1});
  const auto sp_support = enumerate_support(sp);
  std::vector<Partition> subset;
  std::vector<Rational> probs;
  for (std::size_t k = 0; k < sp_support.size(); k += 3) {
    subset.push_back(sp_support.partitions[k]);
    probs.push_back(Rational(1));
  }
  for (auto& p : probs) p /= static_cast<long>(subset.size());
  const auto thinned = AssignmentMechanism::custom(4, subset, probs);
  if (positivity_holds(thinned)) {
    const auto sp_labels = factorial_treatment_labels({2, 2});
    b.add_tables("custom thinned split-plot", thinned, sp_labels, default_contrasts(sp_labels),
                 {q_strict(8), q_wholeplot(4, 2)}, std::nullopt, std::nullopt);
  }
}

}  // namespace

OracleCase run_oracle_case(std::string label, const AssignmentMechanism& mech,
                           const PotentialOutcomesTable& table,
                           const std::vector<Contrast>& contrasts, const std::vector<QMatrix>& qs,
                           const Lue& lue, std::size_t cap) {
  return run_case(CaseInput{std::move(label), mech, table, contrasts, qs, lue}, cap);
}

BatteryReport run_battery(const std::string& name, std::uint64_t seed, std::size_t cap) {
  CaseBuilder b{seed, 0, {}};
  if (name == "cr") {
    add_cr(b);
  } else if (name == "stratified") {
    add_stratified(b);
  } else if (name == "splitplot") {
    add_splitplot(b, true);
  } else if (name == "unicluster") {
    add_unicluster(b);
  } else if (name == "custom") {
    add_custom(b);
  } else if (name == "grid") {
    add_cr(b);
    add_stratified(b);
    add_splitplot(b, false);
  } else {
    throw ConfigError("unknown oracle battery '" + name + "'");
  }
  BatteryReport report;
  report.name = name;
  report.seed = seed;
  for (const auto& input : b.specs) report.cases.push_back(run_case(input, cap));
  return report;
}

}  // namespace gamvar
