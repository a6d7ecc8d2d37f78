#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "gamvar/assignment.hpp"
#include "gamvar/error.hpp"
#include "gamvar/estimation.hpp"
#include "gamvar/oracle.hpp"
#include "support.hpp"

using namespace gamvar;
namespace gt = gamvar::testing;

namespace {

PotentialOutcomesTable table_of(const Eigen::MatrixXd& y) {
  return PotentialOutcomesTable::from_matrix(gt::arm_labels(static_cast<std::size_t>(y.cols())), y);
}

Contrast contrast_of(const Eigen::VectorXd& g) {
  return Contrast(gt::arm_labels(static_cast<std::size_t>(g.size())),
                  std::vector<double>(g.data(), g.data() + g.size()));
}

Eigen::MatrixXd additive_four() {
  Eigen::MatrixXd y(4, 2);
  y << 1, 2, 2, 3, 3, 4, 4, 5;
  return y;
}

}  // namespace

TEST_CASE("HT mean under complete randomization is the arm mean") {
  const auto mech = AssignmentMechanism::completely_randomized({2, 2});
  const ObservedOutcomes obs(Partition({0, 1, 0, 1}, 2), {4, 9, 6, 1});
  CHECK(ht_mean_estimate(obs, mech, 0) == doctest::Approx(5.0));
  CHECK(ht_mean_estimate(obs, mech, 1) == doctest::Approx(5.0));
}

TEST_CASE("stratified HT equals the weighted stratum means") {
  const std::vector<std::size_t> sizes{4, 5};
  const auto strata = Grouping::contiguous(sizes);
  const std::vector<std::vector<std::size_t>> counts{{2, 2}, {3, 2}};
  const auto mech = AssignmentMechanism::stratified(strata, counts);
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto y = gt::random_table(9, 2, seed);
    const auto t = sample(mech, seed);
    const auto obs = ObservedOutcomes::observe(table_of(y), t);
    for (std::size_t z = 0; z < 2; ++z) {
      double expected = 0.0;
      std::size_t at = 0;
      for (std::size_t h = 0; h < sizes.size(); ++h) {
        double sum = 0.0;
        for (std::size_t i = at; i < at + sizes[h]; ++i)
          if (t.arm_of(i) == z) sum += y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(z));
        expected += (static_cast<double>(sizes[h]) / 9.0) * sum / static_cast<double>(counts[h][z]);
        at += sizes[h];
      }
      CHECK(gt::rel_diff(ht_mean_estimate(obs, mech, z), expected) <= 1e-12);
    }
  }
}

TEST_CASE("constant column is estimated exactly on every partition") {
  Eigen::MatrixXd y(6, 2);
  y.col(0).setConstant(3.5);
  y.col(1).setConstant(-1.25);
  const auto table = table_of(y);
  for (const auto& mech : {AssignmentMechanism::completely_randomized({3, 3}),
                           AssignmentMechanism::stratified(Grouping::contiguous({2, 4}),
                                                           {{1, 1}, {2, 2}})}) {
    for (const auto& t : enumerate_support(mech).partitions) {
      const auto obs = ObservedOutcomes::observe(table, t);
      CHECK(ht_mean_estimate(obs, mech, 0) == doctest::Approx(3.5));
      CHECK(ht_mean_estimate(obs, mech, 1) == doctest::Approx(-1.25));
    }
  }
}

TEST_CASE("contrast estimate") {
  CHECK(contrast_estimate(Contrast({"0", "1"}, {-1, 1}), {"0", "1"}, {3, 5}) == doctest::Approx(2.0));
  CHECK(contrast_estimate(Contrast({"1", "2", "3"}, {1, -2, 1}), {"1", "2", "3"}, {1, 2, 3}) ==
        doctest::Approx(0.0));
  CHECK(contrast_estimate(Contrast({"1", "0"}, {1, -1}), {"0", "1"}, {3, 5}) == doctest::Approx(2.0));
}

TEST_CASE("observed outcomes trap reads of unobserved cells") {
  const auto table = table_of(additive_four());
  const auto obs = ObservedOutcomes::observe(table, Partition({0, 1, 1, 0}, 2));
  CHECK(obs.outcome(0, 0) == 1.0);
  CHECK(obs.outcome(1, 1) == 3.0);
  CHECK_THROWS_AS(obs.outcome(0, 1), std::logic_error);
  CHECK_THROWS_AS(obs.outcome(1, 0), std::logic_error);
}

TEST_CASE("estimators only touch observed cells") {
  const auto mech = AssignmentMechanism::stratified(Grouping::contiguous({3, 3}), {{1, 2}, {2, 1}});
  const auto y = gt::random_table(6, 2, 5);
  for (const auto& t : enumerate_support(mech).partitions) {
    Eigen::MatrixXd poisoned = y;
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t z = 0; z < 2; ++z)
        if (t.arm_of(i) != z)
          poisoned(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(z)) = 1e300;
    const auto clean = ObservedOutcomes::observe(table_of(y), t);
    const auto dirty = ObservedOutcomes::observe(table_of(poisoned), t);
    const MeanEstimator est(mech, HorvitzThompson{});
    CHECK(est.means(clean) == est.means(dirty));
  }
}

TEST_CASE("stratified HT cross moments") {
  // N = 9, strata of 4 and 5
  const auto mech = AssignmentMechanism::stratified(Grouping::contiguous({4, 5}), {{2, 2}, {3, 2}});
  const auto k = cross_moments(mech, HorvitzThompson{});
  const double n2 = 81.0;
  // same stratum, same z: N_h (r_h(z) - 1) / (N^2 (N_h - 1) r_h(z))
  CHECK(k.b(0, 1, 0, 0) == doctest::Approx(4.0 * 1.0 / (n2 * 3.0 * 2.0)));
  CHECK(k.b(4, 5, 0, 0) == doctest::Approx(5.0 * 2.0 / (n2 * 4.0 * 3.0)));
  // different strata: 1/N^2
  CHECK(k.b(0, 6, 0, 1) == doctest::Approx(1.0 / n2));
  CHECK(k.b(0, 6, 1, 1) == doctest::Approx(1.0 / n2));
  // diagonal: 1/(N^2 pi), and zero off the z = z* diagonal
  CHECK(k.b(0, 0, 0, 0) == doctest::Approx(1.0 / (n2 * 0.5)));
  CHECK(k.b(0, 0, 0, 1) == 0.0);
  CHECK(k.A.isZero());
  CHECK(k.A1.isZero());
  CHECK(k.A2.isZero());
}

TEST_CASE("two-arm additive example") {
  const auto table = table_of(additive_four());
  const auto mech = AssignmentMechanism::completely_randomized({2, 2});
  const Contrast c({"0", "1"}, {-1, 1});
  // brute force over the six assignments gives 5/3
  Eigen::VectorXd g(2);
  g << -1, 1;
  CHECK(gt::brute_ht_moments(gt::brute_cr({2, 2}), additive_four(), g).variance ==
        doctest::Approx(5.0 / 3.0));
  CHECK(sampling_variance(table, mech, HorvitzThompson{}, c) == doctest::Approx(5.0 / 3.0));
  const auto ney = neyman_two_arm_variance(table, 2, 2);
  CHECK(ney.s00 == doctest::Approx(5.0 / 3.0));
  CHECK(ney.s11 == doctest::Approx(5.0 / 3.0));
  CHECK(ney.s_tau == doctest::Approx(0.0));
  CHECK(ney.variance == doctest::Approx(5.0 / 3.0));
}

TEST_CASE("constant table has zero variance and covariance") {
  Eigen::MatrixXd y = Eigen::MatrixXd::Constant(5, 3, 2.0);
  const auto table = table_of(y);
  const auto mech = AssignmentMechanism::completely_randomized({2, 2, 1});
  const Contrast c1({"0", "1", "2"}, {1, -2, 1});
  const Contrast c2({"0", "1", "2"}, {-1, 0, 1});
  CHECK(std::abs(sampling_variance(table, mech, HorvitzThompson{}, c1)) <= 1e-12);
  CHECK(std::abs(sampling_covariance(table, mech, HorvitzThompson{}, c1, c2)) <= 1e-12);
}

TEST_CASE("Neyman identical columns") {
  Eigen::MatrixXd y(5, 2);
  y.col(0) << 1, 4, 2, 8, 5;
  y.col(1) = y.col(0);
  const auto ney = neyman_two_arm_variance(table_of(y), 2, 3);
  const double s = gt::sample_var({1, 4, 2, 8, 5});
  CHECK(ney.s_tau == doctest::Approx(0.0));
  CHECK(ney.variance == doctest::Approx(s / 2 + s / 3));
  CHECK_THROWS_AS(neyman_two_arm_variance(table_of(gt::random_table(4, 3, 1)), 2, 2),
                  ContractViolation);
}

TEST_CASE("Neyman decomposition agrees with the coefficient assembly") {
  const Contrast c({"0", "1"}, {-1, 1});
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto table = table_of(gt::random_table(7, 2, seed));
    const auto mech = AssignmentMechanism::completely_randomized({3, 4});
    CHECK(gt::rel_diff(neyman_two_arm_variance(table, 3, 4).variance,
                       sampling_variance(table, mech, HorvitzThompson{}, c)) <= 1e-10);
  }
}

TEST_CASE("variance matches brute force on every design family") {
  struct Case {
    AssignmentMechanism mech;
    std::vector<gt::ArmVector> support;
  };
  std::vector<Case> cases{
      {AssignmentMechanism::completely_randomized({2, 2, 2}), gt::brute_cr({2, 2, 2})},
      {AssignmentMechanism::stratified(Grouping::contiguous({3, 3}), {{1, 2}, {2, 1}}),
       gt::brute_stratified({3, 3}, {{1, 2}, {2, 1}})},
      {AssignmentMechanism::split_plot(4, 2, {2, 2}, {1, 1}), gt::brute_split_plot(4, 2, {2, 2}, {1, 1})},
  };
  for (std::uint64_t seed = 0; seed < 5; ++seed)
    for (const auto& cs : cases) {
      const auto arms = cs.mech.num_arms();
      const auto y = gt::random_table(cs.mech.num_units(), arms, seed);
      Eigen::VectorXd g = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(arms), -1.0, 2.0);
      g.array() -= g.mean();
      const auto brute = gt::brute_ht_moments(cs.support, y, g);
      const auto table = table_of(y);
      const auto c = contrast_of(g);
      const auto k = cross_moments(cs.mech, HorvitzThompson{});
      CHECK(gt::rel_diff(sampling_variance(table, k, c), brute.variance) <= 1e-10);
      CHECK(gt::rel_diff(sampling_variance_pairwise(table, k, c), brute.variance) <= 1e-10);
      CHECK(gt::rel_diff(population_contrast(table, c), brute.mean) <= 1e-10);
    }
}

TEST_CASE("frozen variances") {
  Eigen::MatrixXd ys(9, 2);
  ys << 1.0, 2.5, 2.0, 2.0, 3.5, 4.0, 0.5, 1.5, 2.5, 3.0, 6.0, 7.5, 5.0, 4.5, 7.0, 9.0, 4.0, 6.0;
  const auto strat = AssignmentMechanism::stratified(Grouping::contiguous({5, 4}), {{2, 3}, {2, 2}});
  const Contrast c({"0", "1"}, {-1, 1});
  CHECK(gt::rel_diff(sampling_variance(table_of(ys), strat, HorvitzThompson{}, c),
                     0.76003086419753074) <= 1e-12);

  const auto y3 = gt::random_table(6, 3, 11);
  const auto cr = AssignmentMechanism::completely_randomized({2, 2, 2});
  CHECK(gt::rel_diff(sampling_variance(table_of(y3), cr, HorvitzThompson{},
                                       Contrast({"0", "1", "2"}, {1, -2, 1})),
                     4.2227888579870099) <= 1e-12);
}

TEST_CASE("stratified closed form agrees with the assembly") {
  const std::vector<std::size_t> sizes{3, 4, 5};
  const std::vector<std::vector<std::size_t>> counts{{1, 2}, {2, 2}, {3, 2}};
  const auto mech = AssignmentMechanism::stratified(Grouping::contiguous(sizes), counts);
  const Contrast c({"0", "1"}, {-1, 1});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto table = table_of(gt::random_table(12, 2, seed));
    const auto& design = std::get<Stratified>(mech.design());
    CHECK(gt::rel_diff(stratified_variance_closed_form(table, design, c),
                       sampling_variance(table, mech, HorvitzThompson{}, c)) <= 1e-10);
  }
}

TEST_CASE("covariance") {
  const auto mech = AssignmentMechanism::completely_randomized({2, 2, 1});
  const Contrast c1({"0", "1", "2"}, {1, -2, 1});
  const Contrast c1b({"0", "1", "2"}, {-1, 0, 1});
  const Contrast c2({"0", "1", "2"}, {0.5, 0.5, -1});
  const auto k = cross_moments(mech, HorvitzThompson{});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto table = table_of(gt::random_table(5, 3, seed));
    SUBCASE("self covariance is the variance") {
      CHECK(gt::rel_diff(sampling_covariance(table, k, c1, c1), sampling_variance(table, k, c1)) <=
            1e-12);
    }
    SUBCASE("bilinear in each contrast") {
      const double alpha = 0.7, beta = -1.9;
      const auto mix = linear_combination(alpha, c1, beta, c1b);
      const double lhs = sampling_covariance(table, k, mix, c2);
      const double rhs =
          alpha * sampling_covariance(table, k, c1, c2) + beta * sampling_covariance(table, k, c1b, c2);
      CHECK(std::abs(lhs - rhs) <= 1e-10 * (std::abs(lhs) + std::abs(rhs) + 1.0));
    }
    SUBCASE("matches the enumerated covariance") {
      const auto s = enumerate_support(mech);
      const MeanEstimator est(mech, HorvitzThompson{});
      double e1 = 0, e2 = 0, e12 = 0;
      for (std::size_t t = 0; t < s.size(); ++t) {
        const double p = s.probabilities[t].convert_to<double>();
        const auto obs = ObservedOutcomes::observe(table, s.partitions[t]);
        const double a = est.contrast(obs, c1.aligned(table.treatments()));
        const double b = est.contrast(obs, c2.aligned(table.treatments()));
        e1 += p * a;
        e2 += p * b;
        e12 += p * a * b;
      }
      CHECK(std::abs(sampling_covariance(table, k, c1, c2) - (e12 - e1 * e2)) <= 1e-10);
    }
  }
}

TEST_CASE("custom linear estimators") {
  const auto mech = AssignmentMechanism::completely_randomized({2, 2});
  const auto lue = perturbed_lue(mech, 9);
  CHECK_NOTHROW(validate_lue(mech, lue));

  CustomLue broken = lue;
  for (auto& [key, coef] : broken.by_partition) coef.b *= 2.0;
  CHECK_THROWS_AS(validate_lue(mech, broken), ContractViolation);

  CHECK_THROWS_AS(cross_moments(AssignmentMechanism::completely_randomized({20, 20}), lue, 1000),
                  SupportTooLarge);

  const Contrast c({"0", "1"}, {-1, 1});
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto table = table_of(gt::random_table(4, 2, seed));
    const auto s = enumerate_support(mech);
    const MeanEstimator est(mech, lue);
    double e = 0, e2 = 0;
    for (std::size_t t = 0; t < s.size(); ++t) {
      const double p = s.probabilities[t].convert_to<double>();
      const double v = est.contrast(ObservedOutcomes::observe(table, s.partitions[t]),
                                    c.aligned(table.treatments()));
      e += p * v;
      e2 += p * v * v;
    }
    CHECK(gt::rel_diff(e, population_contrast(table, c)) <= 1e-10);
    CHECK(gt::rel_diff(sampling_variance(table, mech, lue, c), e2 - e * e) <= 1e-10);
  }
}

TEST_CASE("second moments from cross-moment coefficients") {
  const auto mech = AssignmentMechanism::split_plot(4, 2, {2, 2}, {1, 1});
  const auto table = table_of(gt::random_table(8, 4, 3));
  const auto k = cross_moments(mech, HorvitzThompson{});
  const auto s = enumerate_support(mech);
  const MeanEstimator est(mech, HorvitzThompson{});
  for (std::size_t z = 0; z < 4; ++z)
    for (std::size_t w = 0; w < 4; ++w) {
      double e = 0.0;
      for (std::size_t t = 0; t < s.size(); ++t) {
        const auto obs = ObservedOutcomes::observe(table, s.partitions[t]);
        e += s.probabilities[t].convert_to<double>() * est.mean(obs, z) * est.mean(obs, w);
      }
      CHECK(gt::rel_diff(second_moment(k, table, z, w), e) <= 1e-10);
    }
}
