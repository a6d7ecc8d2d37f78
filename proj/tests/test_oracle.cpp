#include <doctest.h>

#include <cmath>

#include "gamvar/error.hpp"
#include "gamvar/oracle.hpp"
#include "support.hpp"

using namespace gamvar;
namespace gt = gamvar::testing;

namespace {

PotentialOutcomesTable table_of(const Eigen::MatrixXd& y) {
  return PotentialOutcomesTable::from_matrix(gt::arm_labels(static_cast<std::size_t>(y.cols())), y);
}

}  // namespace

TEST_CASE("compensated sum") {
  CompensatedSum s;
  s.add(1.0);
  for (int k = 0; k < 1000; ++k) s.add(1e-16);
  s.add(-1.0);
  CHECK(s.value() == doctest::Approx(1e-13).epsilon(1e-6));
}

TEST_CASE("expectations over the support") {
  const auto mech = AssignmentMechanism::completely_randomized({2, 3});
  const auto e = expectation(mech, [](const Partition&) { return 4.0; });
  CHECK(e.value == doctest::Approx(4.0));
  CHECK(e.support_size == 10);
  CHECK(e.weight_check == 1);
  const auto in_arm = expectation(mech, [](const Partition& t) { return t.arm_of(0) == 1 ? 1.0 : 0.0; });
  CHECK(in_arm.value == doctest::Approx(0.6));
  CHECK_THROWS_AS(expectation(AssignmentMechanism::completely_randomized({10, 10}),
                              [](const Partition&) { return 0.0; }, 1000),
                  SupportTooLarge);
}

TEST_CASE("compare") {
  const auto r = compare(1.0, 1.0 + 1e-12);
  CHECK(r.absolute == doctest::Approx(1e-12).epsilon(1e-3));
  CHECK(r.relative <= 1e-11);
  CHECK(compare(0.0, 0.0).relative == 0.0);
  CHECK(compare(1e-20, 0.0, 1.0).relative == doctest::Approx(1e-20));
}

TEST_CASE("verify routines on a completely randomized design") {
  const auto mech = AssignmentMechanism::completely_randomized({2, 2, 2});
  const Contrast c({"0", "1", "2"}, {1, -2, 1});
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto table = table_of(gt::random_table(6, 3, seed));
    CHECK(verify_unbiasedness(table, mech, HorvitzThompson{}, c).relative <= 1e-10);
    const auto v = verify_variance(table, mech, HorvitzThompson{}, c);
    CHECK(v.relative <= 1e-10);
    CHECK(gt::rel_diff(v.reference, gt::brute_ht_moments(gt::brute_cr({2, 2, 2}), table.outcomes(),
                                                         c.aligned(table.treatments()))
                                        .variance) <= 1e-10);
    const auto vq = verify_vq_estimator(table, mech, HorvitzThompson{}, c, q_strict(6));
    CHECK(vq.against_v_q.relative <= 1e-10);
    CHECK(vq.bias >= 0.0);
    CHECK(vq.against_var.absolute == doctest::Approx(vq.bias).epsilon(1e-8));
  }
  const auto cov = verify_covariance(table_of(gt::random_table(6, 3, 9)), mech, HorvitzThompson{}, c,
                                     Contrast({"0", "1", "2"}, {-1, 0, 1}), q_strict(6));
  CHECK(cov.assembly.relative <= 1e-10);
  CHECK(cov.against_c_q.relative <= 1e-10);
}

TEST_CASE("V-hat matches the variance under additivity") {
  const auto mech = AssignmentMechanism::completely_randomized({3, 3});
  Eigen::MatrixXd y(6, 2);
  y.col(0) = gt::random_table(6, 1, 2).col(0);
  y.col(1) = y.col(0).array() + 2.0;
  const auto vq = verify_vq_estimator(table_of(y), mech, HorvitzThompson{}, Contrast({"0", "1"}, {-1, 1}),
                                      q_strict(6));
  CHECK(std::abs(vq.bias) <= 1e-14);
  CHECK(vq.against_var.relative <= 1e-10);
}

TEST_CASE("V-hat refusal propagates") {
  const auto mech = AssignmentMechanism::unicluster(Grouping::contiguous({2, 2, 2}));
  CHECK_THROWS_AS(verify_vq_estimator(table_of(gt::random_table(6, 3, 1)), mech, HorvitzThompson{},
                                      Contrast({"0", "1", "2"}, {1, -2, 1}), q_strict(6)),
                  SapViolation);
}

TEST_CASE("assignment probability checks") {
  const std::vector<AssignmentMechanism> mechs{
      AssignmentMechanism::completely_randomized({2, 3, 1}),
      AssignmentMechanism::stratified(Grouping::contiguous({4, 3}), {{2, 2}, {1, 2}}),
      AssignmentMechanism::split_plot(4, 2, {2, 2}, {1, 1}),
      AssignmentMechanism::unicluster(Grouping::contiguous({1, 3, 2})),
  };
  for (const auto& m : mechs) {
    const auto p = verify_assignment_probabilities(m);
    CHECK(p.first_order_mismatches == 0);
    CHECK(p.second_order_mismatches == 0);
    CHECK(p.weights_sum_to_one);
    CHECK(p.support_size == enumerate_support(m).size());
  }
}

TEST_CASE("perturbed estimator is unbiased and differs from HT") {
  const auto mech = AssignmentMechanism::completely_randomized({2, 3});
  const auto lue = perturbed_lue(mech, 5);
  CHECK_NOTHROW(validate_lue(mech, lue));
  const auto table = table_of(gt::random_table(5, 2, 4));
  const Contrast c({"0", "1"}, {-1, 1});
  CHECK(verify_unbiasedness(table, mech, lue, c).relative <= 1e-10);
  const auto v = verify_variance(table, mech, lue, c);
  CHECK(v.relative <= 1e-10);
  CHECK(gt::rel_diff(v.reference, sampling_variance(table, mech, HorvitzThompson{}, c)) > 1e-6);

  auto broken = lue;
  for (auto& [key, coef] : broken.by_partition) coef.b *= 2.0;
  CHECK_THROWS_AS(validate_lue(mech, broken), ContractViolation);
}

TEST_CASE("oracle case reports every check") {
  const auto mech = AssignmentMechanism::split_plot(4, 2, {2, 2}, {1, 1});
  const auto table = table_of(gt::random_table(8, 4, 3));
  const std::vector<Contrast> cs{Contrast({"0", "1", "2", "3"}, {-1, -1, 1, 1}),
                                 Contrast({"0", "1", "2", "3"}, {-1, 1, -1, 1})};
  const auto oc = run_oracle_case("sp", mech, table, cs, {q_wholeplot(4, 2), q_strict(8)});
  CHECK(oc.passed());
  CHECK(oc.support_size == 6 * 16);
  CHECK(oc.checks.size() > 10);
  for (const auto& check : oc.checks) CHECK(check.tolerance > 0.0);
}

TEST_CASE("batteries pass") {
  for (const auto& name : battery_names()) {
    CAPTURE(name);
    for (std::uint64_t seed : {1u, 42u}) {
      const auto report = run_battery(name, seed);
      CHECK(report.passed());
      CHECK(report.num_checks() > 0);
      for (const auto& [check, worst] : report.max_relative()) {
        CAPTURE(check);
        CHECK(worst <= 1e-10);
      }
    }
  }
  CHECK_THROWS_AS(run_battery("nope", 1), ConfigError);
}
