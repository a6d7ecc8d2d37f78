#include <doctest.h>

#include <cmath>
#include <map>

#include "gamvar/assignment.hpp"
#include "gamvar/error.hpp"
#include "support.hpp"

using namespace gamvar;
namespace gt = gamvar::testing;

namespace {

std::vector<AssignmentMechanism> small_mechanisms() {
  std::vector<AssignmentMechanism> out;
  out.push_back(AssignmentMechanism::completely_randomized({2, 2}));
  out.push_back(AssignmentMechanism::completely_randomized({2, 1, 2}));
  out.push_back(AssignmentMechanism::stratified(Grouping::contiguous({2, 3}), {{1, 1}, {2, 1}}));
  out.push_back(AssignmentMechanism::stratified(Grouping::contiguous({4, 3}), {{2, 2}, {1, 2}}));
  out.push_back(AssignmentMechanism::split_plot(4, 2, {2, 2}, {1, 1}));
  out.push_back(AssignmentMechanism::unicluster(Grouping::contiguous({1, 2, 2})));
  const std::vector<Partition> parts{Partition({0, 0, 1, 1}, 2), Partition({0, 1, 0, 1}, 2),
                                     Partition({1, 1, 0, 0}, 2)};
  out.push_back(AssignmentMechanism::custom(2, parts, {Rational(1, 2), Rational(1, 3), Rational(1, 6)}));
  return out;
}

}  // namespace

TEST_CASE("sampled partitions respect the design counts") {
  const auto cr = AssignmentMechanism::completely_randomized({2, 2});
  const auto strat =
      AssignmentMechanism::stratified(Grouping::contiguous({3, 4}), {{1, 2}, {2, 2}});
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto t = sample(cr, seed);
    CHECK(t.members(0).size() == 2);
    CHECK(t.members(1).size() == 2);
    const auto s = sample(strat, seed);
    std::size_t a = 0, b = 0;
    for (std::size_t i = 0; i < 3; ++i) a += s.arm_of(i) == 0;
    for (std::size_t i = 3; i < 7; ++i) b += s.arm_of(i) == 0;
    CHECK(a == 1);
    CHECK(b == 2);
  }
}

TEST_CASE("sample is a pure function of the seed") {
  const auto sp = AssignmentMechanism::split_plot(4, 3, {2, 2}, {2, 1});
  CHECK(sample(sp, 42) == sample(sp, 42));
  bool differs = false;
  for (std::uint64_t s = 1; s < 20 && !differs; ++s) differs = !(sample(sp, 0) == sample(sp, s));
  CHECK(differs);
}

TEST_CASE("empirical frequencies match the support within 4 sigma") {
  const std::size_t draws = 1'000'000;
  for (const auto& mech : {AssignmentMechanism::completely_randomized({2, 2}),
                           AssignmentMechanism::split_plot(4, 2, {2, 2}, {1, 1})}) {
    const auto support = enumerate_support(mech);
    std::map<std::string, std::size_t> counts;
    for (std::size_t d = 0; d < draws; ++d) ++counts[sample(mech, d).encode()];
    CHECK(counts.size() == support.size());
    for (std::size_t k = 0; k < support.size(); ++k) {
      const double p = support.probabilities[k].convert_to<double>();
      const double freq = static_cast<double>(counts[support.partitions[k].encode()]) / draws;
      CHECK(std::abs(freq - p) <= 4.0 * std::sqrt(p * (1 - p) / draws));
    }
  }
}

TEST_CASE("first-order probabilities") {
  const auto strat = AssignmentMechanism::stratified(Grouping::contiguous({5, 4}), {{2, 3}, {2, 2}});
  CHECK(first_order_exact(strat, 0, 0) == Rational(2, 5));
  CHECK(first_order(strat, 0, 0) == doctest::Approx(0.4));
  const auto sp = AssignmentMechanism::split_plot(4, 3, {2, 2}, {2, 1});
  // arm 1 is z1 = 0, z2 = 1 with r1 = 2, r2 = 1
  CHECK(first_order_exact(sp, 5, 1) == Rational(1, 6));
  const auto uni = AssignmentMechanism::unicluster(Grouping::contiguous({2, 2, 2}));
  CHECK(first_order_exact(uni, 3, 2) == Rational(1, 3));
}

TEST_CASE("second-order probabilities") {
  const auto strat = AssignmentMechanism::stratified(Grouping::contiguous({5, 4}), {{2, 3}, {2, 2}});
  // r_h(z)(r_h(z) - 1) / (N_h(N_h - 1)) = 2 / 20
  CHECK(second_order_exact(strat, 0, 1, 0, 0) == Rational(1, 10));
  CHECK(second_order(strat, 0, 1, 0, 0) == doctest::Approx(0.1));
  CHECK(second_order_exact(strat, 0, 1, 1, 1) == Rational(3, 10));
  CHECK(second_order_exact(strat, 0, 5, 0, 0) == Rational(1, 5));
  const auto sp = AssignmentMechanism::split_plot(4, 2, {2, 2}, {1, 1});
  // units 0 and 1 share a whole-plot; arms 0 and 2 differ in z1
  CHECK(second_order_exact(sp, 0, 1, 0, 2) == 0);
  const auto uni = AssignmentMechanism::unicluster(Grouping::contiguous({2, 2, 2}));
  CHECK(second_order_exact(uni, 0, 1, 0, 1) == 0);
  CHECK(second_order_exact(uni, 0, 2, 1, 1) == 0);
  CHECK(second_order_exact(uni, 0, 2, 0, 1) == Rational(1, 6));
}

TEST_CASE("support sizes") {
  CHECK(enumerate_support(AssignmentMechanism::completely_randomized({2, 2})).size() == 6);
  const auto s = enumerate_support(
      AssignmentMechanism::stratified(Grouping::contiguous({2, 2}), {{1, 1}, {1, 1}}));
  CHECK(s.size() == 4);
  for (const auto& p : s.probabilities) CHECK(p == Rational(1, 4));
  // C(4,2) * 2^4, counted by the brute-force enumerator
  const auto sp = enumerate_support(AssignmentMechanism::split_plot(4, 2, {2, 2}, {1, 1}));
  CHECK(sp.size() == 96);
  CHECK(gt::brute_split_plot(4, 2, {2, 2}, {1, 1}).size() == 96);
  for (const auto& p : sp.probabilities) CHECK(p == Rational(1, 96));
  CHECK(support_size(AssignmentMechanism::split_plot(4, 2, {2, 2}, {1, 1})) == 96);
}

TEST_CASE("support is sorted and sums to one") {
  for (const auto& mech : small_mechanisms()) {
    const auto s = enumerate_support(mech);
    Rational total = 0;
    for (const auto& p : s.probabilities) total += p;
    CHECK(total == 1);
    for (std::size_t k = 1; k < s.size(); ++k)
      CHECK(s.partitions[k - 1].encode() < s.partitions[k].encode());
    CHECK(BigInt(s.size()) == support_size(mech));
  }
}

TEST_CASE("support matches the brute-force enumerator") {
  auto encode_all = [](const std::vector<gt::ArmVector>& v, std::size_t arms) {
    std::vector<std::string> out;
    for (const auto& t : v) out.push_back(Partition(t, arms).encode());
    return out;
  };
  auto lib = [](const AssignmentMechanism& m) {
    std::vector<std::string> out;
    for (const auto& p : enumerate_support(m).partitions) out.push_back(p.encode());
    return out;
  };
  CHECK(lib(AssignmentMechanism::completely_randomized({2, 1, 2})) ==
        encode_all(gt::brute_cr({2, 1, 2}), 3));
  CHECK(lib(AssignmentMechanism::stratified(Grouping::contiguous({3, 3}), {{1, 2}, {2, 1}})) ==
        encode_all(gt::brute_stratified({3, 3}, {{1, 2}, {2, 1}}), 2));
  CHECK(lib(AssignmentMechanism::split_plot(4, 3, {2, 2}, {2, 1})) ==
        encode_all(gt::brute_split_plot(4, 3, {2, 2}, {2, 1}), 4));
  CHECK(lib(AssignmentMechanism::unicluster(Grouping::contiguous({1, 2, 3}))) ==
        encode_all(gt::brute_unicluster({1, 2, 3}), 3));
}

TEST_CASE("closed forms equal exact support sums") {
  for (const auto& mech : small_mechanisms()) {
    const auto s = enumerate_support(mech);
    const auto n = mech.num_units(), arms = mech.num_arms();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t z = 0; z < arms; ++z) {
        Rational first = 0;
        for (std::size_t k = 0; k < s.size(); ++k)
          if (s.partitions[k].arm_of(i) == z) first += s.probabilities[k];
        CHECK(first_order_exact(mech, i, z) == first);
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          for (std::size_t w = 0; w < arms; ++w) {
            Rational joint = 0;
            for (std::size_t k = 0; k < s.size(); ++k)
              if (s.partitions[k].arm_of(i) == z && s.partitions[k].arm_of(j) == w)
                joint += s.probabilities[k];
            CHECK(second_order_exact(mech, i, j, z, w) == joint);
          }
        }
      }
  }
}

TEST_CASE("marginal identities") {
  for (const auto& mech : small_mechanisms()) {
    const auto n = mech.num_units(), arms = mech.num_arms();
    for (std::size_t i = 0; i < n; ++i) {
      Rational total = 0;
      for (std::size_t z = 0; z < arms; ++z) total += first_order_exact(mech, i, z);
      CHECK(total == 1);
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        for (std::size_t z = 0; z < arms; ++z) {
          Rational row = 0;
          for (std::size_t w = 0; w < arms; ++w) row += second_order_exact(mech, i, j, z, w);
          CHECK(row == first_order_exact(mech, i, z));
          for (std::size_t w = 0; w < arms; ++w)
            CHECK(second_order_exact(mech, i, j, z, w) == second_order_exact(mech, j, i, w, z));
        }
      }
    }
  }
}

TEST_CASE("replication counts") {
  const auto cr = AssignmentMechanism::completely_randomized({2, 2});
  CHECK(replication_counts(cr, 0).min == 2);
  CHECK(replication_counts(cr, 1).constant());
  const auto strat = AssignmentMechanism::stratified(Grouping::contiguous({3, 4}), {{1, 2}, {2, 2}});
  CHECK(replication_counts(strat, 0).min == 3);
  CHECK(replication_counts(strat, 1).max == 4);
  const auto sp = AssignmentMechanism::split_plot(4, 3, {2, 2}, {2, 1});
  const auto first = gt::brute_split_plot(4, 3, {2, 2}, {2, 1}).front();
  for (std::size_t z = 0; z < 4; ++z) {
    const auto r = replication_counts(sp, z);
    std::size_t brute = 0;
    for (auto x : first) brute += x == z;
    CHECK(r.constant());
    CHECK(r.min == brute);
  }
  const std::vector<Partition> parts{Partition({0, 0, 1}, 2), Partition({0, 1, 1}, 2)};
  const auto custom = AssignmentMechanism::custom(2, parts, {Rational(1, 2), Rational(1, 2)});
  CHECK(replication_counts(custom, 0).min == 1);
  CHECK(replication_counts(custom, 0).max == 2);
}

TEST_CASE("design validation") {
  CHECK_THROWS_AS(AssignmentMechanism::completely_randomized({2, 0}), ContractViolation);
  CHECK(point_estimate_only(AssignmentMechanism::completely_randomized({1, 3})));
  CHECK_FALSE(point_estimate_only(AssignmentMechanism::completely_randomized({2, 2})));
  CHECK_THROWS_AS(AssignmentMechanism::split_plot(2, 2, {1, 1}, {1, 1}), ContractViolation);
  CHECK_THROWS_AS(AssignmentMechanism::split_plot(4, 2, {2, 2}, {1, 2}), ContractViolation);
  CHECK_THROWS_AS(AssignmentMechanism::unicluster(Grouping::contiguous({3})), ContractViolation);
  const std::vector<Partition> parts{Partition({0, 1}, 2), Partition({1, 0}, 2)};
  CHECK_THROWS_AS(AssignmentMechanism::custom(2, parts, {Rational(1, 2), Rational(1, 3)}),
                  ContractViolation);
  CHECK_THROWS_AS(Partition({0, 0}, 2), ContractViolation);
}

TEST_CASE("positivity flags custom designs that never use an arm for a unit") {
  for (const auto& mech : small_mechanisms())
    if (mech.kind() != MechanismKind::Custom) CHECK(positivity_holds(mech));
  const std::vector<Partition> parts{Partition({0, 1, 1}, 2), Partition({0, 0, 1}, 2)};
  const auto custom = AssignmentMechanism::custom(2, parts, {Rational(1, 2), Rational(1, 2)});
  CHECK_FALSE(positivity_holds(custom));
}

TEST_CASE("support cap") {
  const auto big = AssignmentMechanism::completely_randomized({10, 10});
  CHECK_THROWS_AS(enumerate_support(big, 1000), SupportTooLarge);
  try {
    enumerate_support(big, 1000);
  } catch (const SupportTooLarge& e) {
    CHECK(e.count() == "184756");
  }
}
