#include "gamvar/assignment.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <numeric>

#include "gamvar/error.hpp"
#include "gamvar/rng.hpp"

namespace gamvar {

// ---------------------------------------------------------------- Partition

Partition::Partition(std::vector<std::size_t> arm_of, std::size_t num_arms)
    : arm_of_(std::move(arm_of)), num_arms_(num_arms) {
  if (num_arms_ < 2) throw ContractViolation("a partition needs at least 2 arms");
  std::vector<bool> used(num_arms_, false);
  for (auto z : arm_of_) {
    if (z >= num_arms_) throw ContractViolation("arm index out of range in partition");
    used[z] = true;
  }
  if (std::find(used.begin(), used.end(), false) != used.end())
    throw ContractViolation("every treatment group of a partition must be nonempty");
}

std::vector<std::size_t> Partition::members(std::size_t arm) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < arm_of_.size(); ++i)
    if (arm_of_[i] == arm) out.push_back(i);
  return out;
}

std::string Partition::encode() const {
  static constexpr char kDigits[] = "0123456789abcdefghijklmnopqrstuvwxyz";
  std::string out;
  if (num_arms_ <= 36) {
    out.reserve(arm_of_.size());
    for (auto z : arm_of_) out.push_back(kDigits[z]);
  } else {
    for (std::size_t i = 0; i < arm_of_.size(); ++i) {
      if (i) out.push_back('.');
      out += std::to_string(arm_of_[i]);
    }
  }
  return out;
}

std::string to_string(MechanismKind kind) {
  switch (kind) {
    case MechanismKind::CompletelyRandomized: return "completely_randomized";
    case MechanismKind::Stratified: return "stratified";
    case MechanismKind::SplitPlot: return "split_plot";
    case MechanismKind::Unicluster: return "unicluster";
    case MechanismKind::Custom: return "custom";
  }
  return "unknown";
}

// ---------------------------------------------------------------- construction

namespace {

std::size_t sum(const std::vector<std::size_t>& v) {
  return std::accumulate(v.begin(), v.end(), std::size_t{0});
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

AssignmentMechanism AssignmentMechanism::completely_randomized(std::vector<std::size_t> counts) {
  if (counts.size() < 2) throw ContractViolation("at least 2 treatments are required");
  for (auto r : counts)
    if (r < 1) throw ContractViolation("every treatment needs at least one unit");
  const auto n = sum(counts);
  if (n < 2) throw ContractViolation("a population needs at least 2 units");
  const auto arms = counts.size();
  return AssignmentMechanism(CompletelyRandomized{std::move(counts)}, n, arms);
}

AssignmentMechanism AssignmentMechanism::stratified(Grouping strata,
                                                    std::vector<std::vector<std::size_t>> counts) {
  if (counts.size() != strata.num_groups())
    throw ContractViolation("need one count vector per stratum");
  if (counts.empty() || counts.front().size() < 2)
    throw ContractViolation("at least 2 treatments are required");
  const auto arms = counts.front().size();
  const auto sizes = strata.sizes();
  for (std::size_t h = 0; h < counts.size(); ++h) {
    if (counts[h].size() != arms)
      throw ContractViolation("stratum count vectors differ in length");
    if (sizes[h] < 2) throw ContractViolation("every stratum needs at least 2 units");
    for (auto r : counts[h])
      if (r < 1) throw ContractViolation("every treatment needs a unit in every stratum");
    if (sum(counts[h]) != sizes[h])
      throw ContractViolation("counts in stratum '" + strata.names[h] +
                              "' do not sum to its size");
  }
  const auto n = strata.num_units();
  return AssignmentMechanism(Stratified{std::move(strata), std::move(counts)}, n, arms);
}

AssignmentMechanism AssignmentMechanism::split_plot(std::size_t num_wholeplots,
                                                    std::size_t wholeplot_size,
                                                    std::vector<std::size_t> wholeplot_counts,
                                                    std::vector<std::size_t> subplot_counts) {
  return split_plot(Grouping::contiguous(std::vector<std::size_t>(num_wholeplots, wholeplot_size)),
                    std::move(wholeplot_counts), std::move(subplot_counts));
}

AssignmentMechanism AssignmentMechanism::split_plot(Grouping wholeplots,
                                                    std::vector<std::size_t> wholeplot_counts,
                                                    std::vector<std::size_t> subplot_counts) {
  const auto sizes = wholeplots.sizes();
  const auto h = wholeplots.num_groups();
  if (h < 2) throw ContractViolation("split-plot needs at least 2 whole-plots");
  if (std::adjacent_find(sizes.begin(), sizes.end(), std::not_equal_to<>()) != sizes.end())
    throw ContractViolation("whole-plots must all have the same size");
  const auto n0 = sizes.front();
  if (n0 < 2) throw ContractViolation("whole-plots need at least 2 sub-plots");
  if (wholeplot_counts.size() < 2 || subplot_counts.size() < 2)
    throw ContractViolation("each split-plot factor needs at least 2 levels");
  for (auto r : wholeplot_counts)
    if (r < 2) throw ContractViolation("each whole-plot level needs at least 2 whole-plots");
  for (auto r : subplot_counts)
    if (r < 1) throw ContractViolation("each sub-plot level needs at least one sub-plot");
  if (sum(wholeplot_counts) != h)
    throw ContractViolation("whole-plot counts must sum to the number of whole-plots");
  if (sum(subplot_counts) != n0)
    throw ContractViolation("sub-plot counts must sum to the whole-plot size");
  const auto arms = wholeplot_counts.size() * subplot_counts.size();
  const auto n = wholeplots.num_units();
  return AssignmentMechanism(
      SplitPlot{std::move(wholeplots), std::move(wholeplot_counts), std::move(subplot_counts)}, n,
      arms);
}

AssignmentMechanism AssignmentMechanism::unicluster(Grouping clusters) {
  const auto arms = clusters.num_groups();
  if (arms < 2) throw ContractViolation("unicluster assignment needs at least 2 clusters");
  for (auto s : clusters.sizes())
    if (s < 1) throw ContractViolation("clusters must be nonempty");
  const auto n = clusters.num_units();
  return AssignmentMechanism(Unicluster{std::move(clusters)}, n, arms);
}

AssignmentMechanism AssignmentMechanism::custom(std::size_t num_arms,
                                                std::vector<Partition> partitions,
                                                std::vector<Rational> probabilities) {
  if (partitions.size() != probabilities.size())
    throw ContractViolation("one probability per partition is required");
  if (partitions.empty()) throw ContractViolation("custom support is empty");
  const auto n = partitions.front().num_units();
  std::map<Partition, Rational> merged;
  Rational total = 0;
  for (std::size_t k = 0; k < partitions.size(); ++k) {
    if (partitions[k].num_units() != n || partitions[k].num_arms() != num_arms)
      throw ContractViolation("custom partitions disagree on units or arms");
    if (probabilities[k] < 0) throw ContractViolation("partition probability is negative");
    total += probabilities[k];
    if (probabilities[k] > 0) merged[partitions[k]] += probabilities[k];
  }
  if (total != 1) throw ContractViolation("custom probabilities must sum to exactly 1");
  CustomSupport support{n, num_arms, {}, {}};
  for (auto& [partition, p] : merged) {
    support.partitions.push_back(partition);
    support.probabilities.push_back(p);
  }
  return AssignmentMechanism(std::move(support), n, num_arms);
}

MechanismKind AssignmentMechanism::kind() const {
  return static_cast<MechanismKind>(design_.index());
}

// ---------------------------------------------------------------- probabilities

namespace {

template <class T>
T ratio(std::size_t num, std::size_t den) {
  if constexpr (std::is_same_v<T, Rational>) {
    return Rational(BigInt(num), BigInt(den));
  } else {
    return static_cast<T>(num) / static_cast<T>(den);
  }
}

template <class T>
T first_order_closed(const AssignmentMechanism::Design& design, std::size_t i, std::size_t z) {
  return std::visit(
      overloaded{
          [&](const CompletelyRandomized& d) { return ratio<T>(d.counts[z], sum(d.counts)); },
          [&](const Stratified& d) {
            const auto h = d.strata.group_of[i];
            return ratio<T>(d.counts[h][z], sum(d.counts[h]));
          },
          [&](const SplitPlot& d) {
            const auto z2n = d.subplot_counts.size();
            return ratio<T>(d.wholeplot_counts[z / z2n] * d.subplot_counts[z % z2n],
                            d.wholeplots.num_units());
          },
          [&](const Unicluster& d) { return ratio<T>(1, d.clusters.num_groups()); },
          [&](const CustomSupport&) -> T { throw std::logic_error("custom has no closed form"); },
      },
      design);
}

/// Probabilities of the two-unit events within one equiprobable block of
/// size m holding counts r.
template <class T>
T within_block(const std::vector<std::size_t>& r, std::size_t m, std::size_t z, std::size_t w) {
  const auto co = z == w ? r[z] * (r[z] - 1) : r[z] * r[w];
  return ratio<T>(co, m * (m - 1));
}

template <class T>
T second_order_closed(const AssignmentMechanism::Design& design, std::size_t i, std::size_t j,
                      std::size_t z, std::size_t w) {
  return std::visit(
      overloaded{
          [&](const CompletelyRandomized& d) { return within_block<T>(d.counts, sum(d.counts), z, w); },
          [&](const Stratified& d) {
            const auto h = d.strata.group_of[i];
            const auto k = d.strata.group_of[j];
            const auto nh = sum(d.counts[h]);
            if (h == k) return within_block<T>(d.counts[h], nh, z, w);
            return ratio<T>(d.counts[h][z] * d.counts[k][w], nh * sum(d.counts[k]));
          },
          [&](const SplitPlot& d) {
            const auto z2n = d.subplot_counts.size();
            const auto z1 = z / z2n, z2 = z % z2n, w1 = w / z2n, w2 = w % z2n;
            const auto& r1 = d.wholeplot_counts;
            const auto& r2 = d.subplot_counts;
            const auto n = d.wholeplots.num_units();
            const auto hcount = d.wholeplots.num_groups();
            const auto n0 = n / hcount;
            if (d.wholeplots.group_of[i] == d.wholeplots.group_of[j]) {
              if (z1 != w1) return ratio<T>(0, 1);
              const auto sub = z2 == w2 ? r2[z2] * (r2[z2] - 1) : r2[z2] * r2[w2];
              return ratio<T>(r1[z1] * sub, n * (n0 - 1));
            }
            const auto whole = z1 == w1 ? r1[z1] * (r1[z1] - 1) : r1[z1] * r1[w1];
            return ratio<T>(whole * r2[z2] * r2[w2], n * n0 * (hcount - 1));
          },
          [&](const Unicluster& d) {
            const auto arms = d.clusters.num_groups();
            if (d.clusters.group_of[i] == d.clusters.group_of[j])
              return z == w ? ratio<T>(1, arms) : ratio<T>(0, 1);
            return z == w ? ratio<T>(0, 1) : ratio<T>(1, arms * (arms - 1));
          },
          [&](const CustomSupport&) -> T { throw std::logic_error("custom has no closed form"); },
      },
      design);
}

void check_unit_arm(const AssignmentMechanism& mech, std::size_t unit, std::size_t arm) {
  if (unit >= mech.num_units()) throw ContractViolation("unit index out of range");
  if (arm >= mech.num_arms()) throw ContractViolation("arm index out of range");
}

}  // namespace

Rational first_order_exact(const AssignmentMechanism& mech, std::size_t unit, std::size_t arm) {
  check_unit_arm(mech, unit, arm);
  if (const auto* c = std::get_if<CustomSupport>(&mech.design())) {
    Rational total = 0;
    for (std::size_t k = 0; k < c->partitions.size(); ++k)
      if (c->partitions[k].assigned(unit, arm)) total += c->probabilities[k];
    return total;
  }
  return first_order_closed<Rational>(mech.design(), unit, arm);
}

double first_order(const AssignmentMechanism& mech, std::size_t unit, std::size_t arm) {
  if (mech.kind() == MechanismKind::Custom)
    return first_order_exact(mech, unit, arm).convert_to<double>();
  check_unit_arm(mech, unit, arm);
  return first_order_closed<double>(mech.design(), unit, arm);
}

Rational second_order_exact(const AssignmentMechanism& mech, std::size_t unit,
                            std::size_t other_unit, std::size_t arm, std::size_t other_arm) {
  check_unit_arm(mech, unit, arm);
  check_unit_arm(mech, other_unit, other_arm);
  if (unit == other_unit)
    throw ContractViolation("second-order probabilities need two distinct units");
  if (const auto* c = std::get_if<CustomSupport>(&mech.design())) {
    Rational total = 0;
    for (std::size_t k = 0; k < c->partitions.size(); ++k)
      if (c->partitions[k].assigned(unit, arm) && c->partitions[k].assigned(other_unit, other_arm))
        total += c->probabilities[k];
    return total;
  }
  return second_order_closed<Rational>(mech.design(), unit, other_unit, arm, other_arm);
}

double second_order(const AssignmentMechanism& mech, std::size_t unit, std::size_t other_unit,
                    std::size_t arm, std::size_t other_arm) {
  if (mech.kind() == MechanismKind::Custom)
    return second_order_exact(mech, unit, other_unit, arm, other_arm).convert_to<double>();
  check_unit_arm(mech, unit, arm);
  check_unit_arm(mech, other_unit, other_arm);
  if (unit == other_unit)
    throw ContractViolation("second-order probabilities need two distinct units");
  return second_order_closed<double>(mech.design(), unit, other_unit, arm, other_arm);
}

bool AssignmentProbabilities::all_pairs_positive() const {
  for (std::size_t i = 0; i < num_units; ++i)
    for (std::size_t j = 0; j < num_units; ++j) {
      if (i == j) continue;
      for (std::size_t z = 0; z < num_arms; ++z)
        for (std::size_t w = 0; w < num_arms; ++w)
          if (!(pi(i, j, z, w) > 0.0)) return false;
    }
  return true;
}

AssignmentProbabilities assignment_probabilities(const AssignmentMechanism& mech) {
  const auto n = mech.num_units();
  const auto arms = mech.num_arms();
  AssignmentProbabilities out;
  out.num_units = n;
  out.num_arms = arms;
  out.first = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(arms));
  const auto dim = static_cast<Eigen::Index>(n * arms);
  out.joint = Eigen::MatrixXd::Zero(dim, dim);

  if (const auto* c = std::get_if<CustomSupport>(&mech.design())) {
    // One pass over the support; exact sums for the first-order table.
    std::vector<Rational> first(n * arms, Rational(0));
    for (std::size_t k = 0; k < c->partitions.size(); ++k) {
      const auto& t = c->partitions[k];
      const double p = c->probabilities[k].convert_to<double>();
      for (std::size_t i = 0; i < n; ++i) {
        first[i * arms + t.arm_of(i)] += c->probabilities[k];
        for (std::size_t j = 0; j < n; ++j)
          if (i != j) out.joint(out.index(i, t.arm_of(i)), out.index(j, t.arm_of(j))) += p;
      }
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t z = 0; z < arms; ++z)
        out.first(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(z)) =
            first[i * arms + z].convert_to<double>();
    return out;
  }

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t z = 0; z < arms; ++z)
      out.first(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(z)) =
          first_order_closed<double>(mech.design(), i, z);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      for (std::size_t z = 0; z < arms; ++z)
        for (std::size_t w = 0; w < arms; ++w)
          out.joint(out.index(i, z), out.index(j, w)) =
              second_order_closed<double>(mech.design(), i, j, z, w);
    }
  return out;
}

bool positivity_holds(const AssignmentMechanism& mech) {
  for (std::size_t i = 0; i < mech.num_units(); ++i)
    for (std::size_t z = 0; z < mech.num_arms(); ++z)
      if (first_order_exact(mech, i, z) <= 0) return false;
  return true;
}

// ---------------------------------------------------------------- enumeration

namespace {

BigInt multinomial(const std::vector<std::size_t>& counts) {
  BigInt out = 1;
  std::size_t seen = 0;
  for (auto r : counts) {
    for (std::size_t k = 1; k <= r; ++k) {
      ++seen;
      out *= seen;
      out /= k;
    }
  }
  return out;
}

/// Units of one randomization block and the arm labels shuffled over them.
struct Block {
  std::vector<std::size_t> slots;   // units (or whole-plots) in the block
  std::vector<std::size_t> labels;  // sorted multiset of arm labels
};

std::vector<std::size_t> label_multiset(const std::vector<std::size_t>& counts) {
  std::vector<std::size_t> out;
  for (std::size_t z = 0; z < counts.size(); ++z) out.insert(out.end(), counts[z], z);
  return out;
}

std::vector<std::vector<std::size_t>> all_arrangements(std::vector<std::size_t> labels) {
  std::vector<std::vector<std::size_t>> out;
  std::sort(labels.begin(), labels.end());
  do {
    out.push_back(labels);
  } while (std::next_permutation(labels.begin(), labels.end()));
  return out;
}

void shuffle(std::vector<std::size_t>& v, CounterRng& rng) {
  for (std::size_t k = v.size(); k > 1; --k) std::swap(v[k - 1], v[rng.below(k)]);
}

}  // namespace

BigInt support_size(const AssignmentMechanism& mech) {
  return std::visit(
      overloaded{
          [](const CompletelyRandomized& d) { return multinomial(d.counts); },
          [](const Stratified& d) {
            BigInt out = 1;
            for (const auto& c : d.counts) out *= multinomial(c);
            return out;
          },
          [](const SplitPlot& d) {
            BigInt out = multinomial(d.wholeplot_counts);
            const auto sub = multinomial(d.subplot_counts);
            for (std::size_t h = 0; h < d.wholeplots.num_groups(); ++h) out *= sub;
            return out;
          },
          [](const Unicluster& d) {
            BigInt out = 1;
            for (std::size_t k = 2; k <= d.clusters.num_groups(); ++k) out *= k;
            return out;
          },
          [](const CustomSupport& d) { return BigInt(d.partitions.size()); },
      },
      mech.design());
}

Support enumerate_support(const AssignmentMechanism& mech, std::size_t cap) {
  const auto count = support_size(mech);
  if (count > cap) throw SupportTooLarge(count.str(), cap);

  Support out;
  out.num_units = mech.num_units();
  out.num_arms = mech.num_arms();

  if (const auto* c = std::get_if<CustomSupport>(&mech.design())) {
    out.partitions = c->partitions;  // already sorted: built from an ordered map
    out.probabilities = c->probabilities;
    return out;
  }

  // Blocks whose arrangements combine by Cartesian product; `assemble` maps a
  // choice of arrangement per block onto a unit-level arm vector.
  std::vector<Block> blocks;
  std::function<std::vector<std::size_t>(const std::vector<const std::vector<std::size_t>*>&)>
      assemble;
  const auto n = mech.num_units();

  std::visit(
      overloaded{
          [&](const CompletelyRandomized& d) {
            Block b;
            b.slots.resize(n);
            std::iota(b.slots.begin(), b.slots.end(), 0);
            b.labels = label_multiset(d.counts);
            blocks.push_back(std::move(b));
          },
          [&](const Stratified& d) {
            auto members = d.strata.members();
            for (std::size_t h = 0; h < members.size(); ++h)
              blocks.push_back({members[h], label_multiset(d.counts[h])});
          },
          [&](const SplitPlot& d) {
            Block whole;
            whole.slots.resize(d.wholeplots.num_groups());
            std::iota(whole.slots.begin(), whole.slots.end(), 0);
            whole.labels = label_multiset(d.wholeplot_counts);
            blocks.push_back(std::move(whole));
            for (auto& m : d.wholeplots.members())
              blocks.push_back({std::move(m), label_multiset(d.subplot_counts)});
          },
          [&](const Unicluster& d) {
            Block b;
            b.slots.resize(d.clusters.num_groups());
            std::iota(b.slots.begin(), b.slots.end(), 0);
            b.labels.resize(d.clusters.num_groups());
            std::iota(b.labels.begin(), b.labels.end(), 0);
            blocks.push_back(std::move(b));
          },
          [](const CustomSupport&) {},
      },
      mech.design());

  const auto kind = mech.kind();
  const auto& design = mech.design();
  assemble = [&](const std::vector<const std::vector<std::size_t>*>& picks) {
    std::vector<std::size_t> arm(n, 0);
    if (kind == MechanismKind::SplitPlot) {
      const auto& d = std::get<SplitPlot>(design);
      const auto z2n = d.subplot_counts.size();
      const auto& whole_levels = *picks[0];
      for (std::size_t b = 1; b < blocks.size(); ++b) {
        const auto h = b - 1;
        for (std::size_t k = 0; k < blocks[b].slots.size(); ++k)
          arm[blocks[b].slots[k]] = whole_levels[h] * z2n + (*picks[b])[k];
      }
    } else if (kind == MechanismKind::Unicluster) {
      const auto& d = std::get<Unicluster>(design);
      for (std::size_t i = 0; i < n; ++i) arm[i] = (*picks[0])[d.clusters.group_of[i]];
    } else {
      for (std::size_t b = 0; b < blocks.size(); ++b)
        for (std::size_t k = 0; k < blocks[b].slots.size(); ++k)
          arm[blocks[b].slots[k]] = (*picks[b])[k];
    }
    return arm;
  };

  std::vector<std::vector<std::vector<std::size_t>>> arrangements;
  for (const auto& b : blocks) arrangements.push_back(all_arrangements(b.labels));

  const auto total = count.convert_to<std::size_t>();
  out.partitions.reserve(total);
  std::vector<std::size_t> odometer(blocks.size(), 0);
  std::vector<const std::vector<std::size_t>*> picks(blocks.size());
  while (true) {
    for (std::size_t b = 0; b < blocks.size(); ++b) picks[b] = &arrangements[b][odometer[b]];
    out.partitions.emplace_back(assemble(picks), mech.num_arms());
    std::size_t b = blocks.size();
    bool done = true;
    while (b > 0) {
      --b;
      if (++odometer[b] < arrangements[b].size()) {
        done = false;
        break;
      }
      odometer[b] = 0;
    }
    if (done) break;
  }
  std::sort(out.partitions.begin(), out.partitions.end());
  out.probabilities.assign(out.partitions.size(), Rational(BigInt(1), count));
  return out;
}

// ---------------------------------------------------------------- sampling

Partition sample(const AssignmentMechanism& mech, std::uint64_t seed) {
  CounterRng rng(seed);
  const auto n = mech.num_units();
  std::vector<std::size_t> arm(n, 0);
  std::visit(
      overloaded{
          [&](const CompletelyRandomized& d) {
            arm = label_multiset(d.counts);
            shuffle(arm, rng);
          },
          [&](const Stratified& d) {
            auto members = d.strata.members();
            for (std::size_t h = 0; h < members.size(); ++h) {
              auto labels = label_multiset(d.counts[h]);
              shuffle(labels, rng);
              for (std::size_t k = 0; k < labels.size(); ++k) arm[members[h][k]] = labels[k];
            }
          },
          [&](const SplitPlot& d) {
            // Stage one: whole-plots to levels of the first factor; stage two:
            // sub-plots within each whole-plot to levels of the second.
            auto whole = label_multiset(d.wholeplot_counts);
            shuffle(whole, rng);
            const auto z2n = d.subplot_counts.size();
            auto members = d.wholeplots.members();
            for (std::size_t h = 0; h < members.size(); ++h) {
              auto sub = label_multiset(d.subplot_counts);
              shuffle(sub, rng);
              for (std::size_t k = 0; k < sub.size(); ++k)
                arm[members[h][k]] = whole[h] * z2n + sub[k];
            }
          },
          [&](const Unicluster& d) {
            std::vector<std::size_t> perm(d.clusters.num_groups());
            std::iota(perm.begin(), perm.end(), 0);
            shuffle(perm, rng);
            for (std::size_t i = 0; i < n; ++i) arm[i] = perm[d.clusters.group_of[i]];
          },
          [&](const CustomSupport& d) {
            // Inverse-CDF on the exact cumulative weights.
            const double u = rng.uniform();
            Rational cumulative = 0;
            std::size_t pick = d.partitions.size() - 1;
            for (std::size_t k = 0; k < d.partitions.size(); ++k) {
              cumulative += d.probabilities[k];
              if (u < cumulative.convert_to<double>()) {
                pick = k;
                break;
              }
            }
            arm = d.partitions[pick].arms();
          },
      },
      mech.design());
  return Partition(std::move(arm), mech.num_arms());
}

// ---------------------------------------------------------------- replication

ReplicationRange replication_counts(const AssignmentMechanism& mech, std::size_t arm) {
  if (arm >= mech.num_arms()) throw ContractViolation("arm index out of range");
  return std::visit(
      overloaded{
          [&](const CompletelyRandomized& d) { return ReplicationRange{d.counts[arm], d.counts[arm]}; },
          [&](const Stratified& d) {
            std::size_t total = 0;
            for (const auto& c : d.counts) total += c[arm];
            return ReplicationRange{total, total};
          },
          [&](const SplitPlot& d) {
            const auto z2n = d.subplot_counts.size();
            const auto r = d.wholeplot_counts[arm / z2n] * d.subplot_counts[arm % z2n];
            return ReplicationRange{r, r};
          },
          [&](const Unicluster& d) {
            auto sizes = d.clusters.sizes();
            auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
            return ReplicationRange{*lo, *hi};
          },
          [&](const CustomSupport& d) {
            ReplicationRange out{d.num_units, 0};
            for (const auto& t : d.partitions) {
              const auto r = static_cast<std::size_t>(
                  std::count(t.arms().begin(), t.arms().end(), arm));
              out.min = std::min(out.min, r);
              out.max = std::max(out.max, r);
            }
            return out;
          },
      },
      mech.design());
}

std::size_t min_block_replication(const AssignmentMechanism& mech) {
  return std::visit(
      overloaded{
          [](const CompletelyRandomized& d) { return *std::min_element(d.counts.begin(), d.counts.end()); },
          [](const Stratified& d) {
            std::size_t lo = std::numeric_limits<std::size_t>::max();
            for (const auto& c : d.counts) lo = std::min(lo, *std::min_element(c.begin(), c.end()));
            return lo;
          },
          [](const SplitPlot& d) {
            return *std::min_element(d.wholeplot_counts.begin(), d.wholeplot_counts.end());
          },
          [](const Unicluster&) { return std::size_t{1}; },
          [&](const CustomSupport&) {
            std::size_t lo = std::numeric_limits<std::size_t>::max();
            for (std::size_t z = 0; z < mech.num_arms(); ++z)
              lo = std::min(lo, replication_counts(mech, z).min);
            return lo;
          },
      },
      mech.design());
}

bool point_estimate_only(const AssignmentMechanism& mech) {
  return min_block_replication(mech) < 2;
}

}  // namespace gamvar
