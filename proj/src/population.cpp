#include "gamvar/population.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "gamvar/error.hpp"

namespace gamvar {

Grouping Grouping::from_labels(const std::vector<std::string>& labels) {
  Grouping g;
  std::map<std::string, std::size_t> index;
  g.group_of.reserve(labels.size());
  for (const auto& label : labels) {
    auto [it, inserted] = index.emplace(label, g.names.size());
    if (inserted) g.names.push_back(label);
    g.group_of.push_back(it->second);
  }
  return g;
}

Grouping Grouping::contiguous(const std::vector<std::size_t>& sizes) {
  Grouping g;
  for (std::size_t h = 0; h < sizes.size(); ++h) {
    g.names.push_back(std::to_string(h + 1));
    g.group_of.insert(g.group_of.end(), sizes[h], h);
  }
  return g;
}

std::vector<std::size_t> Grouping::sizes() const {
  std::vector<std::size_t> out(names.size(), 0);
  for (auto h : group_of) ++out[h];
  return out;
}

std::vector<std::vector<std::size_t>> Grouping::members() const {
  std::vector<std::vector<std::size_t>> out(names.size());
  for (std::size_t i = 0; i < group_of.size(); ++i) out[group_of[i]].push_back(i);
  return out;
}

namespace {

void check_grouping(const std::optional<Grouping>& g, std::size_t n,
                    const char* what) {
  if (!g) return;
  if (g->num_units() != n)
    throw ContractViolation(std::string(what) + " labels cover " +
                            std::to_string(g->num_units()) + " units, expected " +
                            std::to_string(n));
  for (auto h : g->group_of)
    if (h >= g->num_groups())
      throw ContractViolation(std::string(what) + " index out of range");
}

}  // namespace

PotentialOutcomesTable::PotentialOutcomesTable(UnitFrame units,
                                               std::vector<std::string> treatments,
                                               Eigen::MatrixXd y)
    : units_(std::move(units)), treatments_(std::move(treatments)), y_(std::move(y)) {
  const auto n = static_cast<std::size_t>(y_.rows());
  if (n < 2) throw ContractViolation("a population needs at least 2 units");
  if (y_.cols() < 2) throw ContractViolation("at least 2 treatments are required");
  if (treatments_.size() != static_cast<std::size_t>(y_.cols()))
    throw ContractViolation("treatment labels do not match outcome columns");
  if (units_.unit_ids.size() != n)
    throw ContractViolation("unit ids do not match outcome rows");
  {
    auto sorted = treatments_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw ContractViolation("duplicate treatment label");
  }
  if (!y_.allFinite()) throw ContractViolation("potential outcomes must be finite");

  check_grouping(units_.strata, n, "stratum");
  check_grouping(units_.wholeplots, n, "whole-plot");
  check_grouping(units_.clusters, n, "cluster");
  if (units_.strata) {
    for (auto size : units_.strata->sizes())
      if (size < 2) throw ContractViolation("every stratum needs at least 2 units");
  }
  if (units_.wholeplots) {
    auto sizes = units_.wholeplots->sizes();
    if (std::adjacent_find(sizes.begin(), sizes.end(), std::not_equal_to<>()) !=
        sizes.end())
      throw ContractViolation("whole-plots must all have the same size");
  }
}

PotentialOutcomesTable PotentialOutcomesTable::from_matrix(
    std::vector<std::string> treatments, Eigen::MatrixXd y) {
  UnitFrame frame;
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    frame.unit_ids.push_back(std::to_string(i + 1));
  return PotentialOutcomesTable(std::move(frame), std::move(treatments),
                                std::move(y));
}

std::size_t PotentialOutcomesTable::treatment_index(const std::string& label) const {
  auto it = std::find(treatments_.begin(), treatments_.end(), label);
  if (it == treatments_.end())
    throw ContractViolation("unknown treatment label '" + label + "'");
  return static_cast<std::size_t>(it - treatments_.begin());
}

PotentialOutcomesTable PotentialOutcomesTable::with_outcomes(Eigen::MatrixXd y) const {
  return PotentialOutcomesTable(units_, treatments_, std::move(y));
}

Contrast::Contrast(std::vector<std::string> treatments, std::vector<double> weights)
    : treatments_(std::move(treatments)), weights_(std::move(weights)) {
  if (treatments_.size() != weights_.size())
    throw ContractViolation("contrast labels and coefficients differ in length");
  double sum = 0.0;
  bool any_nonzero = false;
  for (double w : weights_) {
    if (!std::isfinite(w)) throw ContractViolation("contrast coefficient is not finite");
    sum += w;
    any_nonzero = any_nonzero || w != 0.0;
  }
  if (!any_nonzero) throw ContractViolation("contrast coefficients are all zero");
  if (std::abs(sum) > 1e-12)
    throw ContractViolation("contrast coefficients must sum to zero");
  auto sorted = treatments_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ContractViolation("duplicate treatment label in contrast");
}

Eigen::VectorXd Contrast::aligned(const std::vector<std::string>& order) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(order.size()));
  for (std::size_t k = 0; k < treatments_.size(); ++k) {
    auto it = std::find(order.begin(), order.end(), treatments_[k]);
    if (it == order.end())
      throw ContractViolation("contrast refers to unknown treatment '" +
                              treatments_[k] + "'");
    g(it - order.begin()) = weights_[k];
  }
  return g;
}

Contrast Contrast::scaled(double factor) const {
  auto w = weights_;
  for (auto& x : w) x *= factor;
  return Contrast(treatments_, std::move(w));
}

Contrast linear_combination(double alpha, const Contrast& a, double beta,
                            const Contrast& b) {
  std::vector<std::string> labels = a.treatments();
  for (const auto& t : b.treatments())
    if (std::find(labels.begin(), labels.end(), t) == labels.end()) labels.push_back(t);
  Eigen::VectorXd g = alpha * a.aligned(labels) + beta * b.aligned(labels);
  return Contrast(labels, std::vector<double>(g.data(), g.data() + g.size()));
}

std::vector<std::string> factorial_treatment_labels(
    const std::vector<std::size_t>& levels) {
  if (levels.empty()) throw ContractViolation("factorial structure has no factors");
  const bool dotted = std::any_of(levels.begin(), levels.end(),
                                  [](std::size_t s) { return s > 10; });
  std::vector<std::string> labels{""};
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (levels[k] < 2) throw ContractViolation("each factor needs at least 2 levels");
    std::vector<std::string> next;
    for (const auto& prefix : labels)
      for (std::size_t l = 0; l < levels[k]; ++l)
        next.push_back(prefix + (dotted && k > 0 ? "." : "") + std::to_string(l));
    labels = std::move(next);
  }
  return labels;
}

std::vector<std::vector<double>> helmert_contrasts(std::size_t s) {
  std::vector<std::vector<double>> out;
  for (std::size_t k = 1; k < s; ++k) {
    std::vector<double> v(s, 0.0);
    const double norm = std::sqrt(static_cast<double>(k * (k + 1)));
    for (std::size_t j = 0; j < k; ++j) v[j] = -1.0 / norm;
    v[k] = static_cast<double>(k) / norm;
    out.push_back(std::move(v));
  }
  return out;
}

namespace {

std::vector<double> kronecker(const std::vector<std::vector<double>>& factors) {
  std::vector<double> out{1.0};
  for (const auto& f : factors) {
    std::vector<double> next;
    next.reserve(out.size() * f.size());
    for (double a : out)
      for (double b : f) next.push_back(a * b);
    out = std::move(next);
  }
  return out;
}

void check_effect(const std::vector<std::size_t>& levels, const std::vector<int>& effect) {
  if (effect.size() != levels.size())
    throw ContractViolation("effect vector length differs from number of factors");
  bool any = false;
  for (int x : effect) {
    if (x != 0 && x != 1) throw ContractViolation("effect entries must be 0 or 1");
    any = any || x == 1;
  }
  if (!any) throw ContractViolation("no factorial effect selected (effect is all zeros)");
}

}  // namespace

Contrast factorial_contrast(const FactorialStructure& fs) {
  check_effect(fs.levels, fs.effect);
  auto labels = factorial_treatment_labels(fs.levels);
  std::vector<std::vector<double>> factors;
  for (std::size_t k = 0; k < fs.levels.size(); ++k) {
    const auto s = fs.levels[k];
    std::vector<double> gk;
    if (fs.per_factor_vectors) {
      if (fs.per_factor_vectors->size() != fs.levels.size())
        throw ContractViolation("need one per-factor vector for every factor");
      gk = (*fs.per_factor_vectors)[k];
      if (gk.size() != s)
        throw ContractViolation("per-factor vector " + std::to_string(k + 1) +
                                " has the wrong length");
      if (fs.effect[k] == 1) {
        double sum = std::accumulate(gk.begin(), gk.end(), 0.0);
        if (std::abs(sum) > 1e-12)
          throw ContractViolation("per-factor vector for an active factor must sum to zero");
        if (std::all_of(gk.begin(), gk.end(), [](double v) { return v == 0.0; }))
          throw ContractViolation("per-factor vector must be nonnull");
      } else {
        if (gk[0] == 0.0 ||
            std::any_of(gk.begin(), gk.end(), [&](double v) { return v != gk[0]; }))
          throw ContractViolation(
              "per-factor vector for an inactive factor must be constant and nonzero");
      }
    } else if (fs.effect[k] == 1) {
      gk = helmert_contrasts(s).front();
    } else {
      gk.assign(s, 1.0 / static_cast<double>(s));
    }
    factors.push_back(std::move(gk));
  }
  return Contrast(std::move(labels), kronecker(factors));
}

std::vector<Contrast> factorial_effect_basis(const std::vector<std::size_t>& levels,
                                             const std::vector<int>& effect) {
  check_effect(levels, effect);
  auto labels = factorial_treatment_labels(levels);
  // Per-factor choices: Helmert vectors for active factors, one constant
  // vector otherwise. Enumerate the product in odometer order.
  std::vector<std::vector<std::vector<double>>> choices;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (effect[k] == 1) {
      choices.push_back(helmert_contrasts(levels[k]));
    } else {
      choices.push_back(
          {std::vector<double>(levels[k], 1.0 / std::sqrt(static_cast<double>(levels[k])))});
    }
  }
  std::vector<Contrast> out;
  std::vector<std::size_t> pick(levels.size(), 0);
  while (true) {
    std::vector<std::vector<double>> factors;
    for (std::size_t k = 0; k < levels.size(); ++k) factors.push_back(choices[k][pick[k]]);
    out.emplace_back(labels, kronecker(factors));
    std::size_t k = levels.size();
    while (k > 0) {
      --k;
      if (++pick[k] < choices[k].size()) break;
      pick[k] = 0;
      if (k == 0) return out;
    }
  }
}

std::vector<double> treatment_means(const PotentialOutcomesTable& table) {
  std::vector<double> out;
  const auto& y = table.outcomes();
  for (Eigen::Index z = 0; z < y.cols(); ++z) out.push_back(y.col(z).mean());
  return out;
}

Eigen::VectorXd unit_contrasts(const PotentialOutcomesTable& table, const Contrast& c) {
  return table.outcomes() * c.aligned(table.treatments());
}

double population_contrast(const PotentialOutcomesTable& table, const Contrast& c) {
  const auto g = c.aligned(table.treatments());
  const auto means = treatment_means(table);
  double total = 0.0;
  for (std::size_t z = 0; z < means.size(); ++z)
    total += g(static_cast<Eigen::Index>(z)) * means[z];
  return total;
}

}  // namespace gamvar
