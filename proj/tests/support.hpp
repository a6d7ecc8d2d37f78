#pragma once

// Independent reference computations for the tests. Nothing here calls into
// the library's enumeration, probability or variance code.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gamvar/population.hpp"
#include "gamvar/rng.hpp"

namespace gamvar::testing {

using ArmVector = std::vector<std::size_t>;

/// Every arm vector in {0..arms-1}^n accepted by `valid`, in lexicographic
/// order. All designs exercised with this are uniform over their support.
inline std::vector<ArmVector> brute_support(std::size_t n, std::size_t arms,
                                            const std::function<bool(const ArmVector&)>& valid) {
  std::vector<ArmVector> out;
  ArmVector t(n, 0);
  while (true) {
    if (valid(t)) out.push_back(t);
    std::size_t k = n;
    while (k > 0) {
      --k;
      if (++t[k] < arms) break;
      t[k] = 0;
      if (k == 0) return out;
    }
    if (n == 0) return out;
  }
}

inline std::vector<std::size_t> arm_counts(const ArmVector& t, std::size_t arms,
                                           std::size_t begin, std::size_t end) {
  std::vector<std::size_t> c(arms, 0);
  for (std::size_t i = begin; i < end; ++i) ++c[t[i]];
  return c;
}

inline std::vector<ArmVector> brute_cr(const std::vector<std::size_t>& counts) {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  return brute_support(n, counts.size(), [&](const ArmVector& t) {
    return arm_counts(t, counts.size(), 0, n) == counts;
  });
}

/// Strata are contiguous blocks of the given sizes.
inline std::vector<ArmVector> brute_stratified(const std::vector<std::size_t>& sizes,
                                               const std::vector<std::vector<std::size_t>>& counts) {
  std::size_t n = 0;
  for (auto s : sizes) n += s;
  const auto arms = counts.front().size();
  return brute_support(n, arms, [&](const ArmVector& t) {
    std::size_t at = 0;
    for (std::size_t h = 0; h < sizes.size(); ++h) {
      if (arm_counts(t, arms, at, at + sizes[h]) != counts[h]) return false;
      at += sizes[h];
    }
    return true;
  });
}

/// Arm index z1 * |Z2| + z2; whole-plots are contiguous blocks of size n0.
inline std::vector<ArmVector> brute_split_plot(std::size_t h, std::size_t n0,
                                               const std::vector<std::size_t>& r1,
                                               const std::vector<std::size_t>& r2) {
  const auto a1 = r1.size(), a2 = r2.size();
  return brute_support(h * n0, a1 * a2, [&](const ArmVector& t) {
    std::vector<std::size_t> plots(a1, 0);
    for (std::size_t p = 0; p < h; ++p) {
      const auto z1 = t[p * n0] / a2;
      std::vector<std::size_t> sub(a2, 0);
      for (std::size_t u = p * n0; u < (p + 1) * n0; ++u) {
        if (t[u] / a2 != z1) return false;
        ++sub[t[u] % a2];
      }
      if (sub != r2) return false;
      ++plots[z1];
    }
    return plots == r1;
  });
}

/// Cluster k is a contiguous block of sizes[k]; each cluster gets one arm and
/// every arm is used once.
inline std::vector<ArmVector> brute_unicluster(const std::vector<std::size_t>& sizes) {
  std::size_t n = 0;
  for (auto s : sizes) n += s;
  const auto arms = sizes.size();
  return brute_support(n, arms, [&](const ArmVector& t) {
    std::vector<bool> used(arms, false);
    std::size_t at = 0;
    for (auto s : sizes) {
      for (std::size_t u = at; u < at + s; ++u)
        if (t[u] != t[at]) return false;
      if (used[t[at]]) return false;
      used[t[at]] = true;
      at += s;
    }
    return true;
  });
}

/// Uniform-support moments of the HT contrast estimator, computed directly:
/// pi from frequency counts, tau-hat per partition, then mean and variance.
struct BruteMoments {
  double mean = 0.0;
  double variance = 0.0;
  Eigen::MatrixXd pi;  // N x |Z|
};

inline BruteMoments brute_ht_moments(const std::vector<ArmVector>& support, const Eigen::MatrixXd& y,
                                     const Eigen::VectorXd& g) {
  const auto n = static_cast<std::size_t>(y.rows());
  const auto arms = static_cast<std::size_t>(y.cols());
  const double m = static_cast<double>(support.size());
  BruteMoments out;
  out.pi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(arms));
  for (const auto& t : support)
    for (std::size_t i = 0; i < n; ++i) out.pi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t[i])) += 1.0 / m;
  std::vector<double> est;
  for (const auto& t : support) {
    double tau = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      const auto z = static_cast<Eigen::Index>(t[i]);
      tau += g(z) * y(r, z) / (static_cast<double>(n) * out.pi(r, z));
    }
    est.push_back(tau);
  }
  for (double e : est) out.mean += e / m;
  for (double e : est) out.variance += (e - out.mean) * (e - out.mean) / m;
  return out;
}

/// Sample variance with divisor n - 1.
inline double sample_var(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size() - 1);
}

inline Eigen::MatrixXd random_table(std::size_t n, std::size_t arms, std::uint64_t seed,
                                    std::uint64_t stream = 0) {
  CounterRng rng(seed, stream);
  Eigen::MatrixXd y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(arms));
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (Eigen::Index z = 0; z < y.cols(); ++z) y(i, z) = 5.0 + 2.0 * rng.normal();
  return y;
}

inline std::vector<std::string> arm_labels(std::size_t arms) {
  std::vector<std::string> out;
  for (std::size_t z = 0; z < arms; ++z) out.push_back(std::to_string(z));
  return out;
}

inline double rel_diff(double a, double b) {
  const double d = std::abs(a - b);
  const double s = std::max(std::abs(a), std::abs(b));
  return s == 0.0 ? d : d / s;
}

}  // namespace gamvar::testing
