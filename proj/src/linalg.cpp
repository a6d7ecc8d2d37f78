#include "gamvar/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace gamvar {

namespace {

double off_norm(const Eigen::MatrixXd& a) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = j + 1; i < a.rows(); ++i) s += 2.0 * a(i, j) * a(i, j);
  return std::sqrt(s);
}

}  // namespace

SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& input, bool want_vectors, double tol,
                            int max_sweeps) {
  if (input.rows() != input.cols()) throw std::invalid_argument("matrix is not square");
  const Eigen::Index n = input.rows();
  Eigen::MatrixXd a = input.selfadjointView<Eigen::Lower>();
  Eigen::MatrixXd v;
  if (want_vectors) v = Eigen::MatrixXd::Identity(n, n);

  SymmetricEigen out;
  const double scale = a.norm();
  const double target = tol * (scale > 0.0 ? scale : 1.0);
  while (off_norm(a) > target) {
    if (out.sweeps == max_sweeps)
      throw std::runtime_error("Jacobi eigensolver did not converge");
    ++out.sweeps;
    for (Eigen::Index p = 0; p < n - 1; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Rotation angle from the 2x2 symmetric Schur decomposition.
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        if (want_vectors)
          for (Eigen::Index k = 0; k < n; ++k) {
            const double vkp = v(k, p), vkq = v(k, q);
            v(k, p) = c * vkp - s * vkq;
            v(k, q) = s * vkp + c * vkq;
          }
      }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return a(x, x) < a(y, y); });
  out.values.resize(n);
  if (want_vectors) out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto src = order[static_cast<std::size_t>(k)];
    out.values(k) = a(src, src);
    if (want_vectors) out.vectors.col(k) = v.col(src);
  }
  return out;
}

double max_eigenvalue(const Eigen::MatrixXd& a) {
  const auto e = jacobi_eigen(a);
  return e.values(e.values.size() - 1);
}

double min_eigenvalue(const Eigen::MatrixXd& a) { return jacobi_eigen(a).values(0); }

}  // namespace gamvar
