#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "gamvar/linalg.hpp"
#include "gamvar/rng.hpp"

using namespace gamvar;

namespace {

Eigen::MatrixXd random_symmetric(Eigen::Index n, std::uint64_t seed) {
  CounterRng rng(seed, 17);
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) a(i, j) = a(j, i) = rng.normal();
  return a;
}

}  // namespace

TEST_CASE("Jacobi eigenvalues match a reference solver") {
  for (Eigen::Index n : {1, 2, 3, 7, 20, 60}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto a = random_symmetric(n, seed * 100 + static_cast<std::uint64_t>(n));
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(a);
      const auto mine = jacobi_eigen(a);
      const double scale = a.norm();
      for (Eigen::Index k = 0; k < n; ++k)
        CHECK(std::abs(mine.values(k) - ref.eigenvalues()(k)) <= 1e-12 * scale);
    }
  }
}

TEST_CASE("Jacobi eigenvectors reconstruct the matrix") {
  const auto a = random_symmetric(15, 3);
  const auto e = jacobi_eigen(a, true);
  const Eigen::MatrixXd back = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
  CHECK((back - a).norm() <= 1e-11 * a.norm());
  CHECK((e.vectors.transpose() * e.vectors - Eigen::MatrixXd::Identity(15, 15)).norm() <= 1e-12);
}

TEST_CASE("Jacobi reads only the lower triangle") {
  Eigen::MatrixXd a = random_symmetric(6, 8);
  Eigen::MatrixXd lower = a;
  lower.triangularView<Eigen::StrictlyUpper>().setConstant(99.0);
  CHECK((jacobi_eigen(a).values - jacobi_eigen(lower).values).norm() <= 1e-13);
}

TEST_CASE("extreme eigenvalues") {
  Eigen::MatrixXd d = Eigen::Vector3d(3.0, -1.0, 2.0).asDiagonal();
  CHECK(max_eigenvalue(d) == doctest::Approx(3.0));
  CHECK(min_eigenvalue(d) == doctest::Approx(-1.0));
  CHECK(jacobi_eigen(d).sweeps <= 1);
  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(4, 4);
  CHECK(max_eigenvalue(zero) == 0.0);
}

TEST_CASE("rank-deficient matrices") {
  Eigen::VectorXd v(5);
  v << 1, -2, 0.5, 3, -2.5;
  const Eigen::MatrixXd a = v * v.transpose();
  const auto e = jacobi_eigen(a);
  CHECK(e.values(4) == doctest::Approx(v.squaredNorm()));
  for (Eigen::Index k = 0; k < 4; ++k) CHECK(std::abs(e.values(k)) <= 1e-12 * a.norm());
}
