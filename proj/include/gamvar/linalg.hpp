#pragma once

#include <Eigen/Dense>

namespace gamvar {

struct SymmetricEigen {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // column k pairs with values(k); empty unless requested
  int sweeps = 0;
};

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
/// `tol` times the matrix norm. Only the lower triangle is read.
SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& a, bool want_vectors = false,
                            double tol = 1e-12, int max_sweeps = 100);

double max_eigenvalue(const Eigen::MatrixXd& a);
double min_eigenvalue(const Eigen::MatrixXd& a);

}  // namespace gamvar
