#pragma once

#include <Eigen/Dense>
#include <functional>

#include "spn/fingerprint.hpp"

namespace spn {

struct AdmmConfig {
    double gamma = 0.0;      // l1 weight; must be set > 0 per problem
    double eta = 1.0;        // augmented Lagrangian parameter
    double epsilon = 1e-4;   // stop when max|Z - V| < epsilon
    int max_iters = 1000;

    void validate() const;
};

// Non-negative, zero-diagonal coefficient matrix plus solve diagnostics.
struct SparseRepr {
    Eigen::MatrixXd coefficients;  // n x n
    int iterations = 0;
    double final_gap = 0.0;        // max|Z - V| at exit
    bool converged = false;
};

// Shrink-toward-zero: a-nu if a>nu, a+nu if a<-nu, else 0.
double soft_threshold(double a, double nu);

// Zero the diagonal, off-diagonal untouched.
Eigen::MatrixXd project_zero_diag(Eigen::MatrixXd m);

// Element-wise max(., 0).
Eigen::MatrixXd project_nonneg(Eigen::MatrixXd m);

// Per-iteration observer (iteration, max|Z-V|, objective of the projected
// iterate). Costs an extra O(n^3) per iteration, so only wired up when
// tracing is requested.
using TraceSink = std::function<void(int, double, double)>;

// ADMM for   min 0.5*|XZ - X|_F^2 + gamma*|Z|_1   s.t. diag(Z)=0, Z>=0.
// One Cholesky factorization of X^T X + eta*I, reused every iteration;
// V-update by soft thresholding followed by the non-negativity and
// zero-diagonal projections, in that order. Returns the projected iterate
// (it satisfies both constraints exactly). Columns must be unit-norm,
// n >= 2. NotConverged is reported through the converged flag, not an
// exception; non-finite iterates throw NumericalFailure.
SparseRepr constrained_lasso(const Eigen::MatrixXd& x, const AdmmConfig& cfg,
                             const TraceSink& trace = nullptr);
SparseRepr constrained_lasso(const FingerprintMatrix& x, const AdmmConfig& cfg,
                             const TraceSink& trace = nullptr);

// 0.5*|XZ - X|_F^2 + gamma*|Z|_1
double lasso_objective(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z, double gamma);

}  // namespace spn
