#include "spn/admm.hpp"

#include <Eigen/Cholesky>
#include <cmath>

namespace spn {

void AdmmConfig::validate() const {
    if (!(gamma > 0.0)) throw DimensionMismatch("AdmmConfig: gamma must be > 0");
    if (!(eta > 0.0)) throw DimensionMismatch("AdmmConfig: eta must be > 0");
    if (!(epsilon > 0.0)) throw DimensionMismatch("AdmmConfig: epsilon must be > 0");
    if (max_iters <= 0) throw DimensionMismatch("AdmmConfig: max_iters must be positive");
}

double soft_threshold(double a, double nu) {
    if (a > nu) return a - nu;
    if (a < -nu) return a + nu;
    return 0.0;
}

Eigen::MatrixXd project_zero_diag(Eigen::MatrixXd m) {
    m.diagonal().setZero();
    return m;
}

Eigen::MatrixXd project_nonneg(Eigen::MatrixXd m) {
    return m.cwiseMax(0.0);
}

SparseRepr constrained_lasso(const Eigen::MatrixXd& x, const AdmmConfig& cfg,
                             const TraceSink& trace) {
    cfg.validate();
    const Eigen::Index n = x.cols();
    if (n < 2) throw DimensionMismatch("constrained_lasso: need at least two columns");
    for (Eigen::Index j = 0; j < n; ++j) {
        if (std::abs(x.col(j).norm() - 1.0) > 1e-6) {
            throw DimensionMismatch("constrained_lasso: columns must be unit-norm");
        }
    }

    const Eigen::MatrixXd gram = x.transpose() * x;
    Eigen::MatrixXd shifted = gram;
    shifted.diagonal().array() += cfg.eta;
    const Eigen::LLT<Eigen::MatrixXd> llt(shifted);
    if (llt.info() != Eigen::Success) {
        throw NumericalFailure("constrained_lasso: Cholesky factorization failed");
    }

    const double nu = cfg.gamma / cfg.eta;
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(n, n);

    SparseRepr out;
    double gap = std::numeric_limits<double>::infinity();
    int it = 0;
    while (it < cfg.max_iters) {
        ++it;
        z = llt.solve(gram - lambda + cfg.eta * v);
        v = (z + lambda / cfg.eta).unaryExpr([nu](double a) { return soft_threshold(a, nu); });
        v = project_zero_diag(project_nonneg(std::move(v)));
        lambda += cfg.eta * (z - v);
        gap = (z - v).cwiseAbs().maxCoeff();
        if (!std::isfinite(gap)) {
            throw NumericalFailure("constrained_lasso: non-finite iterate");
        }
        if (trace) {
            // objective of the projected iterate via the Gram identity
            Eigen::MatrixXd e = v;
            e.diagonal().array() -= 1.0;
            const double fit = 0.5 * (gram * e).cwiseProduct(e).sum();
            trace(it, gap, fit + cfg.gamma * v.lpNorm<1>());
        }
        if (gap < cfg.epsilon) {
            out.converged = true;
            break;
        }
    }
    out.coefficients = std::move(v);
    out.iterations = it;
    out.final_gap = gap;
    return out;
}

SparseRepr constrained_lasso(const FingerprintMatrix& x, const AdmmConfig& cfg,
                             const TraceSink& trace) {
    return constrained_lasso(x.data, cfg, trace);
}

double lasso_objective(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z, double gamma) {
    if (z.rows() != x.cols() || z.cols() != x.cols()) {
        throw DimensionMismatch("lasso_objective: shape mismatch");
    }
    return 0.5 * (x * z - x).squaredNorm() + gamma * z.lpNorm<1>();
}

}  // namespace spn
