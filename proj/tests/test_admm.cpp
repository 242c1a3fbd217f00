#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "spn/admm.hpp"
#include "spn/stats.hpp"

using namespace spn;

TEST_CASE("soft threshold cases") {
    CHECK(soft_threshold(1.2, 0.5) == doctest::Approx(0.7));
    CHECK(soft_threshold(-0.3, 0.5) == 0.0);
    CHECK(soft_threshold(-1.2, 0.5) == doctest::Approx(-0.7));
    for (double x : {-3.0, -0.1, 0.0, 0.2, 7.5}) CHECK(soft_threshold(x, 0.0) == x);
}

TEST_CASE("projections") {
    Eigen::MatrixXd m(2, 2);
    m << 5.0, 2.0, -1.0, 3.0;

    const Eigen::MatrixXd zd = project_zero_diag(m);
    CHECK(zd(0, 0) == 0.0);
    CHECK(zd(1, 1) == 0.0);
    CHECK(zd(0, 1) == 2.0);
    CHECK(zd(1, 0) == -1.0);
    CHECK(project_zero_diag(zd) == zd);  // idempotent
    CHECK(project_zero_diag(Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);

    Eigen::MatrixXd nn(2, 2);
    nn << -1.0, 2.0, 3.0, -4.0;
    const Eigen::MatrixXd projected = project_nonneg(nn);
    CHECK(projected(0, 0) == 0.0);
    CHECK(projected(0, 1) == 2.0);
    CHECK(projected(1, 0) == 3.0);
    CHECK(projected(1, 1) == 0.0);
    CHECK(project_nonneg(projected) == projected);
    CHECK(project_nonneg(Eigen::MatrixXd::Constant(3, 3, -2.0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("config validation") {
    AdmmConfig cfg;
    CHECK_THROWS(cfg.validate());  // gamma unset
    cfg.gamma = 0.1;
    CHECK_NOTHROW(cfg.validate());
    cfg.eta = 0.0;
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("two identical columns reconstruct each other with weight 1 - gamma") {
    const Eigen::VectorXd x = oracle::random_unit_columns(64, 1, 12).col(0);
    Eigen::MatrixXd data(64, 2);
    data.col(0) = x;
    data.col(1) = x;

    AdmmConfig cfg;
    cfg.gamma = 0.1;
    cfg.epsilon = 1e-8;
    cfg.max_iters = 10000;
    const SparseRepr repr = constrained_lasso(data, cfg);
    CHECK(repr.converged);
    // scalar oracle: minimize 0.5*(z-1)^2 + gamma*z over z >= 0 gives 1 - gamma
    CHECK(repr.coefficients(0, 1) == doctest::Approx(1.0 - cfg.gamma).epsilon(1e-4));
    CHECK(repr.coefficients(1, 0) == doctest::Approx(1.0 - cfg.gamma).epsilon(1e-4));
    CHECK(repr.coefficients(0, 0) == 0.0);
    CHECK(repr.coefficients(1, 1) == 0.0);
}

TEST_CASE("large gamma collapses the solution to zero") {
    const Eigen::MatrixXd x = oracle::random_unit_columns(128, 8, 21);
    const Eigen::MatrixXd gram = x.transpose() * x;
    double max_offdiag = 0.0;
    for (Eigen::Index i = 0; i < 8; ++i) {
        for (Eigen::Index j = 0; j < 8; ++j) {
            if (i != j) max_offdiag = std::max(max_offdiag, std::abs(gram(i, j)));
        }
    }
    AdmmConfig cfg;
    cfg.gamma = max_offdiag * 1.01;
    cfg.epsilon = 1e-8;
    cfg.max_iters = 5000;
    REQUIRE(oracle::zero_solution_certified(x, cfg.gamma));
    const SparseRepr repr = constrained_lasso(x, cfg);
    CHECK(repr.coefficients.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("objective matches an independent proximal-gradient oracle") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        const Eigen::MatrixXd x = oracle::random_unit_columns(256, 10, seed);
        AdmmConfig cfg;
        cfg.gamma = 0.05;
        cfg.epsilon = 1e-8;
        cfg.max_iters = 20000;
        const SparseRepr repr = constrained_lasso(x, cfg);
        const Eigen::MatrixXd reference = oracle::ista_lasso(x, cfg.gamma);
        const double ours = lasso_objective(x, repr.coefficients, cfg.gamma);
        const double ref = lasso_objective(x, reference, cfg.gamma);
        CHECK(std::abs(ours - ref) < 1e-4);
    }
}

TEST_CASE("objective value basics") {
    const Eigen::MatrixXd x = oracle::random_unit_columns(64, 6, 30);
    // Z = 0 leaves the full reconstruction error: n/2 for unit-norm columns
    CHECK(lasso_objective(x, Eigen::MatrixXd::Zero(6, 6), 0.7) ==
          doctest::Approx(3.0).epsilon(1e-12));
    CHECK_THROWS_AS(lasso_objective(x, Eigen::MatrixXd::Zero(5, 5), 0.1), DimensionMismatch);
}

TEST_CASE("returned matrix satisfies the constraints exactly") {
    const Eigen::MatrixXd x = oracle::random_unit_columns(128, 12, 40);
    AdmmConfig cfg;
    cfg.gamma = 0.02;
    const SparseRepr repr = constrained_lasso(x, cfg);
    CHECK(repr.coefficients.diagonal().cwiseAbs().maxCoeff() == 0.0);
    CHECK(repr.coefficients.minCoeff() >= 0.0);
    CHECK(lasso_objective(x, repr.coefficients, cfg.gamma) <=
          lasso_objective(x, Eigen::MatrixXd::Zero(12, 12), cfg.gamma));
}

TEST_CASE("gap trend: 10-iteration window means do not increase") {
    const Eigen::MatrixXd x = oracle::random_unit_columns(128, 30, 50);
    AdmmConfig cfg;
    cfg.gamma = 0.02;
    cfg.epsilon = 1e-14;  // force a long run
    cfg.max_iters = 200;
    std::vector<double> gaps;
    constrained_lasso(x, cfg, [&](int, double gap, double) { gaps.push_back(gap); });
    REQUIRE(gaps.size() >= 30);  // may stop early at machine precision
    std::vector<double> windows;
    for (std::size_t start = 0; start + 10 <= gaps.size(); start += 10) {
        double acc = 0.0;
        for (std::size_t i = start; i < start + 10; ++i) acc += gaps[i];
        windows.push_back(acc / 10.0);
    }
    for (std::size_t w = 1; w < windows.size(); ++w) {
        CHECK(windows[w] <= windows[w - 1] + 1e-12);
    }
}

TEST_CASE("solution is equivariant under column permutation") {
    const Eigen::MatrixXd x = oracle::random_unit_columns(96, 9, 60);
    AdmmConfig cfg;
    cfg.gamma = 0.03;
    cfg.epsilon = 1e-10;
    cfg.max_iters = 20000;
    const SparseRepr base = constrained_lasso(x, cfg);

    const std::vector<int> perm = shuffled_indices(9, 61);
    Eigen::MatrixXd permuted(96, 9);
    for (int j = 0; j < 9; ++j) permuted.col(j) = x.col(perm[static_cast<std::size_t>(j)]);
    const SparseRepr shuffled = constrained_lasso(permuted, cfg);

    for (int i = 0; i < 9; ++i) {
        for (int j = 0; j < 9; ++j) {
            CHECK(shuffled.coefficients(i, j) ==
                  doctest::Approx(base.coefficients(perm[static_cast<std::size_t>(i)],
                                                    perm[static_cast<std::size_t>(j)]))
                      .epsilon(1e-6));
        }
    }
}

TEST_CASE("coefficients order by angle to the projection") {
    // three points in the xy-plane: the reconstruction of y prefers the
    // column at the smaller angle
    const double a1 = 20.0 * std::numbers::pi / 180.0;
    const double a2 = 50.0 * std::numbers::pi / 180.0;
    Eigen::MatrixXd x(3, 3);
    x.col(0) << 1.0, 0.0, 0.0;                          // y itself
    x.col(1) << std::cos(a1), std::sin(a1), 0.0;
    x.col(2) << std::cos(a2), -std::sin(a2), 0.0;

    AdmmConfig cfg;
    cfg.gamma = 0.01;
    cfg.epsilon = 1e-10;
    cfg.max_iters = 50000;
    const SparseRepr repr = constrained_lasso(x, cfg);
    const double z1 = repr.coefficients(1, 0);
    const double z2 = repr.coefficients(2, 0);
    CHECK(z1 > 0.0);
    CHECK(z2 > 0.0);
    CHECK(z1 > z2);
}

TEST_CASE("solver rejects bad inputs and reports non-convergence") {
    AdmmConfig cfg;
    cfg.gamma = 0.1;
    CHECK_THROWS_AS(constrained_lasso(Eigen::MatrixXd::Random(8, 1), cfg), DimensionMismatch);
    CHECK_THROWS_AS(constrained_lasso(Eigen::MatrixXd::Constant(8, 4, 0.5), cfg),
                    DimensionMismatch);  // not unit-norm

    const Eigen::MatrixXd x = oracle::random_unit_columns(64, 6, 70);
    cfg.epsilon = 1e-15;
    cfg.max_iters = 3;
    const SparseRepr repr = constrained_lasso(x, cfg);
    CHECK_FALSE(repr.converged);
    CHECK(repr.iterations == 3);
    CHECK(repr.final_gap >= 1e-15);
}

TEST_CASE("trace reports iteration, gap and objective") {
    const Eigen::MatrixXd x = oracle::random_unit_columns(64, 5, 80);
    AdmmConfig cfg;
    cfg.gamma = 0.05;
    std::vector<int> iters;
    std::vector<double> objectives;
    const SparseRepr repr = constrained_lasso(x, cfg, [&](int it, double, double obj) {
        iters.push_back(it);
        objectives.push_back(obj);
    });
    REQUIRE(iters.size() == static_cast<std::size_t>(repr.iterations));
    CHECK(iters.front() == 1);
    CHECK(iters.back() == repr.iterations);
    CHECK(objectives.back() ==
          doctest::Approx(lasso_objective(x, repr.coefficients, cfg.gamma)).epsilon(1e-9));
}
