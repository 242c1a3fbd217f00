#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "spn/fingerprint.hpp"
#include "spn/stats.hpp"

using namespace spn;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    GaussianSampler rng(seed);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.next();
    }
    return m;
}

}  // namespace

TEST_CASE("dark image detection") {
    const Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(16, 16);
    CHECK(is_dark_image(RawImage::gray(zeros)));

    const Eigen::MatrixXd white = Eigen::MatrixXd::Constant(16, 16, 1.0);
    CHECK_FALSE(is_dark_image(RawImage::gray(white)));

    // exactly 75% at 40/255 and 25% at 200/255: threshold is strict
    Eigen::MatrixXd mixed = Eigen::MatrixXd::Constant(16, 16, 40.0 / 255.0);
    for (int i = 0; i < 64; ++i) mixed(i / 16, i % 16) = 200.0 / 255.0;
    CHECK_FALSE(is_dark_image(RawImage::gray(mixed)));

    // one more dark pixel crosses it
    mixed(3, 15) = 40.0 / 255.0;
    CHECK(is_dark_image(RawImage::gray(mixed)));
}

TEST_CASE("residual extraction basics") {
    // identity denoiser on a constant image: zero residual
    const auto identity = [](const RawImage& img) { return img; };
    const RawImage flat = RawImage::gray(Eigen::MatrixXd::Constant(8, 8, 0.5));
    CHECK(extract_residual(flat, identity).cwiseAbs().maxCoeff() == 0.0);

    // denoiser that recovers the clean part exactly: residual equals the noise
    const Eigen::MatrixXd clean = Eigen::MatrixXd::Constant(8, 8, 0.5);
    Eigen::MatrixXd noise = 0.01 * random_matrix(8, 8, 3);
    RawImage noisy = RawImage::gray((clean + noise).cwiseMax(0.0).cwiseMin(1.0));
    noise = noisy.channels[0] - clean;  // clipping-adjusted noise
    const auto to_clean = [&](const RawImage&) { return RawImage::gray(clean); };
    CHECK((extract_residual(noisy, to_clean) - noise).cwiseAbs().maxCoeff() < 1e-15);

    const auto failing = [](const RawImage&) -> RawImage {
        throw NumericalFailure("denoiser blew up");
    };
    CHECK_THROWS_AS(extract_residual(flat, failing), NumericalFailure);
}

TEST_CASE("default denoiser raises correlation with the true pattern") {
    // Monte Carlo: on an image with smooth content, the residual tracks K
    // better than the raw image, whose energy is dominated by the scene
    int wins = 0;
    const int trials = 100;
    for (int t = 0; t < trials; ++t) {
        GaussianSampler rng(mix_seed(99, "mc", static_cast<std::uint64_t>(t)));
        Eigen::MatrixXd pattern(64, 64);
        Eigen::MatrixXd shot(64, 64);
        Eigen::MatrixXd scene(64, 64);
        for (Eigen::Index r = 0; r < 64; ++r) {
            for (Eigen::Index c = 0; c < 64; ++c) {
                pattern(r, c) = std::sqrt(0.001) * rng.next();
                shot(r, c) = std::sqrt(0.01) * rng.next();
                scene(r, c) = 0.3 + 0.4 * static_cast<double>(r) / 63.0 +
                              0.2 * static_cast<double>(c) / 63.0;
            }
        }
        const Eigen::MatrixXd y =
            (scene.array() + scene.array() * pattern.array() + shot.array())
                .cwiseMax(0.0)
                .cwiseMin(1.0);
        const Eigen::MatrixXd residual =
            extract_residual(RawImage::gray(y), gaussian_blur_denoiser);

        const Eigen::Map<const Eigen::VectorXd> k_flat(pattern.data(), pattern.size());
        const Eigen::Map<const Eigen::VectorXd> y_flat(y.data(), y.size());
        const Eigen::Map<const Eigen::VectorXd> r_flat(residual.data(), residual.size());
        const double corr_residual = normalized_correlation(r_flat, k_flat);
        const double corr_raw = normalized_correlation(y_flat, k_flat);
        if (corr_residual > corr_raw) ++wins;
    }
    CHECK(wins >= 95);
}

TEST_CASE("normalization") {
    SUBCASE("constant residual is degenerate") {
        CHECK_THROWS_AS(normalize_residual(Eigen::MatrixXd::Constant(6, 6, 3.0)),
                        DegenerateResidual);
    }
    SUBCASE("pure row pattern is degenerate") {
        GaussianSampler rng(4);
        Eigen::VectorXd row_pattern(8);
        for (int i = 0; i < 8; ++i) row_pattern[i] = rng.next();
        const Eigen::MatrixXd residual = row_pattern * Eigen::RowVectorXd::Ones(8);
        CHECK_THROWS_AS(normalize_residual(residual), DegenerateResidual);
    }
    SUBCASE("random residual: recompute the pipeline directly") {
        const Eigen::MatrixXd residual = random_matrix(8, 8, 17);
        const Fingerprint fp = normalize_residual(residual);
        CHECK(std::abs(fp.values().mean()) <= 1e-12);
        CHECK(fp.values().norm() == doctest::Approx(1.0).epsilon(1e-12));

        // independent recomputation with plain loops
        Eigen::MatrixXd r = residual;
        for (int i = 0; i < 8; ++i) r.row(i).array() -= r.row(i).mean();
        for (int j = 0; j < 8; ++j) r.col(j).array() -= r.col(j).mean();
        Eigen::VectorXd v(64);
        int idx = 0;
        for (int i = 0; i < 8; ++i) {
            for (int j = 0; j < 8; ++j) v[idx++] = r(i, j);
        }
        v.array() -= v.mean();
        v /= v.norm();
        CHECK((fp.values() - v).cwiseAbs().maxCoeff() < 1e-14);
    }
    SUBCASE("idempotent on its own output") {
        const Eigen::MatrixXd residual = random_matrix(8, 8, 23);
        const Fingerprint once = normalize_residual(residual);
        Eigen::MatrixXd reshaped(8, 8);
        int idx = 0;
        for (int i = 0; i < 8; ++i) {
            for (int j = 0; j < 8; ++j) reshaped(i, j) = once.values()[idx++];
        }
        const Fingerprint twice = normalize_residual(reshaped);
        CHECK((once.values() - twice.values()).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("correlation") {
    const Eigen::MatrixXd cols = oracle::random_unit_columns(4096, 2, 5);
    const Fingerprint a = Fingerprint::from_values(cols.col(0));
    const Fingerprint b = Fingerprint::from_values(cols.col(1));
    const Fingerprint neg = Fingerprint::from_values((-cols.col(0)).eval());

    CHECK(correlation(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(correlation(a, neg) == doctest::Approx(-1.0).epsilon(1e-12));

    const Fingerprint short_fp =
        Fingerprint::from_values(oracle::random_unit_columns(16, 1, 6).col(0));
    CHECK_THROWS_AS(correlation(a, short_fp), DimensionMismatch);

    SUBCASE("independent pairs stay within the CLT envelope") {
        int inside = 0;
        const int pairs = 200;
        for (int t = 0; t < pairs; ++t) {
            const Eigen::MatrixXd pair =
                oracle::random_unit_columns(4096, 2, 1000 + static_cast<std::uint64_t>(t));
            const double rho = pair.col(0).dot(pair.col(1));
            if (std::abs(rho) < 5.0 / 64.0) ++inside;
        }
        CHECK(inside == pairs);
    }

    SUBCASE("invariant under a common permutation") {
        const auto perm = shuffled_indices(4096, 9);
        Eigen::VectorXd pa(4096);
        Eigen::VectorXd pb(4096);
        for (int i = 0; i < 4096; ++i) {
            pa[i] = a.values()[perm[static_cast<std::size_t>(i)]];
            pb[i] = b.values()[perm[static_cast<std::size_t>(i)]];
        }
        CHECK(correlation(Fingerprint::from_values(pa), Fingerprint::from_values(pb)) ==
              doctest::Approx(correlation(a, b)).epsilon(1e-12));
    }
}

TEST_CASE("synthesize") {
    SynthCameraSet cfg;
    cfg.rng_seed = 2024;

    SUBCASE("paper-shaped set: 500 fingerprints over 5 cameras") {
        const SynthResult r = synthesize(cfg);
        CHECK(r.fingerprints.count() == 500);
        CHECK(r.fingerprints.dim() == 4096);
        CHECK(r.labels.size() == 500);
        CHECK(*std::max_element(r.labels.begin(), r.labels.end()) == 4);
        r.fingerprints.validate();
    }
    SUBCASE("one image per camera") {
        cfg.num_cameras = 7;
        cfg.images_per_camera = 1;
        const SynthResult r = synthesize(cfg);
        CHECK(r.fingerprints.count() == 7);
        for (int i = 0; i < 7; ++i) CHECK(r.labels[static_cast<std::size_t>(i)] == i);
    }
    SUBCASE("same seed reproduces bit-identical data") {
        cfg.num_cameras = 2;
        cfg.images_per_camera = 3;
        cfg.side = 16;
        const SynthResult r1 = synthesize(cfg);
        const SynthResult r2 = synthesize(cfg);
        CHECK(r1.fingerprints.data == r2.fingerprints.data);
        CHECK(r1.fingerprints.ids == r2.fingerprints.ids);
    }
    SUBCASE("vanishing shot noise separates cameras perfectly") {
        cfg.num_cameras = 3;
        cfg.images_per_camera = 4;
        cfg.side = 32;
        cfg.theta_variance = 1e-12;
        const SynthResult r = synthesize(cfg);
        for (int i = 0; i < 12; ++i) {
            for (int j = i + 1; j < 12; ++j) {
                const double rho = r.fingerprints.data.col(i).dot(r.fingerprints.data.col(j));
                if (r.labels[static_cast<std::size_t>(i)] ==
                    r.labels[static_cast<std::size_t>(j)]) {
                    CHECK(rho > 0.999);
                } else {
                    CHECK(std::abs(rho) < 0.2);
                }
            }
        }
    }
}

TEST_CASE("centroid") {
    const Eigen::MatrixXd cols = oracle::random_unit_columns(256, 2, 77);
    const Fingerprint a = Fingerprint::from_values(cols.col(0));
    const Fingerprint na = Fingerprint::from_values((-cols.col(0)).eval());

    SUBCASE("single member is itself") {
        const std::vector<Fingerprint> one{a};
        CHECK((centroid(one) - a.values()).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("a and -a cancel") {
        const std::vector<Fingerprint> pair{a, na};
        CHECK(centroid(pair).cwiseAbs().maxCoeff() < 1e-15);
    }
    SUBCASE("empty input throws") {
        CHECK_THROWS_AS(centroid(Eigen::MatrixXd(256, 0)), DimensionMismatch);
    }
    SUBCASE("averaging same-camera members sharpens the pattern estimate") {
        SynthCameraSet cfg;
        cfg.num_cameras = 1;
        cfg.images_per_camera = 50;
        cfg.side = 64;
        cfg.theta_variance = 0.01;
        cfg.rng_seed = 31;
        const SynthResult r = synthesize(cfg);

        // reconstruct the true pattern the same way the generator drew it
        GaussianSampler rng(cfg.rng_seed);
        Eigen::MatrixXd pattern(64, 64);
        for (Eigen::Index row = 0; row < 64; ++row) {
            for (Eigen::Index col = 0; col < 64; ++col) {
                pattern(row, col) = std::sqrt(cfg.k_variance) * rng.next();
            }
        }
        Eigen::VectorXd k_flat(4096);
        int idx = 0;
        for (Eigen::Index row = 0; row < 64; ++row) {
            for (Eigen::Index col = 0; col < 64; ++col) k_flat[idx++] = pattern(row, col);
        }

        const Eigen::VectorXd mean_fp = centroid(r.fingerprints.data);
        const double centroid_corr = normalized_correlation(mean_fp, k_flat);
        double best_single = -1.0;
        for (int j = 0; j < 50; ++j) {
            best_single = std::max(
                best_single,
                normalized_correlation(r.fingerprints.data.col(j).eval(), k_flat));
        }
        CHECK(centroid_corr > best_single);
    }
}
