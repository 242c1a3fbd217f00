#include "spn/fingerprint.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "spn/stats.hpp"

namespace spn {

namespace {

constexpr double kDarkPixelCutoff = 80.0 / 255.0 + 1e-12;
constexpr double kDegenerateNorm = 1e-12;

Eigen::VectorXd blur_kernel5(double sigma) {
    Eigen::VectorXd w(5);
    for (int i = 0; i < 5; ++i) {
        const double x = i - 2.0;
        w[i] = std::exp(-x * x / (2.0 * sigma * sigma));
    }
    return w / w.sum();
}

// 5-tap blur along columns; near the border the kernel is renormalized
// over the rows that exist.
Eigen::MatrixXd blur_vertical(const Eigen::MatrixXd& m, const Eigen::VectorXd& kernel) {
    const Eigen::Index rows = m.rows();
    Eigen::MatrixXd out(rows, m.cols());
    for (Eigen::Index i = 0; i < rows; ++i) {
        const Eigen::Index lo = std::max<Eigen::Index>(0, i - 2);
        const Eigen::Index hi = std::min<Eigen::Index>(rows - 1, i + 2);
        double wsum = 0.0;
        for (Eigen::Index r = lo; r <= hi; ++r) wsum += kernel[r - i + 2];
        Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(m.cols());
        for (Eigen::Index r = lo; r <= hi; ++r) acc += (kernel[r - i + 2] / wsum) * m.row(r);
        out.row(i) = acc;
    }
    return out;
}

Eigen::MatrixXd blur2d(const Eigen::MatrixXd& m, const Eigen::VectorXd& kernel) {
    return blur_vertical(blur_vertical(m, kernel).transpose(), kernel).transpose();
}

}  // namespace

RawImage RawImage::gray(Eigen::MatrixXd m) {
    RawImage img;
    img.channels.push_back(std::move(m));
    return img;
}

RawImage RawImage::rgb(Eigen::MatrixXd r, Eigen::MatrixXd g, Eigen::MatrixXd b) {
    RawImage img;
    img.channels.push_back(std::move(r));
    img.channels.push_back(std::move(g));
    img.channels.push_back(std::move(b));
    return img;
}

void RawImage::validate() const {
    if (channels.size() != 1 && channels.size() != 3) {
        throw DimensionMismatch("RawImage: expected 1 or 3 channels");
    }
    for (const auto& ch : channels) {
        if (ch.rows() != height() || ch.cols() != width() || ch.size() == 0) {
            throw DimensionMismatch("RawImage: inconsistent channel shapes");
        }
        if (ch.minCoeff() < 0.0 || ch.maxCoeff() > 1.0) {
            throw DimensionMismatch("RawImage: pixel values outside [0,1]");
        }
    }
}

RawImage RawImage::crop_top_left(Eigen::Index side) const {
    if (side <= 0 || side > height() || side > width()) {
        throw DimensionMismatch("crop_top_left: crop side exceeds image");
    }
    RawImage out;
    for (const auto& ch : channels) out.channels.push_back(ch.topLeftCorner(side, side));
    return out;
}

Eigen::MatrixXd RawImage::luminance() const {
    if (channels.size() == 1) return channels[0];
    return 0.299 * channels[0] + 0.587 * channels[1] + 0.114 * channels[2];
}

Fingerprint Fingerprint::from_values(Eigen::VectorXd v) {
    const auto d = v.rows();
    if (d == 0) throw DimensionMismatch("Fingerprint: empty vector");
    const double sum = v.sum();
    if (std::abs(sum) > 1e-6 * std::sqrt(static_cast<double>(d))) {
        throw DimensionMismatch("Fingerprint: not zero-mean");
    }
    if (std::abs(v.norm() - 1.0) > 1e-6) {
        throw DimensionMismatch("Fingerprint: not unit-norm");
    }
    return Fingerprint(std::move(v));
}

void FingerprintMatrix::validate() const {
    if (static_cast<std::size_t>(data.cols()) != ids.size()) {
        throw DimensionMismatch("FingerprintMatrix: id count != column count");
    }
    const double tol = 1e-6 * std::sqrt(static_cast<double>(data.rows()));
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
        if (std::abs(data.col(j).sum()) > tol || std::abs(data.col(j).norm() - 1.0) > 1e-6) {
            throw DimensionMismatch("FingerprintMatrix: column violates fingerprint invariants");
        }
    }
    std::vector<std::string> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw DimensionMismatch("FingerprintMatrix: duplicate ids");
    }
}

RawImage gaussian_blur_denoiser(const RawImage& img) {
    static const Eigen::VectorXd kernel = blur_kernel5(1.0);
    RawImage out;
    for (const auto& ch : img.channels) out.channels.push_back(blur2d(ch, kernel));
    return out;
}

bool is_dark_image(const RawImage& img) {
    img.validate();
    const Eigen::MatrixXd gray = img.luminance();
    const auto dark = (gray.array() <= kDarkPixelCutoff).count();
    return static_cast<double>(dark) > 0.75 * static_cast<double>(gray.size());
}

Eigen::MatrixXd extract_residual(const RawImage& img, const DenoiserHook& denoiser) {
    img.validate();
    const RawImage denoised = denoiser(img);
    if (denoised.num_channels() != img.num_channels() || denoised.height() != img.height() ||
        denoised.width() != img.width()) {
        throw DimensionMismatch("extract_residual: denoiser changed image shape");
    }
    RawImage residual;
    for (int c = 0; c < img.num_channels(); ++c) {
        residual.channels.push_back(img.channels[static_cast<std::size_t>(c)] -
                                    denoised.channels[static_cast<std::size_t>(c)]);
    }
    return residual.luminance();
}

Fingerprint normalize_residual(const Eigen::MatrixXd& residual) {
    if (residual.size() == 0) throw DimensionMismatch("normalize_residual: empty residual");
    if (!residual.allFinite()) throw NumericalFailure("normalize_residual: non-finite residual");

    Eigen::MatrixXd r = residual;
    r.colwise() -= r.rowwise().mean().eval();
    r.rowwise() -= r.colwise().mean().eval();

    // row-major flatten
    Eigen::MatrixXd rt = r.transpose();
    Eigen::VectorXd v = Eigen::Map<Eigen::VectorXd>(rt.data(), rt.size());
    v.array() -= v.mean();

    const double nrm = v.norm();
    if (nrm < kDegenerateNorm) {
        throw DegenerateResidual("normalize_residual: residual vanished after centering");
    }
    v /= nrm;
    return Fingerprint::from_values(std::move(v));
}

double correlation(const Fingerprint& a, const Fingerprint& b) {
    if (a.dim() != b.dim()) throw DimensionMismatch("correlation: dimension mismatch");
    return a.values().dot(b.values());
}

double normalized_correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.rows() != b.rows()) throw DimensionMismatch("normalized_correlation: dimension mismatch");
    const Eigen::VectorXd ac = a.array() - a.mean();
    const Eigen::VectorXd bc = b.array() - b.mean();
    const double na = ac.norm();
    const double nb = bc.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return ac.dot(bc) / (na * nb);
}

Eigen::VectorXd centroid(const Eigen::MatrixXd& members) {
    if (members.cols() == 0) throw DimensionMismatch("centroid: empty member list");
    return members.rowwise().mean();
}

Eigen::VectorXd centroid(std::span<const Fingerprint> members) {
    if (members.empty()) throw DimensionMismatch("centroid: empty member list");
    Eigen::VectorXd acc = members[0].values();
    for (std::size_t i = 1; i < members.size(); ++i) {
        if (members[i].dim() != acc.rows()) throw DimensionMismatch("centroid: mixed dimensions");
        acc += members[i].values();
    }
    return acc / static_cast<double>(members.size());
}

void SynthCameraSet::validate() const {
    if (num_cameras <= 0 || images_per_camera <= 0 || side <= 0) {
        throw DimensionMismatch("SynthCameraSet: counts must be positive");
    }
    if (k_variance <= 0.0 || theta_variance <= 0.0) {
        throw DimensionMismatch("SynthCameraSet: variances must be positive");
    }
    if (base_intensity < 0.0 || base_intensity > 1.0) {
        throw DimensionMismatch("SynthCameraSet: base intensity outside [0,1]");
    }
}

SynthResult synthesize(const SynthCameraSet& cfg, const DenoiserHook& denoiser) {
    cfg.validate();
    GaussianSampler rng(cfg.rng_seed);
    const double k_std = std::sqrt(cfg.k_variance);
    const double theta_std = std::sqrt(cfg.theta_variance);
    const int n = cfg.num_cameras * cfg.images_per_camera;
    const Eigen::Index d = static_cast<Eigen::Index>(cfg.side) * cfg.side;

    SynthResult out;
    out.fingerprints.data.resize(d, n);
    out.fingerprints.ids.reserve(static_cast<std::size_t>(n));
    out.labels.reserve(static_cast<std::size_t>(n));

    // draws are row-major per matrix, camera pattern first, then each
    // image's shot noise, so output is reproducible bit for bit
    auto fill_rowmajor = [&](Eigen::MatrixXd& m, double stddev) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = stddev * rng.next();
        }
    };

    int col = 0;
    Eigen::MatrixXd pattern(cfg.side, cfg.side);
    Eigen::MatrixXd shot(cfg.side, cfg.side);
    for (int cam = 0; cam < cfg.num_cameras; ++cam) {
        fill_rowmajor(pattern, k_std);
        for (int i = 0; i < cfg.images_per_camera; ++i) {
            fill_rowmajor(shot, theta_std);
            Eigen::MatrixXd y =
                (cfg.base_intensity + cfg.base_intensity * pattern.array() + shot.array())
                    .cwiseMax(0.0)
                    .cwiseMin(1.0);
            const Eigen::MatrixXd res = extract_residual(RawImage::gray(std::move(y)), denoiser);
            out.fingerprints.data.col(col) = normalize_residual(res).values();
            out.fingerprints.ids.push_back("cam" + std::to_string(cam) + "_img" +
                                           std::to_string(i));
            out.labels.push_back(cam);
            ++col;
        }
    }
    return out;
}

}  // namespace spn
