#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spn/errors.hpp"

namespace spn {

// Intensity raster with values in [0,1], one or three channels.
struct RawImage {
    std::vector<Eigen::MatrixXd> channels;

    static RawImage gray(Eigen::MatrixXd m);
    static RawImage rgb(Eigen::MatrixXd r, Eigen::MatrixXd g, Eigen::MatrixXd b);

    Eigen::Index height() const { return channels.empty() ? 0 : channels[0].rows(); }
    Eigen::Index width() const { return channels.empty() ? 0 : channels[0].cols(); }
    int num_channels() const { return static_cast<int>(channels.size()); }

    // Throws DimensionMismatch on channel shape disagreement or values
    // outside [0,1].
    void validate() const;

    // Top-left square crop of the given side.
    RawImage crop_top_left(Eigen::Index side) const;

    // 0.299/0.587/0.114 combination; identity for single-channel images.
    Eigen::MatrixXd luminance() const;
};

// Zero-mean, unit-norm flattened noise residual.
class Fingerprint {
public:
    // Validates the invariants: |sum| <= 1e-6*sqrt(d), |norm-1| <= 1e-6.
    static Fingerprint from_values(Eigen::VectorXd v);

    const Eigen::VectorXd& values() const { return values_; }
    Eigen::Index dim() const { return values_.rows(); }

private:
    explicit Fingerprint(Eigen::VectorXd v) : values_(std::move(v)) {}
    Eigen::VectorXd values_;
};

// Column-stacked fingerprints with per-column item ids.
struct FingerprintMatrix {
    Eigen::MatrixXd data;          // d x n
    std::vector<std::string> ids;  // n distinct ids

    Eigen::Index dim() const { return data.rows(); }
    Eigen::Index count() const { return data.cols(); }

    // Checks column invariants and id uniqueness.
    void validate() const;
};

using DenoiserHook = std::function<RawImage(const RawImage&)>;

// Default denoiser: per-channel separable Gaussian blur (5x5, sigma 1.0),
// kernel renormalized over the in-bounds support near borders.
RawImage gaussian_blur_denoiser(const RawImage& img);

// True iff strictly more than 75% of pixels, on the [0,255] grayscale
// scale, lie in [0,80].
bool is_dark_image(const RawImage& img);

// residual = image - denoiser(image), channel-wise, combined to one
// channel by luminance weighting. Caller is expected to have screened
// dark images. Denoiser exceptions propagate.
Eigen::MatrixXd extract_residual(const RawImage& img, const DenoiserHook& denoiser);

// Row-mean then column-mean subtraction, row-major flatten, global
// centering, l2 normalization. Throws DegenerateResidual when centering
// annihilates the residual.
Fingerprint normalize_residual(const Eigen::MatrixXd& residual);

// Cosine similarity; valid because fingerprints are zero-mean unit-norm.
double correlation(const Fingerprint& a, const Fingerprint& b);

// Full normalized correlation (mean-subtracted, norm-divided) for vectors
// with no normalization guarantee, e.g. centroids. Zero vectors after
// centering correlate as 0.
double normalized_correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Element-wise mean of the member columns; deliberately not re-normalized.
Eigen::VectorXd centroid(const Eigen::MatrixXd& members);
Eigen::VectorXd centroid(std::span<const Fingerprint> members);

// Synthetic camera population for the flat-field imaging model
// Y = Y0 + Y0*K + Theta with per-camera K and per-image Theta,
// clipped to [0,1]. d = side*side.
struct SynthCameraSet {
    int num_cameras = 5;
    int images_per_camera = 100;
    int side = 64;
    double k_variance = 0.001;
    double theta_variance = 0.1;
    double base_intensity = 0.9;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

struct SynthResult {
    FingerprintMatrix fingerprints;
    std::vector<int> labels;  // ground-truth camera index per column
};

// Deterministic given rng_seed.
SynthResult synthesize(const SynthCameraSet& cfg,
                       const DenoiserHook& denoiser = gaussian_blur_denoiser);

}  // namespace spn
