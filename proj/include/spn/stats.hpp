#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace spn {

// Inverse standard-normal CDF. Returns -inf at p=0 and +inf at p=1;
// throws std::invalid_argument outside [0,1]. Absolute error < 1e-14.
double normal_quantile(double p);

// Upper-tail quantile: the t with P(N(0,1) > t) = p.
double upper_tail_quantile(double p);

// Deterministic N(0,1) stream: Box-Muller over mt19937_64 with an explicit
// uint64 -> double mapping, so output is identical across platforms and
// standard-library versions.
class GaussianSampler {
public:
    explicit GaussianSampler(std::uint64_t seed) : rng_(seed) {}

    // uniform in [0,1), 53-bit resolution
    double uniform();
    double next();

private:
    std::mt19937_64 rng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Derives an independent stream seed from a run seed, a phase tag and an
// optional index (splitmix64 over the mixed words).
std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag, std::uint64_t k = 0);

// Fisher-Yates permutation of 0..n-1 with a platform-independent draw.
std::vector<int> shuffled_indices(int n, std::uint64_t seed);

}  // namespace spn
