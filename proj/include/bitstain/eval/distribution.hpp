#ifndef BITSTAIN_EVAL_DISTRIBUTION_HPP
#define BITSTAIN_EVAL_DISTRIBUTION_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "bitstain/core/errors.hpp"

namespace bitstain::eval {

// Externally extracted feature vectors, N x D row-major. The extractor
// itself is out of scope; sets arrive via CSV with a one-line header.
struct FeatureSet {
    int n = 0;
    int d = 0;
    std::string extractor;
    std::vector<double> rows;

    void validate() const;
    double at(int i, int j) const { return rows[static_cast<std::size_t>(i) * d + j]; }

    // Header line "N,D,extractor_tag", then N rows of D comma-separated
    // values. Parse failures name the file and line.
    static FeatureSet read_csv(const std::filesystem::path& path);
    void write_csv(const std::filesystem::path& path) const;
};

struct GaussianMoments {
    std::vector<double> mean;  // D
    std::vector<double> cov;   // D x D row-major
    int d = 0;
};

// Sample mean and covariance (N - 1 normalization).
GaussianMoments feature_moments(const FeatureSet& f);

// Frechet distance between Gaussian fits:
//   |mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2))
// with the matrix root taken by symmetric eigendecomposition of the
// symmetrized product, negative eigenvalues clamped to zero, and the final
// value clamped into [0, inf) after a -1e-6 sanity floor.
double fid_from_moments(const GaussianMoments& a, const GaussianMoments& b);
double fid(const FeatureSet& a, const FeatureSet& b);

// Unbiased squared MMD with polynomial kernel (x.y / D + 1)^3; within-set
// sums exclude the diagonal; single full-batch estimate.
double kid(const FeatureSet& a, const FeatureSet& b);

}  // namespace bitstain::eval

#endif
