#pragma once

#include <Eigen/Dense>

#include "reavae/core_data.hpp"

namespace reavae {

inline constexpr double psnr_cap = 100.0;

/// 10·log10(1/MSE) over all channels, capped at psnr_cap for identical images.
double psnr(const TextureMap& a, const TextureMap& b);

/// Mean SSIM of the channel-mean luminance with an 11×11 Gaussian window
/// (σ = 1.5) over valid positions only; C1 = 0.01², C2 = 0.03².
double ssim(const TextureMap& a, const TextureMap& b);

/// Rows are samples. Covariance uses the n−1 normalisation.
struct FeatureMoments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};
FeatureMoments feature_moments(const Eigen::MatrixXd& features);

/// ‖μ₁ − μ₂‖² + tr(Σ₁ + Σ₂ − 2(Σ₁^½ Σ₂ Σ₁^½)^½).
double frechet_distance(const FeatureMoments& a, const FeatureMoments& b);
double fid(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake);

struct KidOptions {
    /// Samples per set in each block; 0 uses every sample in one block.
    int block_size = 0;
    int blocks = 1;
    std::uint64_t seed = 0;
};

/// Unbiased MMD² with k(x, y) = (xᵀy / d + 1)³, averaged over blocks drawn
/// without replacement. With equal set sizes the cross term skips i = j.
double kid(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake, const KidOptions& opts = {});

/// Projects onto the two leading principal axes of the features.
Eigen::MatrixXd pca_2d(const Eigen::MatrixXd& features);
/// Area of the 2σ covariance ellipse of N×2 points: 4π·sqrt(det Σ).
double diversity_area(const Eigen::MatrixXd& points2d);
/// diversity_area of the PCA projection.
double embedding_diversity_area(const Eigen::MatrixXd& features);

} // namespace reavae
