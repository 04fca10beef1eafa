#pragma once

#include <optional>

#include "reavae/adversary.hpp"
#include "reavae/metrics.hpp"

namespace reavae {

struct MetricsReport {
    /// Mean over index-matched pairs; absent when the sets cannot be paired.
    std::optional<double> psnr, ssim;
    double fid = 0, kid = 0;
    int n_real = 0, n_fake = 0;
    std::string embedder;
};

nlohmann::json to_json(const MetricsReport& r);

/// Every *.png in the directory, sorted by file name.
std::vector<TextureMap> load_texture_dir(const std::filesystem::path& dir);

/// N×D embeddings (global-average-pooled last stage) of equally sized textures.
Eigen::MatrixXd embed_textures(const std::vector<TextureMap>& textures, const FeatureExtractor<float>& fx);

/// Identifier of the embedder built from `channels` and feature_extractor_seed.
std::string embedder_name(const std::vector<int>& channels);

/// PSNR/SSIM on pairs (when both sets have the same count and sizes), FID/KID
/// on embeddings of the frozen feature extractor with `channels`.
MetricsReport compare_texture_sets(const std::vector<TextureMap>& real, const std::vector<TextureMap>& fake,
                                   const std::vector<int>& channels = ModelConfig{}.feature_channels);

} // namespace reavae
