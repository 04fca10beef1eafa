#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace reavae {

struct ModelConfig {
    int num_classes = 5;
    int style_dim = 64; // W
    int resolution = 64;

    // Style encoder: stem conv, `encoder_downs` stride-2 stages doubling the
    // width, `encoder_ups` nearest-upsampling stages halving it, then a conv to W.
    int encoder_base = 16;
    int encoder_downs = 2;
    int encoder_ups = 1;
    bool encoder_norm = true;

    // Generator: one ResBlk per entry, starting at gen_base_size and doubling.
    int gen_base_size = 4;
    std::vector<int> gen_channels = {64, 64, 64, 32, 16};
    bool gen_noise = true;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
    /// Use batch statistics instead of running statistics outside training.
    bool inference_batch_stats = false;

    // Discriminator and perceptual feature extractor.
    int disc_base = 32;
    int disc_scales = 2;
    std::vector<int> feature_channels = {16, 32, 64, 256};

    std::uint64_t init_seed = 1;

    static ModelConfig desk();
    static ModelConfig full();
    int encoder_feature_size() const;
    void validate() const;
};

struct LossConfig {
    double lambda_rec = 10.0;
    double lambda_ren = 25.0;
    double lambda_kld = 0.01;
    double lambda_adv = 1.0;
    int num_views = 4;
    /// Restrict the KLD sum to classes present in the layout.
    bool kld_present_only = false;
};

struct OptimConfig {
    double lr = 1e-4;
    double beta1 = 0.0;
    double beta2 = 0.999;
    int batch_size = 4;
    int iterations = 2000;
    int checkpoint_every = 500;
    int log_every = 50;
    std::uint64_t seed = 1;
};

struct DataConfig {
    /// Directory of tex_*.png / seg_*.png pairs; empty means synthetic data.
    std::string dir;
    int synthetic_samples = 8;
    std::uint64_t synthetic_seed = 7;
    std::string output_dir = "run";
    /// Optional pretrained SRN checkpoint bundled (frozen) into model checkpoints.
    std::string srn_checkpoint;
    /// Probability that a training sample gets a random RGB channel
    /// permutation / inversion.
    double color_augment = 0.5;
};

struct TrainConfig {
    ModelConfig model;
    LossConfig loss;
    OptimConfig optim;
    DataConfig data;

    static TrainConfig desk();
    static TrainConfig full();
    void validate() const;
};

/// INI with sections [model], [loss], [optim], [data]. Keys not present keep
/// the value of `base`; unknown keys are rejected.
TrainConfig load_train_config(const std::filesystem::path& path, const TrainConfig& base = TrainConfig::desk());
TrainConfig parse_train_config(const std::string& text, const TrainConfig& base = TrainConfig::desk());
std::string format_train_config(const TrainConfig& cfg);

nlohmann::json to_json(const ModelConfig& m);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

} // namespace reavae
