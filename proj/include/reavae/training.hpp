#pragma once

#include <functional>
#include <memory>
#include <stdexcept>

#include "reavae/core_data.hpp"
#include "reavae/model.hpp"
#include "reavae/renderer.hpp"
#include "reavae/super_resolution.hpp"

namespace reavae {

enum class TrainMode { reconstruction, vae };
std::string to_string(TrainMode m);
TrainMode train_mode_from_string(const std::string& s);

/// Even iterations reconstruct through the raw style matrix, odd ones run the
/// full VAE path.
constexpr TrainMode mode_for_iteration(std::int64_t it) noexcept
{
    return it % 2 == 0 ? TrainMode::reconstruction : TrainMode::vae;
}

/// λ_adv·l_adv + λ_rec·l_rec + λ_ren·l_ren + λ_KLD·l_kld; the KLD term is
/// dropped in reconstruction mode. Throws naming the first non-finite input.
double total_loss(double l_adv, double l_rec, double l_ren, double l_kld, const LossConfig& cfg,
                  TrainMode mode = TrainMode::vae);

struct LossRecord {
    std::int64_t iteration = 0;
    TrainMode mode = TrainMode::reconstruction;
    double l_adv = 0, l_rec = 0, l_ren = 0, l_kld = 0, l_f = 0;
    // Diagnostics outside the CSV.
    double l_d = 0, l_perceptual = 0, l_fm = 0;
    bool operator==(const LossRecord&) const = default;
};

inline constexpr const char* loss_csv_header = "iter,mode,l_adv,l_rec,l_ren,l_kld,l_f";
std::string loss_csv_row(const LossRecord& r);

/// Paired training samples plus the view maps shared by all of them.
struct Dataset {
    std::vector<TextureMap> textures;
    std::vector<SegmentationMap> layouts;
    std::vector<ViewUVMap> views;

    std::size_t size() const noexcept { return textures.size(); }
    /// Non-empty, paired, every map at `resolution` and every label below `num_classes`.
    void validate(int num_classes, int resolution) const;
};

/// Synthetic data when cfg.data.dir is empty; otherwise tex_<k>.png /
/// seg_<k>.png pairs from the directory, plus view maps from *.uv files in it
/// (synthetic views when there are none).
Dataset load_dataset(const TrainConfig& cfg);

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Owns the model, the frozen feature extractor, both optimizers and the
/// iteration counter. Every random draw of iteration t is keyed by
/// (optim.seed, t), so a resumed run continues bit-identically.
class Trainer {
public:
    Trainer(const TrainConfig& cfg, Dataset data);

    /// Runs iteration `iteration()` (D step, then G step) and advances the counter.
    LossRecord step();

    std::int64_t iteration() const noexcept { return iteration_; }
    const TrainConfig& config() const noexcept { return cfg_; }
    const Dataset& data() const noexcept { return data_; }
    ReAVAEModel& model() noexcept { return *model_; }
    FeatureExtractor<float>& feature_extractor() noexcept { return *features_; }

    /// Frozen SRN stored alongside the model in checkpoints.
    void attach_super_resolution(std::shared_ptr<SuperResolution<float>> srn);
    SuperResolution<float>* super_resolution() noexcept { return srn_.get(); }

    /// Model tensors, optimizer moments, iteration, config snapshot.
    Checkpoint checkpoint();
    void resume(const Checkpoint& ckpt);

    /// Dataset indices used at iteration `it`.
    std::vector<std::size_t> batch_indices(std::int64_t it) const;

private:
    TrainConfig cfg_;
    Dataset data_;
    std::unique_ptr<ReAVAEModel> model_;
    std::unique_ptr<FeatureExtractor<float>> features_;
    std::unique_ptr<nn::Adam<float>> adam_g_, adam_d_;
    std::shared_ptr<SuperResolution<float>> srn_;
    std::int64_t iteration_ = 0;
};

/// Steps until optim.iterations. With a non-empty `out_dir`, appends to
/// loss.csv, writes ckpt_<iter>.ckpt every checkpoint_every iterations and
/// final.ckpt at the end; on divergence writes diverged.ckpt and rethrows.
Checkpoint train(Trainer& trainer, const std::filesystem::path& out_dir,
                 const std::function<void(const LossRecord&)>& on_step = {});

} // namespace reavae
