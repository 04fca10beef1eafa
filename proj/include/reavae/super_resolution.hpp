#pragma once

#include <functional>
#include <memory>

#include "reavae/checkpoint.hpp"
#include "reavae/core_data.hpp"
#include "reavae/nn.hpp"

namespace reavae {

struct SRNConfig {
    int factor = 4;
    int channels = 32;
    int blocks = 3;
    std::uint64_t seed = 11;
};

/// Bicubic upsampling plus a learned residual: head conv, residual conv
/// pairs, then a tail conv to 3·f² channels and pixel shuffle. The tail starts
/// at zero so an untrained network reproduces bicubic exactly.
template <class T>
class SuperResolution : public nn::Module<T> {
public:
    explicit SuperResolution(const SRNConfig& cfg);
    nn::Var<T> forward(const nn::Var<T>& x) const;
    const SRNConfig& config() const noexcept { return cfg_; }

private:
    SRNConfig cfg_;
    std::unique_ptr<nn::Conv2d<T>> head_, tail_;
    std::vector<std::unique_ptr<nn::Conv2d<T>>> body_;
};

struct SRNTrainConfig {
    int iterations = 1500;
    int batch_size = 8;
    double lr = 1e-3;
    std::uint64_t seed = 3;
};

/// High-resolution textures; low-resolution inputs are their f×f area
/// averages. L1 loss, Adam. Returns the loss per iteration.
std::vector<double> train_srn(SuperResolution<float>& net, const std::vector<TextureMap>& high,
                              const SRNTrainConfig& cfg,
                              const std::function<void(int, double)>& on_step = {});

/// Area-average downsampling used to build training pairs.
TextureMap downsample_texture(const TextureMap& tex, int factor);
TextureMap bicubic_texture(const TextureMap& tex, int factor);
/// SRN output clamped to [0,1].
TextureMap super_resolve(const SuperResolution<float>& net, const TextureMap& tex);

Checkpoint srn_to_checkpoint(SuperResolution<float>& net);
std::unique_ptr<SuperResolution<float>> srn_from_checkpoint(const Checkpoint& ckpt);

/// Copies an SRN into a model checkpoint (meta.srn plus "srn." tensors).
void bundle_srn(Checkpoint& ckpt, SuperResolution<float>& net);
/// The SRN bundled into a model checkpoint, or null when there is none.
std::unique_ptr<SuperResolution<float>> bundled_srn(const Checkpoint& ckpt);

} // namespace reavae
