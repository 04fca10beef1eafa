#pragma once

#include <memory>

#include "reavae/config.hpp"
#include "reavae/nn.hpp"

namespace reavae {

template <class T>
struct DiscriminatorOutput {
    std::vector<nn::Var<T>> logits;                // one patch map per scale
    std::vector<std::vector<nn::Var<T>>> features; // per scale, layers 1..3
};

/// SN conv s2 → lrelu → SN conv s2 + IN → lrelu → SN conv s1 + IN → lrelu → SN conv → logits.
template <class T>
class PatchDiscriminator : public nn::Module<T> {
public:
    PatchDiscriminator(int in_channels, int base, Rng& rng);
    nn::Var<T> forward(const nn::Var<T>& x, std::vector<nn::Var<T>>& features) const;
    void update_spectral();

    std::vector<std::unique_ptr<nn::SNConv2d<T>>> convs;
};

/// Patch discriminators at full and successively 2×-pooled scales, conditioned
/// on the one-hot layout concatenated to the image.
template <class T>
class MultiScaleDiscriminator : public nn::Module<T> {
public:
    MultiScaleDiscriminator(const ModelConfig& cfg, Rng& rng);
    DiscriminatorOutput<T> forward(const nn::Var<T>& tex, const Labels& seg) const;
    /// One power-iteration step for every spectrally normalised layer.
    void update_spectral();
    int num_scales() const noexcept { return static_cast<int>(scales_.size()); }

private:
    int num_classes_;
    std::vector<std::unique_ptr<PatchDiscriminator<T>>> scales_;
};

/// Mean over scales of mean(max(0, 1 − D(x))) + mean(max(0, 1 + D(G(x)))).
template <class T>
nn::Var<T> hinge_d_loss(const std::vector<nn::Var<T>>& real_logits, const std::vector<nn::Var<T>>& fake_logits);

/// −mean(D(G(x))), averaged over scales.
template <class T>
nn::Var<T> hinge_g_loss(const std::vector<nn::Var<T>>& fake_logits);

/// Σ_{l=1..3} mean|D_l(x) − D_l(G(x))| per scale, averaged over scales.
template <class T>
nn::Var<T> feature_matching_loss(const std::vector<std::vector<nn::Var<T>>>& real,
                                 const std::vector<std::vector<nn::Var<T>>>& fake);

/// Σ_l mean|F_l(x) − F_l(G(x))| over matched stage outputs.
template <class T>
nn::Var<T> perceptual_loss(const std::vector<nn::Var<T>>& fx, const std::vector<nn::Var<T>>& fgx);

/// Frozen random-weight convolutional pyramid: one 3×3 conv + lrelu per stage,
/// 2× average pooling between stages. Also serves as the FID/KID embedder
/// through global average pooling of the last stage.
template <class T>
class FeatureExtractor : public nn::Module<T> {
public:
    FeatureExtractor(const std::vector<int>& channels, std::uint64_t seed);
    std::vector<nn::Var<T>> stages(const nn::Var<T>& x) const;
    /// N×3×H×W -> N×D (D = last stage width).
    Tensor<T> embed(const Tensor<T>& x) const;
    int embedding_dim() const noexcept { return convs_.back()->out_channels; }

private:
    std::vector<std::unique_ptr<nn::Conv2d<T>>> convs_;
};

inline constexpr std::uint64_t feature_extractor_seed = 0x5EED;

template <class T>
nn::Var<T> perceptual_loss(const nn::Var<T>& x, const nn::Var<T>& gx, const FeatureExtractor<T>& fx);

} // namespace reavae
