#pragma once

#include <memory>
#include <optional>

#include "reavae/config.hpp"
#include "reavae/nn.hpp"

namespace reavae {

/// Region-adaptive normalisation: y = γ(p) ⊙ BN(x + s ⊙ noise) + β(p), where
/// γ and β are 3×3 convolutions of the class codes A(S_c) broadcast through
/// the layout. BN is parameter-free; running statistics are kept for eval.
template <class T>
class RegionAdaptiveNorm : public nn::Module<T> {
public:
    RegionAdaptiveNorm(int channels, const ModelConfig& cfg, Rng& rng);

    /// x: N×k×h×w; seg: N×h×w; styles: N×C×W; noise: N×1×h×w or null.
    /// In training mode the running statistics are updated as a side effect.
    nn::Var<T> forward(const nn::Var<T>& x, const Labels& seg, const nn::Var<T>& styles,
                       const Tensor<T>* noise) const;

    nn::Linear<T> projection;
    nn::Conv2d<T> gamma;
    nn::Conv2d<T> beta;
    std::optional<std::reference_wrapper<nn::Var<T>>> noise_strength;
    Tensor<T>& running_mean;
    Tensor<T>& running_var;

private:
    T eps_, momentum_;
    bool batch_stats_in_eval_;
};

template <class T>
class ResBlock : public nn::Module<T> {
public:
    ResBlock(int in, int out, const ModelConfig& cfg, Rng& rng);
    nn::Var<T> forward(const nn::Var<T>& x, const Labels& seg, const nn::Var<T>& styles, const Tensor<T>* noise0,
                       const Tensor<T>* noise1) const;

    int in_channels, out_channels;
    RegionAdaptiveNorm<T> norm0;
    nn::Conv2d<T> conv0;
    RegionAdaptiveNorm<T> norm1;
    nn::Conv2d<T> conv1;
    std::unique_ptr<nn::Conv2d<T>> shortcut; // 1×1, only when in != out
};

template <class T>
struct GeneratorTrace {
    std::vector<Tensor<T>> skips; // per block, upsampled to output size, pre-sigmoid
    Tensor<T> pre_sigmoid;
};

template <class T>
class Generator : public nn::Module<T> {
public:
    Generator(const ModelConfig& cfg, Rng& rng);

    /// styles: N×C×W; seg: N×R×R at output resolution; one noise seed per sample.
    nn::Var<T> forward(const nn::Var<T>& styles, const Labels& seg, const std::vector<std::uint64_t>& noise_seeds,
                       GeneratorTrace<T>* trace = nullptr) const;

    int num_blocks() const noexcept { return static_cast<int>(blocks_.size()); }
    int block_resolution(int b) const noexcept { return base_ << b; }
    int resolution() const noexcept { return block_resolution(num_blocks() - 1); }

    /// Largest output-pixel distance (per axis) over which a style change
    /// entering at normalisation site `site` (0 or 1) of block `b` can reach,
    /// measured from the full-resolution pixel the site's label was sampled from.
    int influence_radius(int b, int site) const;

    /// Noise image used at a site for one sample.
    Tensor<T> site_noise(std::uint64_t seed, int site, int h, int w) const;

    ResBlock<T>& block(int b) { return *blocks_[b]; }

private:
    int num_classes_, base_;
    bool noise_;
    std::unique_ptr<nn::Conv2d<T>> input_;
    std::vector<std::unique_ptr<ResBlock<T>>> blocks_;
    std::vector<std::unique_ptr<nn::Conv2d<T>>> to_rgb_;
};

} // namespace reavae
