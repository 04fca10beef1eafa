#pragma once

#include <memory>

#include "reavae/config.hpp"
#include "reavae/nn.hpp"

namespace reavae {

/// Maps a texture batch to a W-channel feature map at
/// resolution / 2^(downs - ups) and pools it per class into raw style rows.
template <class T>
class StyleEncoder : public nn::Module<T> {
public:
    StyleEncoder(const ModelConfig& cfg, Rng& rng);

    /// N×3×H×W -> N×W×h×w
    nn::Var<T> features(const nn::Var<T>& tex) const;

    /// Raw style matrix N×C×W. `seg` is at texture resolution and is
    /// nearest-downsampled to the feature grid. Absent classes give zero rows.
    nn::Var<T> encode(const nn::Var<T>& tex, const Labels& seg, std::vector<int>* counts = nullptr) const;

    /// Closed interval of input indices (along one axis, unclipped) that
    /// feature index `o` depends on. Exact for the norm-free configuration.
    std::pair<int, int> input_span(int o) const;

    int feature_size() const noexcept { return feature_size_; }
    int num_classes() const noexcept { return num_classes_; }

private:
    enum class Stage { same, down, up };
    struct Layer {
        Stage stage;
        std::unique_ptr<nn::Conv2d<T>> conv;
    };
    std::vector<Layer> layers_;
    std::unique_ptr<nn::Conv2d<T>> out_;
    bool norm_;
    int num_classes_, feature_size_;
};

/// pool_region_styles: nearest-downsample `seg` to the feature grid and average
/// per class. Returns N×C×W; counts receives N×C pixel counts.
template <class T>
nn::Var<T> pool_region_styles(const nn::Var<T>& features, const Labels& seg, int num_classes,
                              std::vector<int>* counts = nullptr);

} // namespace reavae
