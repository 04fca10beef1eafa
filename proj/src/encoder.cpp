#include "reavae/encoder.hpp"

namespace reavae {

template <class T>
StyleEncoder<T>::StyleEncoder(const ModelConfig& cfg, Rng& rng)
    : norm_(cfg.encoder_norm), num_classes_(cfg.num_classes), feature_size_(cfg.encoder_feature_size())
{
    int ch = cfg.encoder_base;
    layers_.push_back({Stage::same, std::make_unique<nn::Conv2d<T>>(3, ch, 3, rng)});
    for (int d = 0; d < cfg.encoder_downs; ++d, ch *= 2)
        layers_.push_back({Stage::down, std::make_unique<nn::Conv2d<T>>(ch, ch * 2, 3, rng, 2)});
    for (int u = 0; u < cfg.encoder_ups; ++u, ch /= 2)
        layers_.push_back({Stage::up, std::make_unique<nn::Conv2d<T>>(ch, ch / 2, 3, rng)});
    out_ = std::make_unique<nn::Conv2d<T>>(ch, cfg.style_dim, 3, rng);
    for (std::size_t i = 0; i < layers_.size(); ++i) this->register_module("conv" + std::to_string(i), *layers_[i].conv);
    this->register_module("out", *out_);
}

template <class T>
nn::Var<T> StyleEncoder<T>::features(const nn::Var<T>& tex) const
{
    nn::Var<T> x = tex;
    for (const Layer& layer : layers_) {
        if (layer.stage == Stage::up) x = ag::upsample_nearest(x, 2);
        x = layer.conv->forward(x);
        // The input conv stays unnormalised: it is linear in RGB, so instance
        // norm there would erase each image's mean colour.
        if (norm_ && layer.stage != Stage::same) x = ag::normalize(x, kernels::NormGroup::instance, T(1e-5));
        x = ag::leaky_relu(x, T(0.2));
    }
    return ag::tanh(out_->forward(x));
}

template <class T>
nn::Var<T> StyleEncoder<T>::encode(const nn::Var<T>& tex, const Labels& seg, std::vector<int>* counts) const
{
    return pool_region_styles(features(tex), seg, num_classes_, counts);
}

template <class T>
std::pair<int, int> StyleEncoder<T>::input_span(int o) const
{
    // Walk backwards from the output conv to the input.
    int lo = o - 1, hi = o + 1; // output conv, 3×3 stride 1
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
        switch (it->stage) {
        case Stage::same:
            lo -= 1;
            hi += 1;
            break;
        case Stage::down:
            lo = lo * 2 - 1;
            hi = hi * 2 + 1;
            break;
        case Stage::up:
            lo -= 1;
            hi += 1;
            lo = lo >= 0 ? lo / 2 : -((-lo + 1) / 2);
            hi = hi >= 0 ? hi / 2 : -((-hi + 1) / 2);
            break;
        }
    }
    return {lo, hi};
}

template <class T>
nn::Var<T> pool_region_styles(const nn::Var<T>& features, const Labels& seg, int num_classes, std::vector<int>* counts)
{
    const int h = features.dim(2), w = features.dim(3);
    const Labels site = (seg.height == h && seg.width == w) ? seg : kernels::resize_labels_nearest(seg, h, w);
    return ag::region_pool(features, site, num_classes, counts);
}

template class StyleEncoder<float>;
template class StyleEncoder<double>;
template nn::Var<float> pool_region_styles<float>(const nn::Var<float>&, const Labels&, int, std::vector<int>*);
template nn::Var<double> pool_region_styles<double>(const nn::Var<double>&, const Labels&, int, std::vector<int>*);

} // namespace reavae
