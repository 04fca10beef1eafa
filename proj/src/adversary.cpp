#include "reavae/adversary.hpp"

#include <cmath>

namespace reavae {

namespace {

template <class T>
constexpr T slope = T(0.2);

template <class T>
nn::Var<T> mean_of(const std::vector<nn::Var<T>>& terms)
{
    if (terms.empty()) throw std::invalid_argument("loss over zero scales");
    nn::Var<T> acc = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) acc = ag::add(acc, terms[i]);
    return ag::scale(acc, T(1) / static_cast<T>(terms.size()));
}

} // namespace

template <class T>
PatchDiscriminator<T>::PatchDiscriminator(int in_channels, int base, Rng& rng)
{
    const int widths[] = {base, 2 * base, 4 * base};
    const int strides[] = {2, 2, 1};
    int in = in_channels;
    for (int l = 0; l < 3; ++l) {
        convs.push_back(std::make_unique<nn::SNConv2d<T>>(in, widths[l], 3, rng, strides[l]));
        in = widths[l];
    }
    convs.push_back(std::make_unique<nn::SNConv2d<T>>(in, 1, 3, rng, 1));
    for (std::size_t l = 0; l < convs.size(); ++l) this->register_module("conv" + std::to_string(l), *convs[l]);
}

template <class T>
nn::Var<T> PatchDiscriminator<T>::forward(const nn::Var<T>& x, std::vector<nn::Var<T>>& features) const
{
    features.clear();
    nn::Var<T> h = x;
    for (int l = 0; l < 3; ++l) {
        h = convs[l]->forward(h);
        if (l > 0) h = ag::normalize(h, kernels::NormGroup::instance, T(1e-5));
        h = ag::leaky_relu(h, slope<T>);
        features.push_back(h);
    }
    return convs[3]->forward(h);
}

template <class T>
void PatchDiscriminator<T>::update_spectral()
{
    for (auto& c : convs) c->update_spectral();
}

template <class T>
MultiScaleDiscriminator<T>::MultiScaleDiscriminator(const ModelConfig& cfg, Rng& rng) : num_classes_(cfg.num_classes)
{
    for (int s = 0; s < cfg.disc_scales; ++s) {
        scales_.push_back(std::make_unique<PatchDiscriminator<T>>(3 + cfg.num_classes, cfg.disc_base, rng));
        this->register_module("scale" + std::to_string(s), *scales_.back());
    }
}

template <class T>
DiscriminatorOutput<T> MultiScaleDiscriminator<T>::forward(const nn::Var<T>& tex, const Labels& seg) const
{
    if (tex.dim(0) != seg.batch || tex.dim(2) != seg.height || tex.dim(3) != seg.width)
        throw std::invalid_argument("discriminator: texture and layout sizes differ");
    DiscriminatorOutput<T> out;
    nn::Var<T> x = ag::concat_channels(tex, nn::Var<T>(kernels::one_hot<T>(seg, num_classes_)));
    for (std::size_t s = 0; s < scales_.size(); ++s) {
        if (s > 0) x = ag::avg_pool2(x);
        out.features.emplace_back();
        out.logits.push_back(scales_[s]->forward(x, out.features.back()));
    }
    return out;
}

template <class T>
void MultiScaleDiscriminator<T>::update_spectral()
{
    for (auto& d : scales_) d->update_spectral();
}

template <class T>
nn::Var<T> hinge_d_loss(const std::vector<nn::Var<T>>& real_logits, const std::vector<nn::Var<T>>& fake_logits)
{
    if (real_logits.size() != fake_logits.size()) throw std::invalid_argument("hinge_d_loss: scale count mismatch");
    std::vector<nn::Var<T>> terms;
    for (std::size_t s = 0; s < real_logits.size(); ++s) {
        const nn::Var<T> r = ag::mean(ag::relu(ag::add_scalar(ag::scale(real_logits[s], T(-1)), T(1))));
        const nn::Var<T> f = ag::mean(ag::relu(ag::add_scalar(fake_logits[s], T(1))));
        terms.push_back(ag::add(r, f));
    }
    return mean_of(terms);
}

template <class T>
nn::Var<T> hinge_g_loss(const std::vector<nn::Var<T>>& fake_logits)
{
    std::vector<nn::Var<T>> terms;
    for (const auto& f : fake_logits) terms.push_back(ag::scale(ag::mean(f), T(-1)));
    return mean_of(terms);
}

template <class T>
nn::Var<T> feature_matching_loss(const std::vector<std::vector<nn::Var<T>>>& real,
                                 const std::vector<std::vector<nn::Var<T>>>& fake)
{
    if (real.size() != fake.size()) throw std::invalid_argument("feature_matching_loss: scale count mismatch");
    std::vector<nn::Var<T>> terms;
    for (std::size_t s = 0; s < real.size(); ++s) {
        if (real[s].size() != fake[s].size() || real[s].empty())
            throw std::invalid_argument("feature_matching_loss: layer count mismatch");
        nn::Var<T> acc;
        for (std::size_t l = 0; l < real[s].size(); ++l) {
            // Real features are targets only.
            const nn::Var<T> term = ag::l1_mean(nn::Var<T>(real[s][l].value()), fake[s][l]);
            acc = acc.defined() ? ag::add(acc, term) : term;
        }
        terms.push_back(acc);
    }
    return mean_of(terms);
}

template <class T>
nn::Var<T> perceptual_loss(const std::vector<nn::Var<T>>& fx, const std::vector<nn::Var<T>>& fgx)
{
    if (fx.size() != fgx.size() || fx.empty()) throw std::invalid_argument("perceptual_loss: stage count mismatch");
    nn::Var<T> acc;
    for (std::size_t l = 0; l < fx.size(); ++l) {
        const nn::Var<T> term = ag::l1_mean(nn::Var<T>(fx[l].value()), fgx[l]);
        acc = acc.defined() ? ag::add(acc, term) : term;
    }
    return acc;
}

template <class T>
FeatureExtractor<T>::FeatureExtractor(const std::vector<int>& channels, std::uint64_t seed)
{
    if (channels.empty()) throw std::invalid_argument("feature extractor needs at least one stage");
    Rng rng(seed);
    int in = 3;
    for (std::size_t s = 0; s < channels.size(); ++s) {
        convs_.push_back(std::make_unique<nn::Conv2d<T>>(in, channels[s], 3, rng));
        // He-uniform range so activations keep their scale through the stack.
        for (auto& w : convs_.back()->weight.mutable_value().values()) w *= static_cast<T>(std::sqrt(6.0));
        this->register_module("stage" + std::to_string(s), *convs_.back());
        in = channels[s];
    }
    this->set_requires_grad(false);
    this->set_training(false);
}

template <class T>
std::vector<nn::Var<T>> FeatureExtractor<T>::stages(const nn::Var<T>& x) const
{
    std::vector<nn::Var<T>> out;
    nn::Var<T> h = x;
    for (std::size_t s = 0; s < convs_.size(); ++s) {
        if (s > 0) h = ag::avg_pool2(h);
        h = ag::leaky_relu(convs_[s]->forward(h), slope<T>);
        out.push_back(h);
    }
    return out;
}

template <class T>
Tensor<T> FeatureExtractor<T>::embed(const Tensor<T>& x) const
{
    ag::NoGradGuard guard;
    const Tensor<T> last = stages(nn::Var<T>(x)).back().value();
    const int n = last.dim(0), d = last.dim(1);
    const std::size_t hw = static_cast<std::size_t>(last.dim(2)) * last.dim(3);
    Tensor<T> out({n, d});
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c) {
            const T* p = last.data() + (static_cast<std::size_t>(i) * d + c) * hw;
            double s = 0;
            for (std::size_t k = 0; k < hw; ++k) s += p[k];
            out[static_cast<std::size_t>(i) * d + c] = static_cast<T>(s / static_cast<double>(hw));
        }
    return out;
}

template <class T>
nn::Var<T> perceptual_loss(const nn::Var<T>& x, const nn::Var<T>& gx, const FeatureExtractor<T>& fx)
{
    return perceptual_loss(fx.stages(nn::Var<T>(x.value())), fx.stages(gx));
}

#define REAVAE_INSTANTIATE(T)                                                                                   \
    template class PatchDiscriminator<T>;                                                                       \
    template class MultiScaleDiscriminator<T>;                                                                  \
    template class FeatureExtractor<T>;                                                                         \
    template nn::Var<T> hinge_d_loss<T>(const std::vector<nn::Var<T>>&, const std::vector<nn::Var<T>>&);        \
    template nn::Var<T> hinge_g_loss<T>(const std::vector<nn::Var<T>>&);                                        \
    template nn::Var<T> feature_matching_loss<T>(const std::vector<std::vector<nn::Var<T>>>&,                  \
                                                 const std::vector<std::vector<nn::Var<T>>>&);                 \
    template nn::Var<T> perceptual_loss<T>(const std::vector<nn::Var<T>>&, const std::vector<nn::Var<T>>&);     \
    template nn::Var<T> perceptual_loss<T>(const nn::Var<T>&, const nn::Var<T>&, const FeatureExtractor<T>&);
REAVAE_INSTANTIATE(float)
REAVAE_INSTANTIATE(double)
#undef REAVAE_INSTANTIATE

} // namespace reavae
