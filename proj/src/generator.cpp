#include "reavae/generator.hpp"

#include <cmath>

namespace reavae {

template <class T>
RegionAdaptiveNorm<T>::RegionAdaptiveNorm(int channels, const ModelConfig& cfg, Rng& rng)
    : projection(cfg.style_dim, channels, rng), gamma(channels, channels, 3, rng), beta(channels, channels, 3, rng),
      running_mean(this->register_buffer("running_mean", Tensor<T>({channels}, T{0}))),
      running_var(this->register_buffer("running_var", Tensor<T>({channels}, T{1}))),
      eps_(static_cast<T>(cfg.bn_eps)), momentum_(static_cast<T>(cfg.bn_momentum)),
      batch_stats_in_eval_(cfg.inference_batch_stats)
{
    // γ starts around 1 so the block initially passes normalised activations.
    for (auto& b : gamma.bias.mutable_value().values()) b += T{1};
    this->register_module("projection", projection);
    this->register_module("gamma", gamma);
    this->register_module("beta", beta);
    if (cfg.gen_noise) noise_strength = this->register_parameter("noise_strength", Tensor<T>({channels}, T{0}));
}

template <class T>
nn::Var<T> RegionAdaptiveNorm<T>::forward(const nn::Var<T>& x, const Labels& seg, const nn::Var<T>& styles,
                                          const Tensor<T>* noise) const
{
    nn::Var<T> h = x;
    if (noise && noise_strength) h = ag::add_channel_scaled_noise(h, noise_strength->get(), *noise);

    nn::Var<T> xhat;
    if (this->training() || batch_stats_in_eval_) {
        Tensor<T> mean, var;
        xhat = ag::normalize(h, kernels::NormGroup::channel, eps_, &mean, &var);
        if (this->training()) {
            const double count = static_cast<double>(h.dim(0)) * h.dim(2) * h.dim(3);
            const double unbias = count > 1 ? count / (count - 1) : 1.0;
            for (std::size_t c = 0; c < mean.size(); ++c) {
                running_mean[c] = (T{1} - momentum_) * running_mean[c] + momentum_ * mean[c];
                running_var[c] = static_cast<T>((1.0 - momentum_) * running_var[c] + momentum_ * var[c] * unbias);
            }
        }
    } else {
        xhat = ag::normalize_with(h, running_mean, running_var, eps_);
    }

    const nn::Var<T> map = ag::broadcast_codes(projection.forward(styles), seg);
    return ag::add(ag::mul(gamma.forward(map), xhat), beta.forward(map));
}

template <class T>
ResBlock<T>::ResBlock(int in, int out, const ModelConfig& cfg, Rng& rng)
    : in_channels(in), out_channels(out), norm0(in, cfg, rng), conv0(in, std::min(in, out), 3, rng),
      norm1(std::min(in, out), cfg, rng), conv1(std::min(in, out), out, 3, rng)
{
    this->register_module("norm0", norm0);
    this->register_module("conv0", conv0);
    this->register_module("norm1", norm1);
    this->register_module("conv1", conv1);
    if (in != out) {
        shortcut = std::make_unique<nn::Conv2d<T>>(in, out, 1, rng, 1, false);
        this->register_module("shortcut", *shortcut);
    }
}

template <class T>
nn::Var<T> ResBlock<T>::forward(const nn::Var<T>& x, const Labels& seg, const nn::Var<T>& styles,
                                const Tensor<T>* noise0, const Tensor<T>* noise1) const
{
    const T slope(0.2);
    nn::Var<T> h = conv0.forward(ag::leaky_relu(norm0.forward(x, seg, styles, noise0), slope));
    h = conv1.forward(ag::leaky_relu(norm1.forward(h, seg, styles, noise1), slope));
    return ag::add(shortcut ? shortcut->forward(x) : x, h);
}

template <class T>
Generator<T>::Generator(const ModelConfig& cfg, Rng& rng)
    : num_classes_(cfg.num_classes), base_(cfg.gen_base_size), noise_(cfg.gen_noise)
{
    const auto& ch = cfg.gen_channels;
    input_ = std::make_unique<nn::Conv2d<T>>(cfg.num_classes, ch[0], 3, rng);
    this->register_module("input", *input_);
    for (std::size_t b = 0; b < ch.size(); ++b) {
        blocks_.push_back(std::make_unique<ResBlock<T>>(b == 0 ? ch[0] : ch[b - 1], ch[b], cfg, rng));
        to_rgb_.push_back(std::make_unique<nn::Conv2d<T>>(ch[b], 3, 1, rng));
        this->register_module("block" + std::to_string(b), *blocks_.back());
        this->register_module("to_rgb" + std::to_string(b), *to_rgb_.back());
    }
}

template <class T>
Tensor<T> Generator<T>::site_noise(std::uint64_t seed, int site, int h, int w) const
{
    Tensor<T> n({1, 1, h, w});
    Rng rng(derive_seed(seed, {seed_tag::noise, static_cast<std::uint64_t>(site)}));
    fill_normal<T>(rng, n.values().begin(), n.values().end());
    return n;
}

template <class T>
nn::Var<T> Generator<T>::forward(const nn::Var<T>& styles, const Labels& seg,
                                 const std::vector<std::uint64_t>& noise_seeds, GeneratorTrace<T>* trace) const
{
    const int n = seg.batch, res = resolution();
    if (seg.height != res || seg.width != res)
        throw std::invalid_argument("generator expects a " + std::to_string(res) + "×" + std::to_string(res) +
                                    " layout");
    if (styles.shape() != Shape{n, num_classes_, styles.dim(2)})
        throw std::invalid_argument("generator: style matrix " + to_string(styles.shape()) + " does not match " +
                                    std::to_string(n) + " layouts of " + std::to_string(num_classes_) + " classes");
    if (static_cast<int>(noise_seeds.size()) != n) throw std::invalid_argument("generator: one noise seed per sample");
    for (int v : seg.data)
        if (v < 0 || v >= num_classes_) throw std::out_of_range("generator: label out of range");

    auto noise_batch = [&](int site, int size) {
        Tensor<T> out({n, 1, size, size});
        for (int i = 0; i < n; ++i) {
            const Tensor<T> one = site_noise(noise_seeds[i], site, size, size);
            std::copy(one.values().begin(), one.values().end(), out.data() + static_cast<std::size_t>(i) * size * size);
        }
        return out;
    };

    const Labels base = kernels::resize_labels_nearest(seg, base_, base_);
    nn::Var<T> x = input_->forward(nn::Var<T>(kernels::one_hot<T>(base, num_classes_)));
    nn::Var<T> sum;
    if (trace) trace->skips.clear();
    for (int b = 0; b < num_blocks(); ++b) {
        const int r = block_resolution(b);
        if (b > 0) x = ag::upsample_nearest(x, 2);
        const Labels site = r == res ? seg : kernels::resize_labels_nearest(seg, r, r);
        std::optional<Tensor<T>> n0, n1;
        if (noise_) {
            n0 = noise_batch(2 * b, r);
            n1 = noise_batch(2 * b + 1, r);
        }
        x = blocks_[b]->forward(x, site, styles, n0 ? &*n0 : nullptr, n1 ? &*n1 : nullptr);
        const nn::Var<T> rgb = ag::resize_bilinear(to_rgb_[b]->forward(x), res, res);
        if (trace) trace->skips.push_back(rgb.value());
        sum = sum.defined() ? ag::add(sum, rgb) : rgb;
    }
    if (trace) trace->pre_sigmoid = sum.value();
    return ag::sigmoid(sum);
}

namespace {

// Output indices of a bilinear resize (half-pixel centres, factor f) that
// read any input index in [lo, hi].
std::pair<int, int> bilinear_reach(int lo, int hi, int f)
{
    if (f == 1) return {lo, hi};
    const int out_lo = static_cast<int>(std::ceil((lo - 0.5) * f - 0.5));
    const int out_hi = static_cast<int>(std::ceil((hi + 1.5) * f - 0.5)) - 1;
    return {out_lo, out_hi};
}

} // namespace

template <class T>
int Generator<T>::influence_radius(int b, int site) const
{
    const int res = resolution();
    // γ/β 3×3 conv, then the remaining convs of this block.
    int lo = -1, hi = 1;
    const int convs_left = site == 0 ? 2 : 1;
    lo -= convs_left;
    hi += convs_left;
    int reach_lo = 0, reach_hi = 0;
    for (int k = b;; ++k) {
        const int f = res / block_resolution(k);
        const auto [a, z] = bilinear_reach(lo, hi, f);
        reach_lo = std::min(reach_lo, a);
        reach_hi = std::max(reach_hi, z);
        if (k + 1 == num_blocks()) break;
        lo = 2 * lo - 2; // nearest ×2 then conv0 and conv1 of the next block
        hi = 2 * hi + 1 + 2;
    }
    // The site pixel at index 0 samples the full-resolution pixel 0.
    return std::max(-reach_lo, reach_hi);
}

template class RegionAdaptiveNorm<float>;
template class RegionAdaptiveNorm<double>;
template class ResBlock<float>;
template class ResBlock<double>;
template class Generator<float>;
template class Generator<double>;

} // namespace reavae
