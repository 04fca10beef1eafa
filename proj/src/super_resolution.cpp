#include "reavae/super_resolution.hpp"

#include <algorithm>
#include <numeric>

namespace reavae {

template <class T>
SuperResolution<T>::SuperResolution(const SRNConfig& cfg) : cfg_(cfg)
{
    if (cfg.factor < 2 || cfg.channels < 1 || cfg.blocks < 0) throw std::invalid_argument("invalid SRN config");
    Rng rng(derive_seed(cfg.seed, {seed_tag::init}));
    head_ = std::make_unique<nn::Conv2d<T>>(3, cfg.channels, 3, rng);
    this->register_module("head", *head_);
    for (int b = 0; b < 2 * cfg.blocks; ++b) {
        body_.push_back(std::make_unique<nn::Conv2d<T>>(cfg.channels, cfg.channels, 3, rng));
        this->register_module("body" + std::to_string(b), *body_.back());
    }
    tail_ = std::make_unique<nn::Conv2d<T>>(cfg.channels, 3 * cfg.factor * cfg.factor, 3, rng);
    tail_->zero_();
    this->register_module("tail", *tail_);
}

template <class T>
nn::Var<T> SuperResolution<T>::forward(const nn::Var<T>& x) const
{
    if (x.shape().size() != 4 || x.dim(1) != 3) throw std::invalid_argument("SRN expects N×3×h×w input");
    const T slope(0.2);
    const nn::Var<T> base(kernels::bicubic_upsample(x.value(), cfg_.factor));
    nn::Var<T> h = ag::leaky_relu(head_->forward(x), slope);
    for (std::size_t b = 0; b < body_.size(); b += 2)
        h = ag::add(h, body_[b + 1]->forward(ag::leaky_relu(body_[b]->forward(h), slope)));
    return ag::add(base, ag::pixel_shuffle(tail_->forward(h), cfg_.factor));
}

template class SuperResolution<float>;
template class SuperResolution<double>;

TextureMap downsample_texture(const TextureMap& tex, int factor)
{
    const Tensor<float> x = tex.pixels.reshaped({1, 3, tex.height(), tex.width()});
    const Tensor<float> y = kernels::area_downsample(x, factor);
    return TextureMap(y.reshaped({3, y.dim(2), y.dim(3)}));
}

TextureMap bicubic_texture(const TextureMap& tex, int factor)
{
    const Tensor<float> y = kernels::bicubic_upsample(tex.pixels.reshaped({1, 3, tex.height(), tex.width()}), factor);
    Tensor<float> out = y.reshaped({3, y.dim(2), y.dim(3)});
    for (auto& v : out.values()) v = std::clamp(v, 0.f, 1.f);
    return TextureMap(std::move(out));
}

TextureMap super_resolve(const SuperResolution<float>& net, const TextureMap& tex)
{
    ag::NoGradGuard guard;
    const nn::Var<float> y = net.forward(nn::Var<float>(tex.pixels.reshaped({1, 3, tex.height(), tex.width()})));
    Tensor<float> out = y.value().reshaped({3, y.dim(2), y.dim(3)});
    for (auto& v : out.values()) v = std::clamp(v, 0.f, 1.f);
    return TextureMap(std::move(out));
}

std::vector<double> train_srn(SuperResolution<float>& net, const std::vector<TextureMap>& high,
                              const SRNTrainConfig& cfg, const std::function<void(int, double)>& on_step)
{
    if (high.empty()) throw std::invalid_argument("train_srn: no training textures");
    const int f = net.config().factor;
    const int h = high.front().height(), w = high.front().width();
    std::vector<TextureMap> low;
    for (const auto& t : high) {
        if (t.height() != h || t.width() != w) throw std::invalid_argument("train_srn: textures differ in size");
        low.push_back(downsample_texture(t, f));
    }
    const int lh = low.front().height(), lw = low.front().width();
    const int batch = std::min<int>(cfg.batch_size, static_cast<int>(high.size()));

    net.set_training(true);
    nn::Adam<float> opt(net.named_parameters(), nn::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    std::vector<double> losses;
    std::vector<int> order(high.size());
    for (int it = 0; it < cfg.iterations; ++it) {
        Rng rng(derive_seed(cfg.seed, {seed_tag::batch, static_cast<std::uint64_t>(it)}));
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        Tensor<float> x({batch, 3, lh, lw}), y({batch, 3, h, w});
        for (int b = 0; b < batch; ++b) {
            std::copy(low[order[b]].pixels.values().begin(), low[order[b]].pixels.values().end(),
                      x.data() + static_cast<std::size_t>(b) * 3 * lh * lw);
            std::copy(high[order[b]].pixels.values().begin(), high[order[b]].pixels.values().end(),
                      y.data() + static_cast<std::size_t>(b) * 3 * h * w);
        }
        opt.zero_grad();
        nn::Var<float> loss = ag::l1_mean(net.forward(nn::Var<float>(x)), nn::Var<float>(y));
        loss.backward();
        opt.step();
        losses.push_back(loss.value()[0]);
        if (on_step) on_step(it, losses.back());
    }
    net.set_training(false);
    return losses;
}

Checkpoint srn_to_checkpoint(SuperResolution<float>& net)
{
    Checkpoint ckpt;
    const auto& c = net.config();
    ckpt.meta = {{"kind", "srn"}, {"factor", c.factor}, {"channels", c.channels}, {"blocks", c.blocks},
                 {"seed", c.seed}};
    store_module(ckpt, net, "srn.");
    return ckpt;
}

std::unique_ptr<SuperResolution<float>> srn_from_checkpoint(const Checkpoint& ckpt)
{
    if (ckpt.meta.value("kind", "") != "srn") throw std::runtime_error("checkpoint does not hold an SRN");
    SRNConfig c;
    c.factor = ckpt.meta.at("factor").get<int>();
    c.channels = ckpt.meta.at("channels").get<int>();
    c.blocks = ckpt.meta.at("blocks").get<int>();
    c.seed = ckpt.meta.at("seed").get<std::uint64_t>();
    auto net = std::make_unique<SuperResolution<float>>(c);
    restore_module(ckpt, *net, "srn.");
    net->set_training(false);
    return net;
}

void bundle_srn(Checkpoint& ckpt, SuperResolution<float>& net)
{
    const Checkpoint s = srn_to_checkpoint(net);
    ckpt.meta["srn"] = s.meta;
    for (const auto& t : s.tensors) ckpt.add(t.name, t.value);
}

std::unique_ptr<SuperResolution<float>> bundled_srn(const Checkpoint& ckpt)
{
    if (!ckpt.meta.contains("srn")) return nullptr;
    Checkpoint s;
    s.meta = ckpt.meta["srn"];
    for (const auto& t : ckpt.tensors)
        if (t.name.rfind("srn.", 0) == 0) s.add(t.name, t.value);
    return srn_from_checkpoint(s);
}

} // namespace reavae
