#include "reavae/training.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

namespace reavae {

using V = ag::Var<float>;

std::string to_string(TrainMode m)
{
    return m == TrainMode::reconstruction ? "reconstruction" : "vae";
}

TrainMode train_mode_from_string(const std::string& s)
{
    if (s == "reconstruction") return TrainMode::reconstruction;
    if (s == "vae") return TrainMode::vae;
    throw std::invalid_argument("unknown training mode '" + s + "'");
}

double total_loss(double l_adv, double l_rec, double l_ren, double l_kld, const LossConfig& cfg, TrainMode mode)
{
    const std::pair<const char*, double> parts[] = {{"l_adv", l_adv}, {"l_rec", l_rec}, {"l_ren", l_ren}, {"l_kld", l_kld}};
    for (const auto& [name, v] : parts)
        if (!std::isfinite(v)) throw TrainingDiverged(std::string("non-finite loss component ") + name);
    double l = cfg.lambda_adv * l_adv + cfg.lambda_rec * l_rec + cfg.lambda_ren * l_ren;
    if (mode == TrainMode::vae) l += cfg.lambda_kld * l_kld;
    return l;
}

std::string loss_csv_row(const LossRecord& r)
{
    return fmt::format("{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}", r.iteration, to_string(r.mode), r.l_adv, r.l_rec,
                       r.l_ren, r.l_kld, r.l_f);
}

void Dataset::validate(int num_classes, int resolution) const
{
    if (textures.empty()) throw std::invalid_argument("dataset is empty");
    if (textures.size() != layouts.size()) throw std::invalid_argument("dataset textures and layouts are not paired");
    if (views.empty()) throw std::invalid_argument("dataset has no view maps");
    for (std::size_t i = 0; i < size(); ++i) {
        const auto& t = textures[i];
        const auto& s = layouts[i];
        if (t.height() != resolution || t.width() != resolution || s.height() != resolution ||
            s.width() != resolution)
            throw std::invalid_argument(fmt::format("dataset sample {} is not {}x{}", i, resolution, resolution));
        if (s.num_classes != num_classes)
            throw std::invalid_argument(fmt::format("dataset has {} classes but the model expects {}",
                                                    s.num_classes, num_classes));
        for (int l : s.labels.data)
            if (l < 0 || l >= num_classes)
                throw std::invalid_argument(fmt::format("dataset sample {} has label {} >= {}", i, l, num_classes));
    }
}

Dataset load_dataset(const TrainConfig& cfg)
{
    const int c = cfg.model.num_classes, res = cfg.model.resolution;
    Dataset d;
    if (cfg.data.dir.empty()) {
        for (auto& s : generate_synthetic_dataset(SynthSpec::sized(c, res), cfg.data.synthetic_samples, cfg.data.synthetic_seed)) {
            d.textures.push_back(std::move(s.texture));
            d.layouts.push_back(std::move(s.segmentation));
        }
    } else {
        const std::filesystem::path dir(cfg.data.dir);
        if (!std::filesystem::is_directory(dir)) throw std::runtime_error("data directory not found: " + dir.string());
        std::vector<std::filesystem::path> tex, uv;
        for (const auto& e : std::filesystem::directory_iterator(dir)) {
            const std::string name = e.path().filename().string();
            if (name.rfind("tex_", 0) == 0 && e.path().extension() == ".png") tex.push_back(e.path());
            if (e.path().extension() == ".uv") uv.push_back(e.path());
        }
        std::sort(tex.begin(), tex.end());
        std::sort(uv.begin(), uv.end());
        for (const auto& t : tex) {
            const auto seg = dir / ("seg_" + t.filename().string().substr(4));
            if (!std::filesystem::exists(seg)) throw std::runtime_error("missing layout for " + t.string());
            d.textures.push_back(load_texture(t));
            d.layouts.push_back(load_segmentation(seg, c));
        }
        for (const auto& p : uv) d.views.push_back(load_view(p));
    }
    if (d.views.empty()) d.views = synthetic_views(res, cfg.loss.num_views);
    d.validate(c, res);
    return d;
}

namespace {

V weighted_total(const V& l_adv, const V& l_rec, const V& l_ren, const V& l_kld, const LossConfig& cfg,
                 TrainMode mode)
{
    V l = ag::add(ag::add(ag::scale(l_adv, static_cast<float>(cfg.lambda_adv)),
                          ag::scale(l_rec, static_cast<float>(cfg.lambda_rec))),
                  ag::scale(l_ren, static_cast<float>(cfg.lambda_ren)));
    if (mode == TrainMode::vae) l = ag::add(l, ag::scale(l_kld, static_cast<float>(cfg.lambda_kld)));
    return l;
}

void require_finite(const char* name, const V& v, std::int64_t it)
{
    if (!std::isfinite(v.item()))
        throw TrainingDiverged(fmt::format("non-finite loss component {} at iteration {}", name, it));
}

/// Re-enables discriminator gradients when the generator step leaves scope.
struct FrozenScope {
    nn::Module<float>& m;
    explicit FrozenScope(nn::Module<float>& module) : m(module) { m.set_requires_grad(false); }
    ~FrozenScope() { m.set_requires_grad(true); }
};

} // namespace

Trainer::Trainer(const TrainConfig& cfg, Dataset data) : cfg_(cfg), data_(std::move(data))
{
    cfg_.validate();
    data_.validate(cfg_.model.num_classes, cfg_.model.resolution);
    model_ = std::make_unique<ReAVAEModel>(cfg_.model);
    features_ = std::make_unique<FeatureExtractor<float>>(cfg_.model.feature_channels, feature_extractor_seed);
    const nn::AdamConfig ac{cfg_.optim.lr, cfg_.optim.beta1, cfg_.optim.beta2, 1e-8};
    adam_g_ = std::make_unique<nn::Adam<float>>(model_->generator_parameters(), ac);
    adam_d_ = std::make_unique<nn::Adam<float>>(model_->discriminator_parameters(), ac);
}

void Trainer::attach_super_resolution(std::shared_ptr<SuperResolution<float>> srn)
{
    if (srn) {
        srn->set_requires_grad(false);
        srn->set_training(false);
    }
    srn_ = std::move(srn);
}

std::vector<std::size_t> Trainer::batch_indices(std::int64_t it) const
{
    std::vector<std::size_t> order(data_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg_.optim.seed, {seed_tag::batch, static_cast<std::uint64_t>(it)}));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> out(static_cast<std::size_t>(cfg_.optim.batch_size));
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = order[k % order.size()];
    return out;
}

LossRecord Trainer::step()
{
    const std::int64_t it = iteration_;
    const auto uit = static_cast<std::uint64_t>(it);
    const TrainMode mode = mode_for_iteration(it);
    const auto idx = batch_indices(it);
    const int n = static_cast<int>(idx.size()), res = cfg_.model.resolution, c = cfg_.model.num_classes;
    const std::size_t plane = static_cast<std::size_t>(res) * res;

    Tensor<float> real_t({n, 3, res, res});
    Labels seg(n, res, res);
    std::vector<std::uint8_t> presence(static_cast<std::size_t>(n) * c, 0);
    for (int k = 0; k < n; ++k) {
        const auto& tex = data_.textures[idx[k]].pixels;
        float* dst = real_t.data() + k * 3 * plane;
        Rng rng(derive_seed(cfg_.optim.seed, {seed_tag::color, uit, static_cast<std::uint64_t>(k)}));
        if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg_.data.color_augment) {
            // 48 colour variants per texture, so a layout alone cannot determine its colours.
            std::array<int, 3> perm{0, 1, 2};
            std::shuffle(perm.begin(), perm.end(), rng);
            const auto flips = rng() & 7u;
            for (int ch = 0; ch < 3; ++ch) {
                const float* src = tex.data() + perm[ch] * plane;
                float* out = dst + ch * plane;
                if (flips >> ch & 1u)
                    for (std::size_t i = 0; i < plane; ++i) out[i] = 1.f - src[i];
                else
                    std::copy(src, src + plane, out);
            }
        } else {
            std::copy(tex.data(), tex.data() + 3 * plane, dst);
        }
        const auto& lab = data_.layouts[idx[k]].labels.data;
        std::copy(lab.begin(), lab.end(), seg.data.begin() + static_cast<std::ptrdiff_t>(k * plane));
        for (int l : lab) presence[static_cast<std::size_t>(k) * c + l] = 1;
    }

    ReAVAEModel& m = *model_;
    m.set_training(true);
    m.discriminator.update_spectral();

    const V real(real_t);
    const V raw = m.encoder.encode(real, seg);
    V styles, l_kld;
    if (mode == TrainMode::reconstruction) {
        styles = raw;
    } else {
        const GaussianStats<float> stats = m.heads.forward(raw);
        Tensor<float> eps(raw.shape());
        Rng rng(derive_seed(cfg_.optim.seed, {seed_tag::reparam, uit}));
        fill_normal<float>(rng, eps.data(), eps.data() + eps.size());
        styles = reparameterize(stats, eps);
        l_kld = kld_loss(stats, cfg_.loss.kld_present_only ? &presence : nullptr);
    }
    std::vector<std::uint64_t> noise(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k)
        noise[k] = derive_seed(cfg_.optim.seed, {seed_tag::noise, uit, static_cast<std::uint64_t>(k)});
    const V fake = m.generator.forward(styles, seg, noise);

    LossRecord rec;
    rec.iteration = it;
    rec.mode = mode;

    // Discriminator step on the detached fake.
    adam_d_->zero_grad();
    {
        const auto d_real = m.discriminator.forward(real, seg);
        const auto d_fake = m.discriminator.forward(fake.detach(), seg);
        const V l_d = hinge_d_loss(d_real.logits, d_fake.logits);
        require_finite("l_d", l_d, it);
        l_d.backward();
        adam_d_->step();
        rec.l_d = l_d.item();
    }

    // Generator step against the updated discriminator.
    {
        FrozenScope frozen(m.discriminator);
        const auto d_fake = m.discriminator.forward(fake, seg);
        std::vector<std::vector<V>> real_features;
        {
            ag::NoGradGuard guard;
            real_features = m.discriminator.forward(real, seg).features;
        }
        const V l_adv = hinge_g_loss(d_fake.logits);
        const V l_fm = feature_matching_loss(real_features, d_fake.features);
        const V l_perc = perceptual_loss(real, fake, *features_);
        const V l_rec = ag::add(l_perc, l_fm);
        const V l_ren = render_loss(real, fake, data_.views);
        if (!l_kld.defined()) l_kld = V(Tensor<float>({1}, 0.f));
        require_finite("l_adv", l_adv, it);
        require_finite("l_rec", l_rec, it);
        require_finite("l_ren", l_ren, it);
        require_finite("l_kld", l_kld, it);
        const V l_f = weighted_total(l_adv, l_rec, l_ren, l_kld, cfg_.loss, mode);
        require_finite("l_f", l_f, it);
        adam_g_->zero_grad();
        l_f.backward();
        adam_g_->step();

        rec.l_adv = l_adv.item();
        rec.l_rec = l_rec.item();
        rec.l_ren = l_ren.item();
        rec.l_kld = l_kld.item();
        rec.l_f = l_f.item();
        rec.l_perceptual = l_perc.item();
        rec.l_fm = l_fm.item();
    }
    ++iteration_;
    return rec;
}

Checkpoint Trainer::checkpoint()
{
    Checkpoint ckpt;
    model_->store(ckpt);
    ckpt.meta["iteration"] = iteration_;
    ckpt.meta["config"] = to_json(cfg_);
    ckpt.meta["adam_steps"] = {{"g", adam_g_->steps()}, {"d", adam_d_->steps()}};
    ckpt.meta["class_names"] = ClassPalette::standard(cfg_.model.num_classes).names;
    for (auto& [name, t] : adam_g_->named_state()) ckpt.add("optim." + name, *t);
    for (auto& [name, t] : adam_d_->named_state()) ckpt.add("optim." + name, *t);
    if (srn_) bundle_srn(ckpt, *srn_);
    return ckpt;
}

void Trainer::resume(const Checkpoint& ckpt)
{
    model_->restore(ckpt);
    auto restore_state = [&](nn::Adam<float>& opt, std::int64_t steps) {
        for (auto& [name, t] : opt.named_state()) {
            const Tensor<float>& src = ckpt.at("optim." + name);
            if (src.shape() != t->shape()) throw std::runtime_error("shape mismatch for 'optim." + name + "'");
            *t = src;
        }
        opt.set_steps(steps);
    };
    restore_state(*adam_g_, ckpt.meta.at("adam_steps").at("g").get<std::int64_t>());
    restore_state(*adam_d_, ckpt.meta.at("adam_steps").at("d").get<std::int64_t>());
    iteration_ = ckpt.meta.at("iteration").get<std::int64_t>();
    if (auto srn = bundled_srn(ckpt)) attach_super_resolution(std::move(srn));
}

Checkpoint train(Trainer& trainer, const std::filesystem::path& out_dir,
                 const std::function<void(const LossRecord&)>& on_step)
{
    const auto& optim = trainer.config().optim;
    std::ofstream csv;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        const auto path = out_dir / "loss.csv";
        const bool fresh = trainer.iteration() == 0 || !std::filesystem::exists(path);
        csv.open(path, fresh ? std::ios::trunc : std::ios::app);
        if (!csv) throw std::runtime_error("cannot write " + path.string());
        if (fresh) csv << loss_csv_header << '\n';
    }
    while (trainer.iteration() < optim.iterations) {
        LossRecord rec;
        try {
            rec = trainer.step();
        } catch (const TrainingDiverged& e) {
            if (!out_dir.empty()) {
                save_checkpoint(out_dir / "diverged.ckpt", trainer.checkpoint());
                spdlog::error("{}; state written to {}", e.what(), (out_dir / "diverged.ckpt").string());
            }
            throw;
        }
        if (csv.is_open()) csv << loss_csv_row(rec) << '\n' << std::flush;
        if (optim.log_every > 0 && (rec.iteration % optim.log_every == 0 || rec.iteration + 1 == optim.iterations))
            spdlog::info("iter {} [{}] l_f={:.4f} adv={:.4f} rec={:.4f} ren={:.4f} kld={:.3f} d={:.4f}",
                         rec.iteration, to_string(rec.mode), rec.l_f, rec.l_adv, rec.l_rec, rec.l_ren, rec.l_kld,
                         rec.l_d);
        if (on_step) on_step(rec);
        if (!out_dir.empty() && optim.checkpoint_every > 0 && trainer.iteration() % optim.checkpoint_every == 0 &&
            trainer.iteration() < optim.iterations)
            save_checkpoint(out_dir / fmt::format("ckpt_{:06d}.ckpt", trainer.iteration()), trainer.checkpoint());
    }
    Checkpoint final_ckpt = trainer.checkpoint();
    if (!out_dir.empty()) save_checkpoint(out_dir / "final.ckpt", final_ckpt);
    return final_ckpt;
}

} // namespace reavae
