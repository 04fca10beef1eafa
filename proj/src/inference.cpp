#include "reavae/inference.hpp"

#include <spdlog/fmt/fmt.h>

namespace reavae {

using V = ag::Var<float>;

std::string to_string(InferMode m)
{
    switch (m) {
    case InferMode::reconstruct: return "reconstruct";
    case InferMode::transfer: return "transfer";
    case InferMode::random: return "random";
    case InferMode::mix: return "mix";
    }
    return "?";
}

InferMode infer_mode_from_string(const std::string& s)
{
    for (InferMode m : {InferMode::reconstruct, InferMode::transfer, InferMode::random, InferMode::mix})
        if (to_string(m) == s) return m;
    throw std::invalid_argument("unknown mode '" + s + "'");
}

std::string to_string(StyleSource::Kind k)
{
    switch (k) {
    case StyleSource::Kind::encoded: return "encoded";
    case StyleSource::Kind::random: return "random";
    case StyleSource::Kind::fixed: return "fixed";
    }
    return "?";
}

namespace {

void random_row(StyleMatrix& s, int c, std::uint64_t seed)
{
    Rng rng(derive_seed(seed, {seed_tag::style, static_cast<std::uint64_t>(c)}));
    fill_normal<float>(rng, s.row(c), s.row(c) + s.width());
    s.presence[c] = 1;
}

} // namespace

StyleMatrix sample_styles(std::uint64_t seed, const std::vector<int>& classes, int num_classes, int style_dim)
{
    StyleMatrix s(num_classes, style_dim);
    for (int c : classes) {
        if (c < 0 || c >= num_classes)
            throw std::invalid_argument(fmt::format("class index {} out of range [0, {})", c, num_classes));
        random_row(s, c, seed);
    }
    return s;
}

StyleMatrix interpolate_styles(const StyleMatrix& a, const StyleMatrix& b, double t)
{
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument(fmt::format("interpolation t={} outside [0, 1]", t));
    a.rows.require_same_shape(b.rows, "interpolate_styles");
    StyleMatrix out = a;
    for (std::size_t i = 0; i < out.rows.size(); ++i)
        out.rows[i] = static_cast<float>((1.0 - t) * a.rows[i] + t * b.rows[i]);
    for (std::size_t c = 0; c < out.presence.size(); ++c) out.presence[c] = a.presence[c] || b.presence[c];
    return out;
}

InferenceEngine::InferenceEngine(const Checkpoint& ckpt, std::string hash)
    : model_(ReAVAEModel::from_checkpoint(ckpt)), hash_(std::move(hash))
{
    model_->set_training(false);
    set_super_resolution(bundled_srn(ckpt));
    if (ckpt.meta.contains("class_names"))
        class_names_ = ckpt.meta["class_names"].get<std::vector<std::string>>();
    if (static_cast<int>(class_names_.size()) != num_classes())
        class_names_ = ClassPalette::standard(num_classes()).names;
}

std::unique_ptr<InferenceEngine> InferenceEngine::from_file(const std::filesystem::path& path)
{
    const auto bytes = read_file(path);
    return std::make_unique<InferenceEngine>(decode_checkpoint(bytes), content_hash(bytes));
}

void InferenceEngine::set_super_resolution(std::shared_ptr<SuperResolution<float>> srn)
{
    if (srn) {
        srn->set_training(false);
        srn->set_requires_grad(false);
    }
    srn_ = std::move(srn);
}

void InferenceEngine::validate_layout(const SegmentationMap& layout) const
{
    if (layout.height() != resolution() || layout.width() != resolution())
        throw std::invalid_argument(fmt::format("layout is {}x{}, the model expects {}x{}", layout.width(),
                                                layout.height(), resolution(), resolution()));
    for (int i = 0; i < layout.height(); ++i)
        for (int j = 0; j < layout.width(); ++j)
            if (layout.at(i, j) < 0 || layout.at(i, j) >= num_classes())
                throw std::invalid_argument(fmt::format("label {} >= {} at (x={}, y={})", layout.at(i, j),
                                                        num_classes(), j, i));
}

StyleMatrix InferenceEngine::encode_styles(const TextureMap& tex, const SegmentationMap& seg) const
{
    validate_layout(seg);
    if (tex.height() != seg.height() || tex.width() != seg.width())
        throw std::invalid_argument("exemplar and its layout differ in size");
    ag::NoGradGuard guard;
    const V raw = model_->encoder.encode(V(tex.pixels.reshaped({1, 3, tex.height(), tex.width()})), seg.labels);
    Tensor<float> rows = raw.value().reshaped({num_classes(), style_dim()});
    std::vector<std::uint8_t> presence(num_classes(), 0);
    for (int c : seg.present_classes()) presence[c] = 1;
    return StyleMatrix(std::move(rows), std::move(presence));
}

StyleMatrix InferenceEngine::sample_styles(std::uint64_t seed, const std::vector<int>& classes) const
{
    return reavae::sample_styles(seed, classes, num_classes(), style_dim());
}

StyleMatrix InferenceEngine::sample_styles(std::uint64_t seed) const
{
    std::vector<int> all(num_classes());
    for (int c = 0; c < num_classes(); ++c) all[c] = c;
    return sample_styles(seed, all);
}

StyleMatrix InferenceEngine::assemble_styles(const std::vector<StyleSource>& sources, const StyleMatrix* encoded,
                                             std::uint64_t seed) const
{
    if (static_cast<int>(sources.size()) != num_classes())
        throw std::invalid_argument(fmt::format("expected {} style sources, got {}", num_classes(), sources.size()));
    StyleMatrix s(num_classes(), style_dim());
    for (int c = 0; c < num_classes(); ++c) {
        const StyleSource& src = sources[c];
        switch (src.kind) {
        case StyleSource::Kind::encoded:
            if (!encoded) throw std::invalid_argument(fmt::format("class {} is encoded but no exemplar was given", c));
            std::copy(encoded->row(c), encoded->row(c) + style_dim(), s.row(c));
            s.presence[c] = encoded->presence[c];
            break;
        case StyleSource::Kind::random: random_row(s, c, src.seed.value_or(seed)); break;
        case StyleSource::Kind::fixed:
            if (static_cast<int>(src.vector.size()) != style_dim())
                throw std::invalid_argument(fmt::format("fixed style for class {} has length {}, expected {}", c,
                                                        src.vector.size(), style_dim()));
            std::copy(src.vector.begin(), src.vector.end(), s.row(c));
            s.presence[c] = 1;
            break;
        }
    }
    return s;
}

TextureMap InferenceEngine::generate(const StyleMatrix& styles, const SegmentationMap& layout,
                                     std::uint64_t seed) const
{
    validate_layout(layout);
    if (styles.num_classes() != num_classes() || styles.width() != style_dim())
        throw std::invalid_argument(fmt::format("style matrix is {}x{}, the model expects {}x{}",
                                                styles.num_classes(), styles.width(), num_classes(), style_dim()));
    ag::NoGradGuard guard;
    const V s(styles.rows.reshaped({1, num_classes(), style_dim()}));
    const V out = model_->generator.forward(s, layout.labels, {noise_seed_for(seed)});
    return TextureMap(out.value().reshaped({3, resolution(), resolution()}));
}

TextureMap InferenceEngine::reconstruct(const TextureMap& tex, const SegmentationMap& seg, std::uint64_t seed) const
{
    return generate(encode_styles(tex, seg), seg, seed);
}

TextureMap InferenceEngine::transfer(const TextureMap& tex, const SegmentationMap& seg,
                                     const SegmentationMap& layout, std::uint64_t seed) const
{
    if (seg.num_classes != layout.num_classes)
        throw std::invalid_argument("exemplar layout and target layout use different class counts");
    return generate(encode_styles(tex, seg), layout, seed);
}

TextureMap InferenceEngine::random(const SegmentationMap& layout, std::uint64_t seed) const
{
    return generate(sample_styles(seed), layout, seed);
}

TextureMap InferenceEngine::mix(const TextureMap* tex, const SegmentationMap* seg, const SegmentationMap& layout,
                                const std::vector<StyleSource>& sources, std::uint64_t seed) const
{
    std::optional<StyleMatrix> encoded;
    if (tex && seg) encoded = encode_styles(*tex, *seg);
    return generate(assemble_styles(sources, encoded ? &*encoded : nullptr, seed), layout, seed);
}

TextureMap InferenceEngine::super_resolve(const TextureMap& tex) const
{
    if (!srn_) throw std::runtime_error("checkpoint has no super-resolution network");
    return reavae::super_resolve(*srn_, tex);
}

} // namespace reavae
