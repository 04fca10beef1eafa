#include "reavae/core_data.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "reavae/kernels.hpp"
#include "reavae/rng.hpp"

namespace reavae {

TextureMap::TextureMap(Tensor<float> p) : pixels(std::move(p))
{
    if (pixels.rank() != 3 || pixels.dim(0) != 3)
        throw std::invalid_argument("texture must be 3×H×W, got " + to_string(pixels.shape()));
}

void TextureMap::validate() const
{
    if (pixels.rank() != 3 || pixels.dim(0) != 3 || pixels.dim(1) == 0 || pixels.dim(2) == 0)
        throw std::invalid_argument("texture must be a non-empty 3×H×W tensor");
    for (float v : pixels.values())
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f) throw std::domain_error("texture value outside [0,1]");
}

SegmentationMap::SegmentationMap(Labels l, int c) : labels(std::move(l)), num_classes(c)
{
    if (labels.batch != 1) throw std::invalid_argument("segmentation map holds a single layout");
    for (int i = 0; i < labels.height; ++i)
        for (int j = 0; j < labels.width; ++j) {
            const int v = labels.at(0, i, j);
            if (v < 0 || v >= c)
                throw std::out_of_range("label out of range: " + std::to_string(v) + " at (x=" + std::to_string(j) +
                                        ", y=" + std::to_string(i) + ")");
        }
}

std::vector<int> SegmentationMap::present_classes() const
{
    std::set<int> s(labels.data.begin(), labels.data.end());
    return {s.begin(), s.end()};
}

StyleMatrix::StyleMatrix(Tensor<float> r, std::vector<std::uint8_t> p) : rows(std::move(r)), presence(std::move(p))
{
    if (rows.rank() != 2 || static_cast<int>(presence.size()) != rows.dim(0))
        throw std::invalid_argument("style matrix must be C×W with C presence flags");
}

nlohmann::json style_to_json(const StyleMatrix& s)
{
    nlohmann::json rows = nlohmann::json::array();
    for (int c = 0; c < s.num_classes(); ++c) rows.push_back(std::vector<float>(s.row(c), s.row(c) + s.width()));
    nlohmann::json presence = nlohmann::json::array();
    for (auto p : s.presence) presence.push_back(p != 0);
    return {{"classes", s.num_classes()}, {"width", s.width()}, {"rows", rows}, {"presence", presence}};
}

StyleMatrix style_from_json(const nlohmann::json& j)
{
    const auto& rows = j.at("rows");
    if (!rows.is_array() || rows.empty()) throw std::invalid_argument("style JSON needs a non-empty rows array");
    const int c = static_cast<int>(rows.size());
    const int w = static_cast<int>(rows.at(0).size());
    StyleMatrix s(c, w);
    for (int k = 0; k < c; ++k) {
        const auto row = rows.at(k).get<std::vector<float>>();
        if (static_cast<int>(row.size()) != w) throw std::invalid_argument("style JSON rows have unequal length");
        std::copy(row.begin(), row.end(), s.row(k));
        for (float v : row)
            if (!std::isfinite(v)) throw std::invalid_argument("style JSON holds a non-finite value");
    }
    if (j.contains("presence")) {
        const auto& p = j.at("presence");
        if (static_cast<int>(p.size()) != c) throw std::invalid_argument("style JSON presence length mismatch");
        for (int k = 0; k < c; ++k) s.presence[k] = p.at(k).get<bool>() ? 1 : 0;
    } else {
        std::fill(s.presence.begin(), s.presence.end(), 1);
    }
    return s;
}

ClassPalette ClassPalette::standard(int num_classes)
{
    static const std::vector<std::string> names = {
        "background", "skin",   "hair",    "shirt", "pants",   "shoes", "jacket", "dress",   "skirt", "hat",
        "headband",   "gloves", "glasses", "belt",  "socks",   "scarf", "bag",    "sweater", "coat",  "shorts"};
    static const std::vector<std::array<std::uint8_t, 3>> colors = {
        {0, 0, 0},       {230, 184, 160}, {90, 60, 30},    {200, 40, 40},   {40, 60, 160},
        {60, 60, 60},    {120, 140, 60},  {200, 100, 180}, {240, 200, 60},  {100, 200, 200},
        {250, 130, 30},  {150, 90, 200},  {30, 160, 90},   {140, 100, 70},  {220, 220, 220},
        {180, 30, 100},  {90, 120, 110},  {70, 200, 120},  {130, 130, 200}, {200, 150, 100}};
    ClassPalette p;
    for (int c = 0; c < num_classes; ++c) {
        if (c < static_cast<int>(names.size())) {
            p.names.push_back(names[c]);
            p.colors.push_back(colors[c]);
        } else {
            p.names.push_back("class_" + std::to_string(c));
            const auto h = derive_seed(static_cast<std::uint64_t>(c), {});
            p.colors.push_back({static_cast<std::uint8_t>(h), static_cast<std::uint8_t>(h >> 8),
                                static_cast<std::uint8_t>(h >> 16)});
        }
    }
    return p;
}

TextureMap texture_from_png(std::span<const std::uint8_t> bytes)
{
    const RasterImage img = decode_png(bytes);
    if (img.width == 0 || img.height == 0) throw std::invalid_argument("zero-size image");
    if (img.channels < 3) throw std::invalid_argument("non-RGB content");
    const float scale = img.bit_depth == 16 ? 65535.0f : 255.0f;
    TextureMap tex(img.height, img.width);
    for (int i = 0; i < img.height; ++i)
        for (int j = 0; j < img.width; ++j)
            for (int c = 0; c < 3; ++c)
                tex.at(c, i, j) =
                    img.samples[(static_cast<std::size_t>(i) * img.width + j) * img.channels + c] / scale;
    return tex;
}

TextureMap load_texture(const std::filesystem::path& path)
{
    return texture_from_png(read_file(path));
}

std::vector<std::uint8_t> texture_to_png(const TextureMap& tex)
{
    const int h = tex.height(), w = tex.width();
    std::vector<std::uint8_t> data(static_cast<std::size_t>(h) * w * 3);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int c = 0; c < 3; ++c) {
                const float v = std::clamp(tex.at(c, i, j), 0.0f, 1.0f);
                data[(static_cast<std::size_t>(i) * w + j) * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
    return encode_png(w, h, 3, data);
}

void save_texture(const std::filesystem::path& path, const TextureMap& tex)
{
    write_file(path, texture_to_png(tex));
}

SegmentationMap segmentation_from_png(std::span<const std::uint8_t> bytes, int num_classes)
{
    const RasterImage img = decode_png(bytes);
    if (img.width == 0 || img.height == 0) throw std::invalid_argument("zero-size image");
    if (img.channels != 1 || img.bit_depth != 8)
        throw std::invalid_argument("segmentation must be a single-channel 8-bit image");
    Labels labels(1, img.height, img.width);
    for (std::size_t k = 0; k < labels.data.size(); ++k) labels.data[k] = img.samples[k];
    return SegmentationMap(std::move(labels), num_classes);
}

SegmentationMap load_segmentation(const std::filesystem::path& path, int num_classes)
{
    return segmentation_from_png(read_file(path), num_classes);
}

std::vector<std::uint8_t> segmentation_to_png(const SegmentationMap& seg)
{
    if (seg.num_classes > 256) throw std::invalid_argument("segmentation PNG supports at most 256 classes");
    std::vector<std::uint8_t> data(seg.labels.data.begin(), seg.labels.data.end());
    return encode_png(seg.width(), seg.height(), 1, data);
}

void save_segmentation(const std::filesystem::path& path, const SegmentationMap& seg)
{
    write_file(path, segmentation_to_png(seg));
}

Tensor<float> one_hot(const SegmentationMap& seg)
{
    return kernels::one_hot<float>(seg.labels, seg.num_classes).reshaped({seg.num_classes, seg.height(), seg.width()});
}

std::string to_string(PatternFamily f)
{
    switch (f) {
    case PatternFamily::solid: return "solid";
    case PatternFamily::stripes: return "stripes";
    case PatternFamily::checker: return "checker";
    }
    return "?";
}

PatternFamily pattern_family_from_string(const std::string& s)
{
    if (s == "solid") return PatternFamily::solid;
    if (s == "stripes") return PatternFamily::stripes;
    if (s == "checker") return PatternFamily::checker;
    throw std::invalid_argument("unknown pattern family '" + s + "'");
}

SynthSpec SynthSpec::desk()
{
    SynthSpec s;
    s.families = {PatternFamily::solid, PatternFamily::solid, PatternFamily::stripes, PatternFamily::checker,
                  PatternFamily::solid};
    return s;
}

SynthSpec SynthSpec::sized(int num_classes, int resolution)
{
    SynthSpec s = desk();
    s.num_classes = num_classes;
    s.resolution = resolution;
    s.families.resize(static_cast<std::size_t>(std::max(num_classes, 0)), PatternFamily::solid);
    return s;
}

void SynthSpec::validate() const
{
    if (num_classes < 2) throw std::invalid_argument("synthetic spec needs at least 2 classes");
    if (resolution < 16) throw std::invalid_argument("synthetic spec resolution must be at least 16");
    if (!families.empty() && static_cast<int>(families.size()) != num_classes)
        throw std::invalid_argument("synthetic spec needs one pattern family per class");
    if (!(min_extent > 0 && min_extent <= max_extent && max_extent <= 1))
        throw std::invalid_argument("synthetic spec extents must satisfy 0 < min <= max <= 1");
    if (min_period < 2 || min_period > max_period) throw std::invalid_argument("synthetic spec period range invalid");
}

nlohmann::json descriptors_to_json(const std::vector<PatternDescriptor>& d)
{
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : d) {
        nlohmann::json params = {{"color", p.color}};
        if (p.family != PatternFamily::solid) {
            params["color_b"] = p.color_b;
            params["period"] = p.period;
            params["orientation"] = p.orientation == 0 ? "vertical" : "horizontal";
            params["phase"] = p.phase;
        }
        out.push_back({{"class", p.class_id}, {"family", to_string(p.family)}, {"params", params}, {"seed", p.seed}});
    }
    return out;
}

namespace {

struct Box {
    int y0, x0, h, w;
    bool ellipse;
    bool overlaps(const Box& o, int gap) const
    {
        return !(x0 + w + gap <= o.x0 || o.x0 + o.w + gap <= x0 || y0 + h + gap <= o.y0 || o.y0 + o.h + gap <= y0);
    }
    bool contains(int i, int j) const
    {
        if (i < y0 || i >= y0 + h || j < x0 || j >= x0 + w) return false;
        if (!ellipse) return true;
        const double ry = h / 2.0, rx = w / 2.0;
        const double dy = (i + 0.5 - y0 - ry) / ry, dx = (j + 0.5 - x0 - rx) / rx;
        return dx * dx + dy * dy <= 1.0;
    }
};

float quantized_channel(Rng& rng, int lo, int hi)
{
    return std::uniform_int_distribution<int>(lo, hi)(rng) / 255.0f;
}

PatternDescriptor draw_pattern(const SynthSpec& spec, int c, std::uint64_t seed)
{
    PatternDescriptor d;
    d.class_id = c;
    d.family = spec.families.empty() ? (c == 0 ? PatternFamily::solid : static_cast<PatternFamily>(c % 3))
                                     : spec.families[c];
    d.seed = derive_seed(seed, {seed_tag::pattern, static_cast<std::uint64_t>(c)});
    Rng rng(d.seed);
    for (auto& v : d.color) v = quantized_channel(rng, 20, 235);
    if (d.family != PatternFamily::solid) {
        for (int k = 0; k < 3; ++k) {
            const int base = static_cast<int>(std::lround(d.color[k] * 255.0f));
            const int delta = std::uniform_int_distribution<int>(40, 90)(rng);
            const int other = base + delta <= 255 ? base + delta : base - delta;
            d.color_b[k] = other / 255.0f;
        }
        d.period = std::uniform_int_distribution<int>(spec.min_period / 2, spec.max_period / 2)(rng) * 2;
        d.orientation = std::uniform_int_distribution<int>(0, 1)(rng);
        d.phase = std::uniform_int_distribution<int>(0, d.period - 1)(rng);
    } else {
        d.color_b = d.color;
    }
    return d;
}

std::array<float, 3> pattern_color(const PatternDescriptor& d, int i, int j)
{
    if (d.family == PatternFamily::solid) return d.color;
    const int half = d.period / 2;
    bool second = false;
    if (d.family == PatternFamily::stripes) {
        const int t = (d.orientation == 0 ? j : i) + d.phase;
        second = (t / half) % 2 == 1;
    } else {
        second = (((i + d.phase) / half) + ((j + d.phase) / half)) % 2 == 1;
    }
    return second ? d.color_b : d.color;
}

} // namespace

SyntheticSample generate_synthetic_sample(const SynthSpec& spec, std::uint64_t seed)
{
    spec.validate();
    const int res = spec.resolution;
    Rng rng(derive_seed(seed, {seed_tag::layout}));
    std::uniform_int_distribution<int> extent(static_cast<int>(std::lround(spec.min_extent * res)),
                                              static_cast<int>(std::lround(spec.max_extent * res)));
    std::vector<Box> boxes;
    int attempts = 0;
    while (static_cast<int>(boxes.size()) < spec.num_classes - 1) {
        if (++attempts > spec.max_placement_attempts)
            throw std::runtime_error("synthetic layout placement failed after " +
                                     std::to_string(spec.max_placement_attempts) + " attempts: spec too crowded");
        Box b{};
        b.h = extent(rng);
        b.w = extent(rng);
        b.y0 = std::uniform_int_distribution<int>(1, res - b.h - 1)(rng);
        b.x0 = std::uniform_int_distribution<int>(1, res - b.w - 1)(rng);
        b.ellipse = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
        bool clash = false;
        for (const Box& o : boxes) clash = clash || b.overlaps(o, 2);
        if (!clash) boxes.push_back(b);
    }

    Labels labels(1, res, res, 0);
    for (int k = 0; k < static_cast<int>(boxes.size()); ++k)
        for (int i = 0; i < res; ++i)
            for (int j = 0; j < res; ++j)
                if (boxes[k].contains(i, j)) labels.at(0, i, j) = k + 1;

    SyntheticSample s;
    for (int c = 0; c < spec.num_classes; ++c) s.descriptors.push_back(draw_pattern(spec, c, seed));
    s.texture = TextureMap(res, res);
    for (int i = 0; i < res; ++i)
        for (int j = 0; j < res; ++j) {
            const auto col = pattern_color(s.descriptors[labels.at(0, i, j)], i, j);
            for (int ch = 0; ch < 3; ++ch) s.texture.at(ch, i, j) = col[ch];
        }
    s.segmentation = SegmentationMap(std::move(labels), spec.num_classes);
    return s;
}

std::vector<SyntheticSample> generate_synthetic_dataset(const SynthSpec& spec, int count, std::uint64_t seed)
{
    std::vector<SyntheticSample> out;
    for (int i = 0; i < count; ++i)
        out.push_back(generate_synthetic_sample(spec, derive_seed(seed, {seed_tag::layout, static_cast<std::uint64_t>(i)})));
    return out;
}

} // namespace reavae
