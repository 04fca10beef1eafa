#pragma once

#include <memory>
#include <optional>

#include "reavae/core_data.hpp"
#include "reavae/model.hpp"
#include "reavae/super_resolution.hpp"

namespace reavae {

enum class InferMode { reconstruct, transfer, random, mix };
std::string to_string(InferMode m);
InferMode infer_mode_from_string(const std::string& s);

/// Where one style row comes from when assembling a mixed style matrix.
struct StyleSource {
    enum class Kind { encoded, random, fixed };
    Kind kind = Kind::encoded;
    /// random: overrides the request seed for this class.
    std::optional<std::uint64_t> seed;
    /// fixed: the row itself (length W).
    std::vector<float> vector;

    static StyleSource encoded() { return {}; }
    static StyleSource random(std::optional<std::uint64_t> s = std::nullopt) { return {Kind::random, s, {}}; }
    static StyleSource fixed(std::vector<float> v) { return {Kind::fixed, std::nullopt, std::move(v)}; }
};

std::string to_string(StyleSource::Kind k);

/// Seed of the generator noise for a user seed.
constexpr std::uint64_t noise_seed_for(std::uint64_t seed) noexcept
{
    return derive_seed(seed, {seed_tag::noise});
}

/// Row c of a random style matrix is drawn from derive_seed(seed, {style, c}),
/// so each class's row is independent of which other classes are sampled.
StyleMatrix sample_styles(std::uint64_t seed, const std::vector<int>& classes, int num_classes, int style_dim);

/// (1 − t)·a + t·b; presence is the union. Throws for t outside [0, 1].
StyleMatrix interpolate_styles(const StyleMatrix& a, const StyleMatrix& b, double t);

/// Read-only view of a trained checkpoint. All methods are const and safe to
/// call concurrently: the networks run in eval mode without gradients, so no
/// shared state is touched after construction.
class InferenceEngine {
public:
    /// `hash` identifies the checkpoint (normally the SHA-256 of its file).
    InferenceEngine(const Checkpoint& ckpt, std::string hash);
    static std::unique_ptr<InferenceEngine> from_file(const std::filesystem::path& path);

    const ModelConfig& config() const noexcept { return model_->config(); }
    const ReAVAEModel& model() const noexcept { return *model_; }
    int num_classes() const noexcept { return config().num_classes; }
    int style_dim() const noexcept { return config().style_dim; }
    int resolution() const noexcept { return config().resolution; }
    const std::vector<std::string>& class_names() const noexcept { return class_names_; }
    const std::string& checkpoint_hash() const noexcept { return hash_; }

    bool has_super_resolution() const noexcept { return srn_ != nullptr; }
    /// 1 when no SRN is available.
    int super_resolution_factor() const noexcept { return srn_ ? srn_->config().factor : 1; }
    void set_super_resolution(std::shared_ptr<SuperResolution<float>> srn);

    /// Raw per-class means of the encoder features; absent classes are zero rows.
    StyleMatrix encode_styles(const TextureMap& tex, const SegmentationMap& seg) const;
    StyleMatrix sample_styles(std::uint64_t seed, const std::vector<int>& classes) const;
    StyleMatrix sample_styles(std::uint64_t seed) const;

    /// Builds a matrix class by class; `encoded` is needed only when some source is encoded.
    StyleMatrix assemble_styles(const std::vector<StyleSource>& sources, const StyleMatrix* encoded,
                                std::uint64_t seed) const;

    TextureMap generate(const StyleMatrix& styles, const SegmentationMap& layout, std::uint64_t seed) const;

    TextureMap reconstruct(const TextureMap& tex, const SegmentationMap& seg, std::uint64_t seed = 0) const;
    TextureMap transfer(const TextureMap& tex, const SegmentationMap& seg, const SegmentationMap& layout,
                        std::uint64_t seed = 0) const;
    TextureMap random(const SegmentationMap& layout, std::uint64_t seed) const;
    TextureMap mix(const TextureMap* tex, const SegmentationMap* seg, const SegmentationMap& layout,
                   const std::vector<StyleSource>& sources, std::uint64_t seed) const;

    /// Throws when no SRN is available.
    TextureMap super_resolve(const TextureMap& tex) const;

    void validate_layout(const SegmentationMap& layout) const;

private:
    std::unique_ptr<ReAVAEModel> model_;
    std::shared_ptr<SuperResolution<float>> srn_;
    std::vector<std::string> class_names_;
    std::string hash_;
};

} // namespace reavae
