#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "reavae/tensor.hpp"

namespace reavae {

/// RGB image in [0,1], stored 3×H×W.
struct TextureMap {
    Tensor<float> pixels;

    TextureMap() = default;
    explicit TextureMap(Tensor<float> p);
    TextureMap(int height, int width, float fill = 0.0f) : pixels({3, height, width}, fill) {}

    int height() const { return pixels.dim(1); }
    int width() const { return pixels.dim(2); }
    float& at(int c, int i, int j) { return pixels[(static_cast<std::size_t>(c) * height() + i) * width() + j]; }
    float at(int c, int i, int j) const { return pixels[(static_cast<std::size_t>(c) * height() + i) * width() + j]; }

    /// Throws unless every value is finite and within [0,1].
    void validate() const;
    bool operator==(const TextureMap&) const = default;
};

struct SegmentationMap {
    Labels labels; // batch 1
    int num_classes = 0;

    SegmentationMap() = default;
    SegmentationMap(Labels l, int c);

    int height() const { return labels.height; }
    int width() const { return labels.width; }
    int at(int i, int j) const { return labels.at(0, i, j); }
    /// Sorted unique labels.
    std::vector<int> present_classes() const;
    bool operator==(const SegmentationMap&) const = default;
};

/// C×W per-class style rows plus a presence flag per class.
struct StyleMatrix {
    Tensor<float> rows;
    std::vector<std::uint8_t> presence;

    StyleMatrix() = default;
    StyleMatrix(int classes, int width) : rows({classes, width}), presence(classes, 0) {}
    StyleMatrix(Tensor<float> r, std::vector<std::uint8_t> p);

    int num_classes() const { return rows.dim(0); }
    int width() const { return rows.dim(1); }
    float* row(int c) { return rows.data() + static_cast<std::size_t>(c) * width(); }
    const float* row(int c) const { return rows.data() + static_cast<std::size_t>(c) * width(); }
    bool operator==(const StyleMatrix&) const = default;
};

nlohmann::json style_to_json(const StyleMatrix& s);
StyleMatrix style_from_json(const nlohmann::json& j);

struct ClassPalette {
    std::vector<std::string> names;
    std::vector<std::array<std::uint8_t, 3>> colors;

    static ClassPalette standard(int num_classes);
    int size() const { return static_cast<int>(names.size()); }
};

// ---- PNG -------------------------------------------------------------------

/// Decoded raster with samples widened to 16 bits (8-bit data keeps its range).
struct RasterImage {
    int width = 0, height = 0, channels = 0, bit_depth = 8;
    std::vector<std::uint16_t> samples;
};

RasterImage decode_png(std::span<const std::uint8_t> bytes);
RasterImage read_png(const std::filesystem::path& path);

/// Deterministic 8-bit encoder (fixed zlib level, no ancillary chunks), so
/// identical pixels always give identical files.
std::vector<std::uint8_t> encode_png(int width, int height, int channels, std::span<const std::uint8_t> data);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

TextureMap texture_from_png(std::span<const std::uint8_t> bytes);
TextureMap load_texture(const std::filesystem::path& path);
std::vector<std::uint8_t> texture_to_png(const TextureMap& tex);
void save_texture(const std::filesystem::path& path, const TextureMap& tex);

SegmentationMap segmentation_from_png(std::span<const std::uint8_t> bytes, int num_classes);
SegmentationMap load_segmentation(const std::filesystem::path& path, int num_classes);
std::vector<std::uint8_t> segmentation_to_png(const SegmentationMap& seg);
void save_segmentation(const std::filesystem::path& path, const SegmentationMap& seg);

/// C×H×W indicator planes.
Tensor<float> one_hot(const SegmentationMap& seg);

// ---- synthetic data --------------------------------------------------------

enum class PatternFamily { solid, stripes, checker };
std::string to_string(PatternFamily f);
PatternFamily pattern_family_from_string(const std::string& s);

struct SynthSpec {
    int num_classes = 5;
    int resolution = 64;
    /// Family per class; class 0 is the background.
    std::vector<PatternFamily> families;
    /// Shape side lengths as fractions of the resolution.
    double min_extent = 0.2, max_extent = 0.42;
    /// Stripe/checker full period range in pixels.
    int min_period = 16, max_period = 32;
    int max_placement_attempts = 2000;

    static SynthSpec desk();
    /// desk() with the class count and resolution replaced; extra classes are solid.
    static SynthSpec sized(int num_classes, int resolution);
    void validate() const;
};

struct PatternDescriptor {
    int class_id = 0;
    PatternFamily family = PatternFamily::solid;
    std::array<float, 3> color{};
    std::array<float, 3> color_b{};
    int period = 0;
    int orientation = 0; // 0 vertical stripes, 1 horizontal
    int phase = 0;
    std::uint64_t seed = 0;
};

nlohmann::json descriptors_to_json(const std::vector<PatternDescriptor>& d);

struct SyntheticSample {
    TextureMap texture;
    SegmentationMap segmentation;
    std::vector<PatternDescriptor> descriptors;
};

/// Pure function of (spec, seed).
SyntheticSample generate_synthetic_sample(const SynthSpec& spec, std::uint64_t seed);

/// Sample i uses derive_seed(seed, {layout, i}).
std::vector<SyntheticSample> generate_synthetic_dataset(const SynthSpec& spec, int count, std::uint64_t seed);

} // namespace reavae
