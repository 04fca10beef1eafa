#include <doctest.h>

#include <set>

#include "reavae/config.hpp"
#include "reavae/core_data.hpp"
#include "test_util.hpp"

using namespace reavae;
using namespace testutil;

namespace {

std::vector<std::uint8_t> rgb_png(int w, int h, std::uint8_t value)
{
    std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h * 3, value);
    return encode_png(w, h, 3, px);
}

} // namespace

TEST_CASE("an all-white RGB PNG loads as ones and 128 maps to 128/255")
{
    const TextureMap white = texture_from_png(rgb_png(8, 4, 255));
    CHECK(white.height() == 4);
    CHECK(white.width() == 8);
    for (float v : white.pixels.values()) CHECK(v == 1.0f);
    const TextureMap mid = texture_from_png(rgb_png(2, 2, 128));
    CHECK(mid.at(1, 1, 1) == doctest::Approx(128.0 / 255.0).epsilon(1e-7));
}

TEST_CASE("a greyscale PNG is rejected as a texture")
{
    const std::vector<std::uint8_t> px(16, 7);
    CHECK_THROWS_WITH(texture_from_png(encode_png(4, 4, 1, px)), doctest::Contains("non-RGB content"));
}

TEST_CASE("texture round trip through 8-bit PNG is within 1/255")
{
    Rng rng(1);
    TextureMap t(random_tensor<float>({3, 9, 7}, rng, 0, 1));
    const TextureMap back = texture_from_png(texture_to_png(t));
    CHECK(max_abs_diff(t.pixels, back.pixels) <= 0.5 / 255 + 1e-7);
    CHECK(texture_to_png(t) == texture_to_png(back));
}

TEST_CASE("segmentation loading checks the class range and reports presence")
{
    Labels l(1, 3, 3);
    l.data = {0, 3, 3, 7, 0, 0, 0, 0, 3};
    const SegmentationMap seg(l, 8);
    const auto back = segmentation_from_png(segmentation_to_png(seg), 8);
    CHECK(back == seg);
    CHECK(back.present_classes() == std::vector<int>{0, 3, 7});

    Labels zeros(1, 2, 2);
    CHECK(SegmentationMap(zeros, 20).present_classes() == std::vector<int>{0});
    Labels bad(1, 2, 2);
    bad.data = {0, 0, 20, 0};
    CHECK_THROWS_WITH(SegmentationMap(bad, 20), doctest::Contains("(x=0, y=1)"));
}

TEST_CASE("one-hot planes sum to one and invert by argmax")
{
    Rng rng(2);
    const SegmentationMap seg(random_labels(1, 6, 5, 4, rng), 4);
    const Tensor<float> oh = one_hot(seg);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 5; ++j) {
            float s = 0;
            int arg = -1;
            for (int c = 0; c < 4; ++c) {
                const float v = oh[(static_cast<std::size_t>(c) * 6 + i) * 5 + j];
                s += v;
                if (v == 1.0f) arg = c;
            }
            CHECK(s == 1.0f);
            CHECK(arg == seg.at(i, j));
        }
    Labels one(1, 1, 1);
    one.data = {2};
    const Tensor<float> v = one_hot(SegmentationMap(one, 4));
    CHECK(std::vector<float>(v.values().begin(), v.values().end()) == std::vector<float>{0, 0, 1, 0});
}

TEST_CASE("synthetic samples are a pure function of spec and seed")
{
    const SynthSpec spec = SynthSpec::desk();
    const auto a = generate_synthetic_sample(spec, 42);
    const auto b = generate_synthetic_sample(spec, 42);
    CHECK(a.texture == b.texture);
    CHECK(a.segmentation == b.segmentation);
    CHECK(descriptors_to_json(a.descriptors) == descriptors_to_json(b.descriptors));
    const auto c = generate_synthetic_sample(spec, 43);
    CHECK_FALSE(a.texture == c.texture);
    // Every class gets a region.
    CHECK(a.segmentation.present_classes().size() == static_cast<std::size_t>(spec.num_classes));
}

TEST_CASE("solid regions have zero variance and the descriptor colour as mean")
{
    SynthSpec spec = SynthSpec::desk();
    spec.families.assign(spec.num_classes, PatternFamily::solid);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto s = generate_synthetic_sample(spec, seed);
        for (const auto& d : s.descriptors) {
            for (int ch = 0; ch < 3; ++ch)
                for (int i = 0; i < spec.resolution; ++i)
                    for (int j = 0; j < spec.resolution; ++j)
                        if (s.segmentation.at(i, j) == d.class_id)
                            CHECK(s.texture.at(ch, i, j) == d.color[ch]);
        }
    }
}

TEST_CASE("patterned regions average to the descriptor colour pair")
{
    const SynthSpec spec = SynthSpec::desk();
    const auto s = generate_synthetic_sample(spec, 9);
    for (const auto& d : s.descriptors) {
        std::array<double, 3> mean{};
        int n = 0;
        for (int i = 0; i < spec.resolution; ++i)
            for (int j = 0; j < spec.resolution; ++j)
                if (s.segmentation.at(i, j) == d.class_id) {
                    ++n;
                    for (int ch = 0; ch < 3; ++ch) mean[ch] += s.texture.at(ch, i, j);
                }
        REQUIRE(n > 0);
        for (int ch = 0; ch < 3; ++ch) {
            const double m = mean[ch] / n;
            const double lo = std::min(d.color[ch], d.color_b[ch]), hi = std::max(d.color[ch], d.color_b[ch]);
            CHECK(m >= lo - 1e-6);
            CHECK(m <= hi + 1e-6);
        }
    }
}

TEST_CASE("style matrices survive a JSON round trip")
{
    Rng rng(3);
    StyleMatrix s(random_tensor<float>({4, 6}, rng), {1, 0, 1, 1});
    CHECK(style_from_json(style_to_json(s)) == s);
    auto j = style_to_json(s);
    j["rows"][0].erase(0);
    CHECK_THROWS(style_from_json(j));
}

TEST_CASE("train config parses INI sections and rejects unknown keys")
{
    const TrainConfig cfg = parse_train_config("[model]\nstyle_dim = 32\n[loss]\nlambda_ren = 5\n[optim]\n"
                                               "iterations = 10\n[data]\nsynthetic_samples = 3\n");
    CHECK(cfg.model.style_dim == 32);
    CHECK(cfg.loss.lambda_ren == 5.0);
    CHECK(cfg.optim.iterations == 10);
    CHECK(cfg.data.synthetic_samples == 3);
    CHECK(cfg.loss.lambda_rec == 10.0);
    CHECK(cfg.optim.beta1 == 0.0);
    CHECK(cfg.optim.beta2 == 0.999);
    CHECK_THROWS(parse_train_config("[model]\nbogus = 1\n"));
    CHECK_THROWS(parse_train_config("[extra]\nx = 1\n"));
    CHECK(parse_train_config(format_train_config(cfg)).model.style_dim == 32);
    CHECK(train_config_from_json(to_json(cfg)).loss.lambda_ren == 5.0);
}

TEST_CASE("the full preset keeps the full-scale sizes")
{
    const TrainConfig p = TrainConfig::full();
    CHECK(p.model.num_classes == 20);
    CHECK(p.model.style_dim == 512);
    CHECK(p.model.resolution == 256);
    CHECK(p.loss.lambda_rec == 10.0);
    CHECK(p.loss.lambda_ren == 25.0);
    CHECK(p.loss.lambda_kld == 0.01);
    CHECK(p.loss.num_views == 4);
    CHECK(p.optim.lr == 1e-4);
    CHECK(p.optim.batch_size == 4);
    p.validate();
}
