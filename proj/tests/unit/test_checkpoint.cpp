#include <doctest.h>

#include "reavae/checkpoint.hpp"
#include "reavae/super_resolution.hpp"
#include "test_util.hpp"

using namespace reavae;
using namespace testutil;

TEST_CASE("checkpoints round trip byte-identically")
{
    Rng rng(1);
    Checkpoint c;
    c.meta = {{"iteration", 7}};
    c.add("a.weight", random_tensor<float>({2, 3}, rng));
    c.add("b", random_tensor<float>({5}, rng));
    const auto bytes = encode_checkpoint(c);
    const Checkpoint back = decode_checkpoint(bytes);
    CHECK(back.meta["iteration"] == 7);
    CHECK(back.at("a.weight") == c.at("a.weight"));
    CHECK(encode_checkpoint(back) == bytes);
    CHECK_THROWS(c.add("b", Tensor<float>({1})));
}

TEST_CASE("corrupt checkpoints are rejected with specific errors")
{
    Checkpoint c;
    c.add("x", Tensor<float>({4}, 1.f));
    auto bytes = encode_checkpoint(c);
    auto cut = bytes;
    cut.resize(cut.size() - 3);
    CHECK_THROWS_WITH(decode_checkpoint(cut), doctest::Contains("blob length mismatch"));
    auto extra = bytes;
    extra.push_back(0);
    CHECK_THROWS_WITH(decode_checkpoint(extra), doctest::Contains("blob length mismatch"));

    std::string text(bytes.begin(), bytes.end());
    const auto pos = text.find("\"version\":1");
    REQUIRE(pos != std::string::npos);
    bytes[pos + 10] = '2';
    CHECK_THROWS_WITH(decode_checkpoint(bytes), doctest::Contains("version mismatch"));
}

TEST_CASE("module state restores and shape mismatches are reported")
{
    Rng rng(2);
    nn::Conv2d<float> a(3, 4, 3, rng), b(3, 4, 3, rng), wrong(3, 5, 3, rng);
    Checkpoint c;
    store_module(c, a, "conv.");
    CHECK(c.tensors.size() == a.named_parameters().size());
    restore_module(c, b, "conv.");
    CHECK(module_hash(a) == module_hash(b));
    CHECK_THROWS_WITH(restore_module(c, wrong, "conv."), doctest::Contains("shape mismatch"));
    CHECK_THROWS_WITH(restore_module(c, b, "other."), doctest::Contains("missing"));
}

TEST_CASE("content hashes are SHA-256")
{
    const std::string abc = "abc";
    CHECK(content_hash({reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size()}) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("an untrained SRN reproduces bicubic and constants stay constant")
{
    SuperResolution<float> net(SRNConfig{});
    Rng rng(3);
    const TextureMap low(random_tensor<float>({3, 8, 8}, rng, 0, 1));
    const TextureMap up = super_resolve(net, low);
    CHECK(up.height() == 32);
    CHECK(max_abs_diff(up.pixels, bicubic_texture(low, 4).pixels) < 1e-6);
    const TextureMap flat = bicubic_texture(TextureMap(4, 4, 0.3f), 4);
    for (float v : flat.pixels.values()) CHECK(v == doctest::Approx(0.3f));
}

TEST_CASE("SRN training is deterministic and checkpoints restore it")
{
    Rng rng(4);
    std::vector<TextureMap> high;
    for (int i = 0; i < 4; ++i) high.emplace_back(random_tensor<float>({3, 16, 16}, rng, 0, 1));
    SRNConfig cfg;
    cfg.channels = 8;
    cfg.blocks = 1;
    SRNTrainConfig tc;
    tc.iterations = 5;
    tc.batch_size = 2;
    SuperResolution<float> a(cfg), b(cfg);
    const auto la = train_srn(a, high, tc);
    const auto lb = train_srn(b, high, tc);
    CHECK(la == lb);
    CHECK(module_hash(a) == module_hash(b));
    const auto restored = srn_from_checkpoint(decode_checkpoint(encode_checkpoint(srn_to_checkpoint(a))));
    CHECK(module_hash(*restored) == module_hash(a));
}

TEST_CASE("SRN training on bicubic-consistent pairs stays at or below bicubic error")
{
    // high = bicubic(low) → the zero-residual start is already optimal.
    Rng rng(5);
    std::vector<TextureMap> high;
    for (int i = 0; i < 4; ++i) {
        const TextureMap low(random_tensor<float>({3, 4, 4}, rng, 0.2, 0.8));
        high.push_back(bicubic_texture(low, 4));
    }
    SRNConfig cfg;
    cfg.channels = 8;
    cfg.blocks = 1;
    SuperResolution<float> net(cfg);
    SRNTrainConfig tc;
    tc.iterations = 30;
    tc.batch_size = 4;
    const auto losses = train_srn(net, high, tc);
    double bicubic_err = 0;
    for (const auto& h : high) {
        const TextureMap b = bicubic_texture(downsample_texture(h, 4), 4);
        for (std::size_t i = 0; i < h.pixels.size(); ++i) bicubic_err += std::abs(b.pixels[i] - h.pixels[i]);
    }
    bicubic_err /= high.size() * high.front().pixels.size();
    CHECK(losses.front() == doctest::Approx(bicubic_err).epsilon(1e-4));
    CHECK(losses.back() <= losses.front() * 1.05);
}
