#include <doctest.h>

#include "reavae/adversary.hpp"
#include "reavae/renderer.hpp"
#include "test_util.hpp"

using namespace reavae;
using namespace testutil;
using V = ag::Var<double>;

namespace {

std::vector<V> constant_logits(double v)
{
    return {V(Tensor<double>({2, 1, 4, 4}, v)), V(Tensor<double>({2, 1, 2, 2}, v))};
}

ModelConfig disc_config()
{
    ModelConfig m;
    m.num_classes = 3;
    m.disc_base = 4;
    m.disc_scales = 2;
    return m;
}

} // namespace

TEST_CASE("hinge losses at their reference points")
{
    CHECK(hinge_d_loss(constant_logits(1), constant_logits(-1)).item() == 0.0);
    CHECK(hinge_d_loss(constant_logits(0), constant_logits(0)).item() == doctest::Approx(2.0));
    CHECK(hinge_g_loss(constant_logits(0.5)).item() == doctest::Approx(-0.5));
    CHECK(hinge_g_loss(constant_logits(0)).item() == 0.0);
    Rng rng(1);
    for (int t = 0; t < 20; ++t) {
        const std::vector<V> r{V(random_tensor<double>({1, 1, 3, 3}, rng, -3, 3))};
        const std::vector<V> f{V(random_tensor<double>({1, 1, 3, 3}, rng, -3, 3))};
        CHECK(hinge_d_loss(r, f).item() >= 0.0);
        const std::vector<V> f2{V(ag::scale(f[0], 2.0).value())};
        CHECK(hinge_g_loss(f2).item() == doctest::Approx(2 * hinge_g_loss(f).item()));
    }
}

TEST_CASE("feature matching: zero on identical inputs, 3 for a unit offset, symmetric")
{
    Rng rng(2);
    std::vector<std::vector<V>> real(2), fake(2), back(2);
    for (int s = 0; s < 2; ++s)
        for (int l = 0; l < 3; ++l) {
            const auto t = random_tensor<double>({1, 2, 3, 3}, rng);
            real[s].emplace_back(t);
            Tensor<double> shifted = t;
            for (auto& v : shifted.values()) v += 1.0;
            fake[s].emplace_back(shifted);
        }
    CHECK(feature_matching_loss(real, real).item() == 0.0);
    CHECK(feature_matching_loss(real, fake).item() == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(feature_matching_loss(fake, real).item() == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("perceptual loss reduces to L1 with an identity extractor and vanishes on equal inputs")
{
    Rng rng(3);
    const auto x = random_tensor<double>({1, 3, 8, 8}, rng, 0, 1);
    const auto g = random_tensor<double>({1, 3, 8, 8}, rng, 0, 1);
    double l1 = 0;
    for (std::size_t i = 0; i < x.size(); ++i) l1 += std::abs(x[i] - g[i]);
    CHECK(perceptual_loss(std::vector<V>{V(x)}, std::vector<V>{V(g)}).item() ==
          doctest::Approx(l1 / x.size()).epsilon(1e-12));

    const FeatureExtractor<double> fx({4, 8}, 7);
    CHECK(perceptual_loss(V(x), V(x), fx).item() == 0.0);
    CHECK(perceptual_loss(V(x), V(g), fx).item() > 0.0);
    CHECK(fx.embed(x).shape() == Shape{1, 8});
}

TEST_CASE("the frozen extractor accumulates no parameter gradients")
{
    const FeatureExtractor<double> fx({4}, 7);
    Rng rng(4);
    V g(random_tensor<double>({1, 3, 8, 8}, rng), true);
    perceptual_loss(V(random_tensor<double>({1, 3, 8, 8}, rng)), g, fx).backward();
    CHECK(g.has_grad());
    for (auto* p : const_cast<FeatureExtractor<double>&>(fx).parameters()) CHECK_FALSE(p->has_grad());
}

TEST_CASE("the discriminator has two patch scales smaller than the input")
{
    Rng rng(5);
    MultiScaleDiscriminator<double> d(disc_config(), rng);
    const Labels seg = random_labels(2, 16, 16, 3, rng);
    const auto tex = random_tensor<double>({2, 3, 16, 16}, rng, 0, 1);
    const auto out = d.forward(V(tex), seg);
    REQUIRE(out.logits.size() == 2);
    CHECK(out.features.size() == 2);
    CHECK(out.features[0].size() == 3);
    CHECK(out.logits[0].dim(2) < 16);
    CHECK(out.logits[1].dim(2) < out.logits[0].dim(2));
    CHECK(d.forward(V(tex), seg).logits[1].value() == out.logits[1].value());
}

TEST_CASE("discriminator gradients w.r.t. the image match finite differences")
{
    Rng rng(6);
    MultiScaleDiscriminator<double> d(disc_config(), rng);
    const Labels seg = random_labels(1, 8, 8, 3, rng);
    const auto tex = random_tensor<double>({1, 3, 8, 8}, rng, 0, 1);
    CHECK(gradcheck([&](const V& x) { return hinge_g_loss(d.forward(x, seg).logits); }, tex, 1e-6, 40) < 1e-4);
}

TEST_CASE("identity views reproduce the texture and constant textures render constant")
{
    Rng rng(7);
    const auto tex = random_tensor<double>({1, 3, 9, 7}, rng);
    const ViewUVMap id = identity_view(9, 7);
    CHECK(max_abs_diff(render_view(V(tex), id).value(), tex) < 1e-5);
    const auto swirl = swirl_view(12, 12, 1.3, "s");
    const auto r = render_view(V(Tensor<double>({1, 3, 9, 7}, 0.25)), swirl).value();
    for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 12; ++j)
            CHECK(r.at(0, 1, i, j) == (swirl.mask[i * 12 + j] ? doctest::Approx(0.25) : doctest::Approx(0.0)));
}

TEST_CASE("rendering is linear in the texture")
{
    Rng rng(8);
    const auto a = random_tensor<double>({1, 3, 16, 16}, rng);
    const auto b = random_tensor<double>({1, 3, 16, 16}, rng);
    Tensor<double> mix(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) mix[i] = 0.3 * a[i] - 1.7 * b[i];
    for (const auto& view : synthetic_views(16, 4)) {
        const auto ra = render_view(V(a), view).value(), rb = render_view(V(b), view).value();
        Tensor<double> want(ra.shape());
        for (std::size_t i = 0; i < ra.size(); ++i) want[i] = 0.3 * ra[i] - 1.7 * rb[i];
        CHECK(max_abs_diff(render_view(V(mix), view).value(), want) < 1e-6);
    }
}

TEST_CASE("render gradients w.r.t. texels are the bilinear weights")
{
    Rng rng(9);
    const auto tex = random_tensor<double>({1, 3, 8, 8}, rng);
    const auto view = affine_view(6, 6, 20, 0.9, 0.02, 0.01, "a");
    CHECK(gradcheck([&](const V& t) { return probe(render_view(t, view), 3); }, tex) < 1e-6);
}

TEST_CASE("image gradients on ramps, constants and edges")
{
    Tensor<double> ramp({1, 1, 4, 5});
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j) ramp.at(0, 0, i, j) = 0.1 * j;
    const auto [gx, gy] = image_gradient(V(ramp));
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) CHECK(gx.value().at(0, 0, i, j) == doctest::Approx(0.1));
        for (int j = 0; j < 5; ++j) CHECK(gy.value().at(0, 0, i, j) == 0.0);
    }
    Tensor<double> edge({1, 1, 3, 6});
    for (int i = 0; i < 3; ++i)
        for (int j = 3; j < 6; ++j) edge.at(0, 0, i, j) = 1;
    const auto ge = image_gradient(V(edge)).first.value();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 6; ++j) CHECK((ge.at(0, 0, i, j) != 0) == (j == 2));
}

TEST_CASE("render loss with identity views equals photometric plus gradient L1")
{
    Rng rng(10);
    for (int t = 0; t < 10; ++t) {
        const auto a = random_tensor<double>({2, 3, 8, 8}, rng, 0, 1);
        const auto b = random_tensor<double>({2, 3, 8, 8}, rng, 0, 1);
        double photo = 0, grad_x = 0, grad_y = 0;
        for (int n = 0; n < 2; ++n)
            for (int c = 0; c < 3; ++c)
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j) {
                        photo += std::abs(a.at(n, c, i, j) - b.at(n, c, i, j));
                        if (j < 7)
                            grad_x += std::abs((a.at(n, c, i, j + 1) - a.at(n, c, i, j)) -
                                               (b.at(n, c, i, j + 1) - b.at(n, c, i, j)));
                        if (i < 7)
                            grad_y += std::abs((a.at(n, c, i + 1, j) - a.at(n, c, i, j)) -
                                               (b.at(n, c, i + 1, j) - b.at(n, c, i, j)));
                    }
        const double count = 2 * 3 * 64;
        const double want = (photo + grad_x + grad_y) / count;
        const std::vector<ViewUVMap> views{identity_view(8, 8), identity_view(8, 8, "again")};
        CHECK(render_loss(V(a), V(b), views).item() == doctest::Approx(want).epsilon(1e-5));
        CHECK(render_loss(V(a), V(a), views).item() == 0.0);
    }
}

TEST_CASE("a texel seen by no view does not change the render loss")
{
    Rng rng(11);
    const auto a = random_tensor<double>({1, 3, 16, 16}, rng, 0, 1);
    const std::vector<ViewUVMap> views{swirl_view(16, 16, 1.0, "s")};
    auto b = a;
    b.at(0, 0, 0, 0) += 0.5; // corner texel, outside the swirl disc
    CHECK(render_loss(V(a), V(b), views).item() == 0.0);
    b.at(0, 0, 8, 8) += 0.5;
    CHECK(render_loss(V(a), V(b), views).item() > 0.0);
}

TEST_CASE("overlapping views agree on shared texels")
{
    Rng rng(12);
    const auto tex = random_tensor<double>({1, 3, 16, 16}, rng);
    const ViewUVMap front = identity_view(16, 16);
    const ViewUVMap back = affine_view(16, 16, 180, 1.0, 0, 0, "back");
    const auto rf = render_view(V(tex), front).value(), rb = render_view(V(tex), back).value();
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j)
            CHECK(rb.at(0, 2, i, j) == doctest::Approx(rf.at(0, 2, 15 - i, 15 - j)).epsilon(1e-5));
}

TEST_CASE("view files round trip and reject corrupt data")
{
    const ViewUVMap v = swirl_view(5, 7, 0.8, "right");
    const auto bytes = encode_view(v);
    const ViewUVMap back = decode_view(bytes);
    CHECK(back.name == "right");
    CHECK(back.uv == v.uv);
    CHECK(back.mask == v.mask);
    auto cut = bytes;
    cut.pop_back();
    CHECK_THROWS_WITH(decode_view(cut), doctest::Contains("blob length mismatch"));
    ViewUVMap bad = v;
    bad.uv[0] = 1.5f;
    bad.mask[0] = 1;
    std::size_t clamped = 0;
    render_view(V(Tensor<double>({1, 3, 4, 4})), bad, &clamped);
    CHECK(clamped == 1);
}
