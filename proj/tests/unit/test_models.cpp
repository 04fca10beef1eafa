#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "reavae/encoder.hpp"
#include "reavae/generator.hpp"
#include "reavae/vae.hpp"
#include "test_util.hpp"

using namespace reavae;
using namespace testutil;
using V = ag::Var<double>;

namespace {

ModelConfig small_config()
{
    ModelConfig m;
    m.num_classes = 3;
    m.style_dim = 4;
    m.resolution = 32;
    m.encoder_base = 4;
    m.gen_base_size = 8;
    m.gen_channels = {8, 8, 4};
    m.validate();
    return m;
}

// Brute-force per-class average over the label grid.
Tensor<double> pooled_oracle(const Tensor<double>& f, const Labels& l, int classes)
{
    const int n = f.dim(0), w = f.dim(1), h = f.dim(2), wd = f.dim(3);
    Tensor<double> out({n, classes, w});
    for (int b = 0; b < n; ++b)
        for (int c = 0; c < classes; ++c) {
            int count = 0;
            std::vector<double> acc(w, 0.0);
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < wd; ++j)
                    if (l.at(b, i, j) == c) {
                        ++count;
                        for (int k = 0; k < w; ++k) acc[k] += f.at(b, k, i, j);
                    }
            for (int k = 0; k < w; ++k)
                out[(static_cast<std::size_t>(b) * classes + c) * w + k] = count ? acc[k] / count : 0.0;
        }
    return out;
}

int chebyshev_to_class(const Labels& seg, int c, int i, int j)
{
    int best = 1 << 30;
    for (int y = 0; y < seg.height; ++y)
        for (int x = 0; x < seg.width; ++x)
            if (seg.at(0, y, x) == c) best = std::min(best, std::max(std::abs(y - i), std::abs(x - j)));
    return best;
}

} // namespace

TEST_CASE("region pooling matches the brute-force masked average")
{
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        const int classes = 2 + trial % 5;
        const auto f = random_tensor<double>({2, 3, 5, 4}, rng);
        const Labels l = random_labels(2, 5, 4, classes, rng);
        const Tensor<double> got = pool_region_styles(V(f), l, classes).value();
        const Tensor<double> want = pooled_oracle(f, l, classes);
        CHECK(max_abs_diff(got, want) < 1e-12);
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < classes; ++c)
                if (std::count(l.data.begin() + b * 20, l.data.begin() + (b + 1) * 20, c) == 0)
                    for (int k = 0; k < 3; ++k) CHECK(got[(static_cast<std::size_t>(b) * classes + c) * 3 + k] == 0.0);
    }
}

TEST_CASE("two class-1 pixels holding 1 and 3 pool to 2")
{
    Tensor<double> f({1, 1, 2, 2});
    f.at(0, 0, 0, 0) = 1;
    f.at(0, 0, 1, 1) = 3;
    f.at(0, 0, 0, 1) = 100;
    f.at(0, 0, 1, 0) = -7;
    Labels l(1, 2, 2);
    l.data = {1, 0, 0, 1};
    const auto s = pool_region_styles(V(f), l, 3).value();
    CHECK(s[1] == 2.0);
    CHECK(s[2] == 0.0);
}

TEST_CASE("a style row depends only on pixels of its own class")
{
    Rng rng(2);
    auto f = random_tensor<double>({1, 4, 6, 6}, rng);
    const Labels l = random_labels(1, 6, 6, 3, rng);
    const auto before = pool_region_styles(V(f), l, 3).value();
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
            if (l.at(0, i, j) != 1)
                for (int k = 0; k < 4; ++k) f.at(0, k, i, j) += 5.0;
    const auto after = pool_region_styles(V(f), l, 3).value();
    for (int k = 0; k < 4; ++k) CHECK(after[4 + k] == before[4 + k]);
}

TEST_CASE("pooling is invariant to pixel order within a class")
{
    Rng rng(3);
    const auto f = random_tensor<double>({1, 2, 1, 12}, rng);
    const Labels l = random_labels(1, 1, 12, 3, rng);
    std::vector<int> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor<double> pf(f.shape());
    Labels pl(1, 1, 12);
    for (int j = 0; j < 12; ++j) {
        pl.data[j] = l.data[perm[j]];
        for (int k = 0; k < 2; ++k) pf.at(0, k, 0, j) = f.at(0, k, 0, perm[j]);
    }
    CHECK(max_abs_diff(pool_region_styles(V(f), l, 3).value(), pool_region_styles(V(pf), pl, 3).value()) < 1e-12);
}

TEST_CASE("the encoder emits W channels and zero weights give zero features")
{
    const ModelConfig cfg = small_config();
    Rng rng(4);
    StyleEncoder<double> enc(cfg, rng);
    const auto feats = enc.features(V(Tensor<double>({1, 3, 32, 32}))).value();
    CHECK(feats.dim(1) == cfg.style_dim);
    CHECK(feats.dim(2) == cfg.encoder_feature_size());
    enc.fill_parameters(0.0);
    for (double v : enc.features(V(Tensor<double>({1, 3, 32, 32}))).value().values()) CHECK(v == 0.0);
}

TEST_CASE("encoder features change only inside the receptive field of a perturbation")
{
    ModelConfig cfg = small_config();
    cfg.encoder_norm = false;
    Rng rng(5);
    StyleEncoder<double> enc(cfg, rng);
    auto x = random_tensor<double>({1, 3, 32, 32}, rng, 0, 1);
    const auto base = enc.features(V(x)).value();
    const int pi = 13, pj = 20;
    for (int c = 0; c < 3; ++c) x.at(0, c, pi, pj) += 0.5;
    const auto moved = enc.features(V(x)).value();
    int outside = 0, changed = 0;
    for (int i = 0; i < enc.feature_size(); ++i)
        for (int j = 0; j < enc.feature_size(); ++j) {
            const auto [ri0, ri1] = enc.input_span(i);
            const auto [rj0, rj1] = enc.input_span(j);
            const bool inside = pi >= ri0 && pi <= ri1 && pj >= rj0 && pj <= rj1;
            for (int k = 0; k < cfg.style_dim; ++k) {
                const bool diff = moved.at(0, k, i, j) != base.at(0, k, i, j);
                if (!inside) {
                    ++outside;
                    CHECK_FALSE(diff);
                }
                changed += diff;
            }
        }
    CHECK(outside > 0);
    CHECK(changed > 0);
}

TEST_CASE("zero heads give a standard normal and KLD closed forms hold")
{
    Rng rng(6);
    GaussianHeads<double> heads(3, 4, rng);
    heads.fill_parameters(0.0);
    const auto stats = heads.forward(V(Tensor<double>({2, 3, 4})));
    for (double v : stats.mu.value().values()) CHECK(v == 0.0);
    for (double v : stats.log_var.value().values()) CHECK(v == 0.0);
    CHECK(kld_loss(stats).item() == 0.0);

    const GaussianStats<double> one{V(Tensor<double>({1, 1, 1}, 1.0)), V(Tensor<double>({1, 1, 1}, 0.0))};
    CHECK(kld_loss(one).item() == doctest::Approx(0.5).epsilon(1e-12));

    const GaussianStats<double> big{V(Tensor<double>({1, 20, 512}, 0.0)), V(Tensor<double>({1, 20, 512}, 1.0))};
    CHECK(kld_loss(big).item() == doctest::Approx(0.5 * 20 * 512 * (std::exp(1.0) - 2)).epsilon(1e-12));
    CHECK(kld_loss(big).item() == doctest::Approx(3677.6).epsilon(1e-4));
}

TEST_CASE("KLD matches an elementwise oracle and its mu gradient is mu")
{
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const auto mu = random_tensor<double>({2, 3, 5}, rng, -2, 2);
        const auto lv = random_tensor<double>({2, 3, 5}, rng, -3, 3);
        double oracle = 0;
        for (std::size_t i = 0; i < mu.size(); ++i) oracle += 0.5 * (mu[i] * mu[i] + std::exp(lv[i]) - 1 - lv[i]);
        oracle /= 2;
        CHECK(kld_loss(GaussianStats<double>{V(mu), V(lv)}).item() == doctest::Approx(oracle).epsilon(1e-12));
        CHECK(kld_loss(GaussianStats<double>{V(mu), V(lv)}).item() >= 0.0);
    }
    const auto mu0 = random_tensor<double>({1, 2, 3}, rng);
    V mu(mu0, true);
    kld_loss(GaussianStats<double>{mu, V(Tensor<double>({1, 2, 3}))}).backward();
    CHECK(max_abs_diff(mu.grad(), mu0) < 1e-12);
}

TEST_CASE("presence masking drops absent classes from the KLD")
{
    const GaussianStats<double> s{V(Tensor<double>({1, 2, 1}, 1.0)), V(Tensor<double>({1, 2, 1}, 0.0))};
    const std::vector<std::uint8_t> presence{1, 0};
    CHECK(kld_loss(s, &presence).item() == doctest::Approx(0.5));
    CHECK(kld_loss(s).item() == doctest::Approx(1.0));
}

TEST_CASE("reparameterisation edge cases and gradients")
{
    const V mu(Tensor<double>({1, 1, 2}, 0.0));
    const V lv(Tensor<double>({1, 1, 2}, 0.0));
    CHECK(reparameterize(GaussianStats<double>{mu, lv}, Tensor<double>({1, 1, 2}, 0.5)).value()[0] == 0.5);
    const V mu1(Tensor<double>({1, 1, 2}, 0.3));
    const V tight(Tensor<double>({1, 1, 2}, -20.0));
    CHECK(std::abs(reparameterize(GaussianStats<double>{mu1, tight}, Tensor<double>({1, 1, 2}, 1.0)).value()[0] - 0.3) <
          1e-4);

    Rng rng(8);
    const auto eps = random_tensor<double>({1, 3, 4}, rng);
    const auto m0 = random_tensor<double>({1, 3, 4}, rng);
    const auto l0 = random_tensor<double>({1, 3, 4}, rng);
    CHECK(gradcheck([&](const V& m) { return probe(reparameterize(GaussianStats<double>{m, V(l0)}, eps), 1); }, m0) <
          1e-6);
    CHECK(gradcheck([&](const V& l) { return probe(reparameterize(GaussianStats<double>{V(m0), l}, eps), 2); }, l0) <
          1e-6);
}

TEST_CASE("permuting classes together with their heads permutes the statistics")
{
    Rng rng(9);
    GaussianHeads<double> heads(3, 4, rng);
    const auto x = random_tensor<double>({1, 3, 4}, rng);
    const auto out = heads.forward(V(x));
    const int perm[3] = {2, 0, 1};
    GaussianHeads<double> swapped(3, 4, rng);
    Tensor<double> px(x.shape());
    for (int c = 0; c < 3; ++c) {
        for (int k = 0; k < 4; ++k) px[c * 4 + k] = x[perm[c] * 4 + k];
        auto copy_block = [&](V& dst, const V& src, int block) {
            std::copy_n(src.value().data() + perm[c] * block, block, dst.mutable_value().data() + c * block);
        };
        copy_block(swapped.mu_weight, heads.mu_weight, 16);
        copy_block(swapped.lv_weight, heads.lv_weight, 16);
        copy_block(swapped.mu_bias, heads.mu_bias, 4);
        copy_block(swapped.lv_bias, heads.lv_bias, 4);
    }
    const auto pout = swapped.forward(V(px));
    for (int c = 0; c < 3; ++c)
        for (int k = 0; k < 4; ++k) {
            CHECK(pout.mu.value()[c * 4 + k] == out.mu.value()[perm[c] * 4 + k]);
            CHECK(pout.log_var.value()[c * 4 + k] == out.log_var.value()[perm[c] * 4 + k]);
        }
}

TEST_CASE("region-adaptive norm with unit gamma and zero beta returns the normalised input")
{
    const ModelConfig cfg = small_config();
    Rng rng(10);
    RegionAdaptiveNorm<double> ran(5, cfg, rng);
    ran.gamma.zero_();
    ran.beta.zero_();
    for (auto& b : ran.gamma.bias.mutable_value().values()) b = 1.0;
    const auto x = random_tensor<double>({2, 5, 4, 4}, rng);
    const Labels seg = random_labels(2, 4, 4, 3, rng);
    const auto styles = random_tensor<double>({2, 3, 4}, rng);
    const auto y = ran.forward(V(x), seg, V(styles), nullptr).value();
    Tensor<double> mean, var;
    const auto xhat = kernels::normalize_forward(x, kernels::NormGroup::channel, 1e-5, mean, var);
    CHECK(max_abs_diff(y, xhat) < 1e-12);
}

TEST_CASE("region-adaptive norm gradients w.r.t. style rows match finite differences")
{
    const ModelConfig cfg = small_config();
    Rng rng(11);
    RegionAdaptiveNorm<double> ran(5, cfg, rng);
    ran.set_training(false);
    for (auto& v : ran.running_var.values()) v = 0.7;
    const auto x = random_tensor<double>({2, 5, 4, 4}, rng);
    const Labels seg = random_labels(2, 4, 4, 3, rng);
    const auto s0 = random_tensor<double>({2, 3, 4}, rng);
    CHECK(gradcheck([&](const V& s) { return probe(ran.forward(V(x), seg, s, nullptr), 3); }, s0) < 1e-3);
    ran.set_training(true);
    CHECK(gradcheck([&](const V& s) { return probe(ran.forward(V(x), seg, s, nullptr), 4); }, s0) < 1e-3);
}

TEST_CASE("a resblock with zero convolutions returns its shortcut")
{
    const ModelConfig cfg = small_config();
    Rng rng(12);
    ResBlock<double> blk(8, 4, cfg, rng);
    REQUIRE(blk.shortcut);
    CHECK(blk.shortcut->weight.shape() == Shape{4, 8, 1, 1});
    blk.conv0.zero_();
    blk.conv1.zero_();
    const auto x = random_tensor<double>({1, 8, 4, 4}, rng);
    const Labels seg = random_labels(1, 4, 4, 3, rng);
    const auto y = blk.forward(V(x), seg, V(random_tensor<double>({1, 3, 4}, rng)), nullptr, nullptr).value();
    CHECK(y.shape() == Shape{1, 4, 4, 4});
    CHECK(max_abs_diff(y, blk.shortcut->forward(V(x)).value()) < 1e-12);
}

TEST_CASE("generator output is the sigmoid of the summed skips")
{
    const ModelConfig cfg = small_config();
    Rng rng(13);
    Generator<double> gen(cfg, rng);
    const Labels seg = random_labels(2, 32, 32, 3, rng);
    const auto styles = random_tensor<double>({2, 3, 4}, rng, -3, 3);
    GeneratorTrace<double> trace;
    const auto y = gen.forward(V(styles), seg, {5, 6}, &trace).value();
    REQUIRE(trace.skips.size() == 3);
    Tensor<double> sum = trace.skips[0];
    for (std::size_t b = 1; b < trace.skips.size(); ++b) sum += trace.skips[b];
    CHECK(max_abs_diff(sum, trace.pre_sigmoid) < 1e-12);
    for (std::size_t i = 0; i < y.size(); ++i) {
        CHECK(std::abs(y[i] - 1.0 / (1.0 + std::exp(-sum[i]))) < 1e-12);
        CHECK(y[i] >= 0.0);
        CHECK(y[i] <= 1.0);
    }
    CHECK(gen.forward(V(styles), seg, {5, 6}).value() == y);
}

TEST_CASE("changing one style row leaves pixels beyond the influence radius unchanged")
{
    ModelConfig cfg = small_config();
    cfg.resolution = 64;
    cfg.gen_base_size = 16;
    cfg.gen_channels = {8, 8, 4};
    Rng rng(14);
    Generator<double> gen(cfg, rng);
    gen.set_training(false);
    // Class 2 is a small square near a corner; class 1 a band.
    Labels seg(1, 64, 64);
    for (int i = 0; i < 64; ++i)
        for (int j = 0; j < 64; ++j) seg.at(0, i, j) = (i >= 4 && i < 12 && j >= 4 && j < 12) ? 2 : (j > 40 ? 1 : 0);
    auto styles = random_tensor<double>({1, 3, 4}, rng);
    const auto base = gen.forward(V(styles), seg, {9}).value();
    for (int k = 0; k < 4; ++k) styles[2 * 4 + k] += 1.5;
    const auto moved = gen.forward(V(styles), seg, {9}).value();

    int radius = 0;
    for (int b = 0; b < gen.num_blocks(); ++b) {
        const int r = gen.block_resolution(b);
        const Labels site = kernels::resize_labels_nearest(seg, r, r);
        if (std::find(site.data.begin(), site.data.end(), 2) != site.data.end())
            radius = std::max({radius, gen.influence_radius(b, 0), gen.influence_radius(b, 1)});
    }
    int checked = 0, changed = 0;
    for (int i = 0; i < 64; ++i)
        for (int j = 0; j < 64; ++j) {
            const bool far = chebyshev_to_class(seg, 2, i, j) > radius;
            for (int c = 0; c < 3; ++c) {
                const double d = std::abs(moved.at(0, c, i, j) - base.at(0, c, i, j));
                if (far) {
                    ++checked;
                    CHECK(d <= 1e-6);
                }
                changed += d > 1e-6;
            }
        }
    CHECK(checked > 0);
    CHECK(changed > 0);
}

TEST_CASE("generator input validation")
{
    const ModelConfig cfg = small_config();
    Rng rng(15);
    Generator<double> gen(cfg, rng);
    const Labels seg = random_labels(1, 32, 32, 3, rng);
    CHECK_THROWS(gen.forward(V(Tensor<double>({1, 2, 4})), seg, {1}));
    CHECK_THROWS(gen.forward(V(Tensor<double>({1, 3, 4})), seg, {}));
    CHECK_THROWS(gen.forward(V(Tensor<double>({1, 3, 4})), random_labels(1, 16, 16, 3, rng), {1}));
    Labels bad = seg;
    bad.data[5] = 3;
    CHECK_THROWS(gen.forward(V(Tensor<double>({1, 3, 4})), bad, {1}));
}
