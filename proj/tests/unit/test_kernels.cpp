#include <doctest.h>

#include "reavae/reference.hpp"
#include "test_util.hpp"

using namespace reavae;
using namespace testutil;

TEST_CASE("conv2d matches the serial reference")
{
    Rng rng(11);
    struct Case { int n, cin, cout, h, w, k, stride; };
    for (const Case c : {Case{2, 3, 4, 7, 9, 3, 1}, Case{1, 5, 2, 8, 8, 3, 2}, Case{3, 4, 6, 5, 5, 1, 1},
                         Case{2, 2, 3, 9, 6, 3, 2}}) {
        const auto x = random_tensor<double>({c.n, c.cin, c.h, c.w}, rng);
        const auto w = random_tensor<double>({c.cout, c.cin, c.k, c.k}, rng);
        const auto b = random_tensor<double>({c.cout}, rng);
        const int pad = c.k / 2;
        const auto y = kernels::conv2d_forward(x, w, &b, c.stride, pad);
        CHECK(max_abs_diff(y, reference::conv2d_forward(x, w, &b, c.stride, pad)) < 1e-12);
        const auto dy = random_tensor<double>(y.shape(), rng);
        const auto g = kernels::conv2d_backward(x, w, dy, c.stride, pad, true, true, true);
        const auto r = reference::conv2d_backward(x, w, dy, c.stride, pad);
        CHECK(max_abs_diff(g.dx, r.dx) < 1e-12);
        CHECK(max_abs_diff(g.dw, r.dw) < 1e-12);
        CHECK(max_abs_diff(g.db, r.db) < 1e-12);
    }
}

TEST_CASE("float conv agrees with double conv")
{
    Rng rng(12);
    const auto x = random_tensor<double>({2, 8, 16, 16}, rng);
    const auto w = random_tensor<double>({8, 8, 3, 3}, rng);
    const auto yd = kernels::conv2d_forward<double>(x, w, nullptr, 1, 1);
    const auto yf = kernels::conv2d_forward<float>(x.cast<float>(), w.cast<float>(), nullptr, 1, 1);
    CHECK(max_abs_diff(yd, yf.template cast<double>()) < 1e-4);
}

TEST_CASE("resampling kernels match the serial reference")
{
    Rng rng(13);
    const auto x = random_tensor<double>({2, 3, 5, 7}, rng);
    for (auto [oh, ow] : {std::pair{10, 14}, std::pair{64, 64}, std::pair{3, 4}, std::pair{5, 7}})
        CHECK(max_abs_diff(kernels::resize_bilinear(x, oh, ow), reference::resize_bilinear(x, oh, ow)) < 1e-12);

    const auto tex = random_tensor<double>({2, 3, 8, 6}, rng);
    std::vector<float> uv(10 * 12 * 2);
    std::vector<std::uint8_t> mask(10 * 12);
    std::uniform_real_distribution<float> u(0.f, 1.f);
    for (auto& v : uv) v = u(rng);
    for (auto& m : mask) m = u(rng) < 0.7f;
    CHECK(max_abs_diff(kernels::bilinear_sample(tex, uv, mask, 10, 12), reference::bilinear_sample(tex, uv, mask, 10, 12)) <
          1e-12);
}

TEST_CASE("region kernels match the serial reference")
{
    Rng rng(14);
    for (int trial = 0; trial < 20; ++trial) {
        const auto f = random_tensor<double>({2, 6, 5, 7}, rng);
        const Labels l = random_labels(2, 5, 7, 4, rng);
        CHECK(max_abs_diff(kernels::region_pool(f, l, 5).styles, reference::region_pool(f, l, 5)) < 1e-12);
        const auto codes = random_tensor<double>({2, 5, 3}, rng);
        CHECK(kernels::broadcast_codes(codes, l) == reference::broadcast_codes(codes, l));
    }
}

TEST_CASE("batch normalisation matches the serial reference")
{
    Rng rng(15);
    const auto x = random_tensor<double>({3, 4, 6, 5}, rng, -2, 3);
    Tensor<double> mean, var;
    const auto y = kernels::normalize_forward(x, kernels::NormGroup::channel, 1e-5, mean, var);
    CHECK(max_abs_diff(y, reference::batch_normalize(x, 1e-5)) < 1e-12);
}

// For a linear map K with claimed adjoint Kᵀ: <dy, K x> == <Kᵀ dy, x>.
TEST_CASE("backward kernels are exact adjoints")
{
    Rng rng(16);
    auto check = [&](const Tensor<double>& x, auto forward, auto backward) {
        const auto y = forward(x);
        const auto dy = random_tensor<double>(y.shape(), rng);
        const auto dx = backward(dy);
        CHECK(std::abs(dot(dy, y) - dot(dx, x)) < 1e-10);
    };
    const auto x = random_tensor<double>({2, 3, 6, 8}, rng);
    check(x, [](auto& t) { return kernels::resize_bilinear(t, 13, 5); },
          [](auto& d) { return kernels::resize_bilinear_backward(d, 6, 8); });
    check(x, [](auto& t) { return kernels::upsample_nearest(t, 2); },
          [](auto& d) { return kernels::upsample_nearest_backward(d, 2); });
    check(x, [](auto& t) { return kernels::avg_pool2(t); }, [](auto& d) { return kernels::avg_pool2_backward(d, 6, 8); });
    for (int dir : {0, 1})
        check(x, [dir](auto& t) { return kernels::forward_difference(t, dir); },
              [dir](auto& d) { return kernels::forward_difference_backward(d, dir); });
    const auto xs = random_tensor<double>({2, 12, 3, 4}, rng);
    check(xs, [](auto& t) { return kernels::pixel_shuffle(t, 2); }, [](auto& d) { return kernels::pixel_unshuffle(d, 2); });

    const Labels l = random_labels(2, 6, 8, 3, rng);
    const auto pooled = kernels::region_pool(x, l, 4);
    check(x, [&](auto& t) { return kernels::region_pool(t, l, 4).styles; },
          [&](auto& d) { return kernels::region_pool_backward(d, pooled.counts, l, 3); });
    const auto codes = random_tensor<double>({2, 3, 5}, rng);
    check(codes, [&](auto& t) { return kernels::broadcast_codes(t, l); },
          [&](auto& d) { return kernels::broadcast_codes_backward(d, l, 3); });

    std::vector<float> uv(7 * 9 * 2);
    std::vector<std::uint8_t> mask(7 * 9, 1);
    std::uniform_real_distribution<float> u(-0.1f, 1.1f);
    for (auto& v : uv) v = u(rng);
    mask[3] = mask[10] = 0;
    check(x, [&](auto& t) { return kernels::bilinear_sample(t, uv, mask, 7, 9); },
          [&](auto& d) { return kernels::bilinear_sample_backward(d, uv, mask, 6, 8); });
}

TEST_CASE("pixel shuffle round trip and bicubic constant preservation")
{
    Rng rng(17);
    const auto x = random_tensor<double>({1, 8, 3, 5}, rng);
    CHECK(kernels::pixel_unshuffle(kernels::pixel_shuffle(x, 2), 2) == x);
    const Tensor<double> c({1, 3, 6, 6}, 0.37);
    const auto up = kernels::bicubic_upsample(c, 4);
    CHECK(up.shape() == Shape{1, 3, 24, 24});
    for (double v : up.values()) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
    const Tensor<double> a({1, 1, 8, 8}, 0.5);
    const auto down = kernels::area_downsample(a, 4);
    CHECK(down.shape() == Shape{1, 1, 2, 2});
    for (double v : down.values()) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("label resampling and one-hot")
{
    Labels l(1, 4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) l.at(0, i, j) = i * 4 + j;
    const Labels d = kernels::resize_labels_nearest(l, 2, 2);
    CHECK(d.data == std::vector<int>{0, 2, 8, 10});
    Labels one(1, 1, 1, 2);
    const auto oh = kernels::one_hot<float>(one, 4);
    CHECK(oh.storage() == std::vector<float>{0, 0, 1, 0});
    CHECK_THROWS_AS(kernels::one_hot<float>(one, 2), std::out_of_range);
}
