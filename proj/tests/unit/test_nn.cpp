#include <doctest.h>

#include <Eigen/Dense>

#include "reavae/nn.hpp"
#include "test_util.hpp"

using namespace reavae;
using namespace testutil;

namespace {

Eigen::MatrixXd to_matrix(const Tensor<double>& w)
{
    const int rows = w.dim(0);
    const int cols = static_cast<int>(w.size()) / rows;
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = w[static_cast<std::size_t>(i) * cols + j];
    return m;
}

} // namespace

TEST_CASE("power iteration on diag(3, 1) normalises to diag(1, 1/3)")
{
    Rng rng(1);
    Tensor<double> w({2, 2});
    w[0] = 3;
    w[3] = 1;
    auto state = nn::init_power_iteration<double>(2, 2, rng);
    CHECK(nn::power_iterate(w, state, 50) == doctest::Approx(3.0).epsilon(1e-9));
    const Tensor<double> n = nn::spectral_normalize(w, state);
    CHECK(n[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(n[3] == doctest::Approx(1.0 / 3).epsilon(1e-9));
    CHECK(n[1] == doctest::Approx(0.0));
}

TEST_CASE("an orthogonal matrix has sigma 1")
{
    Rng rng(2);
    const Eigen::MatrixXd a = to_matrix(random_tensor<double>({6, 6}, rng));
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
    Tensor<double> w({6, 6});
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) w[i * 6 + j] = q(i, j);
    auto state = nn::init_power_iteration<double>(6, 6, rng);
    CHECK(nn::power_iterate(w, state, 10) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(max_abs_diff(nn::spectral_normalize(w, state), w) < 1e-9);
}

TEST_CASE("power iteration is within 1% of the SVD after 50 steps on 16×16 matrices")
{
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const auto w = random_tensor<double>({16, 16}, rng);
        auto state = nn::init_power_iteration<double>(16, 16, rng);
        const double sigma = nn::power_iterate(w, state, 50);
        const double exact = Eigen::JacobiSVD<Eigen::MatrixXd>(to_matrix(w)).singularValues()(0);
        CHECK(std::abs(sigma - exact) / exact < 0.01);
    }
}

TEST_CASE("spectrally normalised conv weights have norm at most 1 after warm-up")
{
    Rng rng(4);
    nn::SNConv2d<double> conv(3, 8, 3, rng);
    for (int i = 0; i < 200; ++i) conv.update_spectral();
    const double exact = Eigen::JacobiSVD<Eigen::MatrixXd>(to_matrix(conv.weight.value())).singularValues()(0);
    CHECK(exact / conv.sigma() <= 1.01);
}

TEST_CASE("module registry names parameters hierarchically")
{
    Rng rng(5);
    nn::Conv2d<float> conv(3, 4, 3, rng);
    const auto named = conv.named_parameters("enc.");
    REQUIRE(named.size() == 2);
    CHECK(named[0].first == "enc.weight");
    CHECK(named[1].first == "enc.bias");
    CHECK(conv.parameter_count() == 4 * 3 * 9 + 4);
    conv.set_requires_grad(false);
    CHECK_FALSE(conv.weight.requires_grad());
}

TEST_CASE("adam with beta1 = 0 takes the bias-corrected RMS step")
{
    nn::Var<double> p(Tensor<double>({1}, 1.0), true);
    nn::Adam<double> opt({{"p", &p}}, nn::AdamConfig{0.1, 0.0, 0.999, 1e-8});
    ag::mul(p, nn::Var<double>(Tensor<double>({1}, 2.0))).backward(); // gradient 2
    opt.step();
    // m̂ = 2, v̂ = 4 → step = lr · 2 / (2 + eps)
    CHECK(p.value()[0] == doctest::Approx(1.0 - 0.1 * 2 / (2 + 1e-8)).epsilon(1e-12));
    CHECK(opt.steps() == 1);
    opt.zero_grad();
    CHECK(p.grad().empty());
}

TEST_CASE("uniform init respects the fan-in bound")
{
    Rng rng(6);
    const auto t = nn::uniform_init<double>({64, 16}, 16, rng);
    for (double v : t.values()) CHECK(std::abs(v) <= 0.25);
}
