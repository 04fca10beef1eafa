#include <doctest.h>

#include <numbers>

#include "reavae/metrics.hpp"
#include "test_util.hpp"

using namespace reavae;
using namespace testutil;

namespace {

TextureMap random_texture(int h, int w, Rng& rng)
{
    return TextureMap(random_tensor<float>({3, h, w}, rng, 0, 1));
}

Eigen::MatrixXd gaussian_set(int n, int d, double shift, Rng& rng)
{
    std::normal_distribution<double> dist(0, 1);
    Eigen::MatrixXd m(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = dist(rng) + shift;
    return m;
}

// Direct windowed SSIM with explicit per-window loops.
double ssim_oracle(const TextureMap& a, const TextureMap& b)
{
    const int k = 11;
    double g[11][11], s = 0;
    for (int u = 0; u < k; ++u)
        for (int v = 0; v < k; ++v) s += g[u][v] = std::exp(-((u - 5) * (u - 5) + (v - 5) * (v - 5)) / (2 * 2.25));
    double total = 0;
    int windows = 0;
    for (int i = 0; i + k <= a.height(); ++i)
        for (int j = 0; j + k <= a.width(); ++j) {
            double mx = 0, my = 0;
            auto lum = [](const TextureMap& t, int y, int x) {
                return (double(t.at(0, y, x)) + t.at(1, y, x) + t.at(2, y, x)) / 3;
            };
            for (int u = 0; u < k; ++u)
                for (int v = 0; v < k; ++v) {
                    mx += g[u][v] / s * lum(a, i + u, j + v);
                    my += g[u][v] / s * lum(b, i + u, j + v);
                }
            double vx = 0, vy = 0, cxy = 0;
            for (int u = 0; u < k; ++u)
                for (int v = 0; v < k; ++v) {
                    const double dx = lum(a, i + u, j + v) - mx, dy = lum(b, i + u, j + v) - my;
                    vx += g[u][v] / s * dx * dx;
                    vy += g[u][v] / s * dy * dy;
                    cxy += g[u][v] / s * dx * dy;
                }
            const double c1 = 1e-4, c2 = 9e-4;
            total += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++windows;
        }
    return total / windows;
}

double mmd_oracle(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y)
{
    const double d = static_cast<double>(x.cols());
    auto k = [d](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return std::pow(a.dot(b) / d + 1, 3); };
    const int m = static_cast<int>(x.rows()), n = static_cast<int>(y.rows());
    double sxx = 0, syy = 0, sxy = 0;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            if (i != j) sxx += k(x.row(i), x.row(j));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) syy += k(y.row(i), y.row(j));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            if (m != n || i != j) sxy += k(x.row(i), y.row(j));
    const double cross = m == n ? double(m) * (m - 1) : double(m) * n;
    return sxx / (double(m) * (m - 1)) + syy / (double(n) * (n - 1)) - 2 * sxy / cross;
}

} // namespace

TEST_CASE("psnr reference values and monotonicity")
{
    Rng rng(1);
    const TextureMap a = random_texture(8, 8, rng);
    CHECK(psnr(a, a) == 100.0);
    CHECK(psnr(TextureMap(4, 4, 0.f), TextureMap(4, 4, 0.5f)) == doctest::Approx(6.0206).epsilon(1e-4));
    double last = 1e9;
    for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
        TextureMap b = a;
        Rng n(2);
        std::uniform_real_distribution<double> u(-amp, amp);
        for (auto& v : b.pixels.values()) v += static_cast<float>(u(n));
        const double p = psnr(a, b);
        CHECK(p < last);
        last = p;
    }
    CHECK_THROWS(psnr(TextureMap(4, 4), TextureMap(4, 5)));
}

TEST_CASE("ssim matches a direct windowed oracle and is symmetric")
{
    Rng rng(3);
    for (int t = 0; t < 5; ++t) {
        const TextureMap a = random_texture(32, 32, rng), b = random_texture(32, 32, rng);
        CHECK(std::abs(ssim(a, b) - ssim_oracle(a, b)) < 1e-10);
        CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-14);
        CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK_THROWS(ssim(TextureMap(10, 10), TextureMap(10, 10)));
}

TEST_CASE("fid closed forms and invariances")
{
    Rng rng(4);
    const Eigen::MatrixXd a = gaussian_set(200, 4, 0, rng), b = gaussian_set(200, 4, 0.5, rng);
    CHECK(fid(a, a) < 1e-6);
    CHECK(std::abs(fid(a, b) - fid(b, a)) < 1e-6);

    FeatureMoments m1{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1)};
    FeatureMoments m2{Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Identity(1, 1)};
    CHECK(frechet_distance(m1, m2) == doctest::Approx(1.0).epsilon(1e-12));

    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(gaussian_set(4, 4, 0, rng)).householderQ();
    CHECK(std::abs(fid(a * q, b * q) - fid(a, b)) < 1e-6);

    Eigen::MatrixXd bad = a;
    bad(0, 0) = std::nan("");
    CHECK_THROWS(fid(bad, b));
}

TEST_CASE("kid matches the double-sum oracle")
{
    Rng rng(5);
    for (int t = 0; t < 10; ++t) {
        const Eigen::MatrixXd x = gaussian_set(16, 5, 0, rng), y = gaussian_set(16, 5, 0.3, rng);
        CHECK(std::abs(kid(x, y) - mmd_oracle(x, y)) < 1e-9);
        const Eigen::MatrixXd z = gaussian_set(11, 5, 0.3, rng);
        CHECK(std::abs(kid(x, z) - mmd_oracle(x, z)) < 1e-9);
        CHECK(std::abs(kid(x, y) - kid(y, x)) < 1e-12);
        CHECK(std::abs(kid(x, x)) < 1e-6);
    }
    CHECK_THROWS(kid(gaussian_set(1, 3, 0, rng), gaussian_set(4, 3, 0, rng)));
}

TEST_CASE("kid is nonnegative within noise for separated sets and blocks are deterministic")
{
    Rng rng(6);
    const Eigen::MatrixXd x = gaussian_set(100, 4, 0, rng), y = gaussian_set(100, 4, 2, rng);
    CHECK(kid(x, y) > 0.0);
    const KidOptions opts{20, 5, 9};
    CHECK(kid(x, y, opts) == kid(x, y, opts));
    CHECK(kid(x, y, opts) > 0.0);
}

TEST_CASE("diversity area of the 2-sigma ellipse")
{
    // Points with exactly identity sample covariance.
    Eigen::MatrixXd p(4, 2);
    const double s = std::sqrt(1.5);
    p << s, 0, -s, 0, 0, s, 0, -s;
    CHECK(diversity_area(p) == doctest::Approx(4 * std::numbers::pi).epsilon(1e-12));
    CHECK(diversity_area(2 * p) == doctest::Approx(16 * std::numbers::pi).epsilon(1e-12));
    Eigen::MatrixXd line(3, 2);
    line << 0, 0, 1, 1, 2, 2;
    CHECK_THROWS(diversity_area(line));

    Rng rng(7);
    const Eigen::MatrixXd wide = gaussian_set(300, 6, 0, rng);
    CHECK(embedding_diversity_area(wide) > embedding_diversity_area(0.5 * wide));
}
