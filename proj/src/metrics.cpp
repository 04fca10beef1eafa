#include "reavae/metrics.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "reavae/rng.hpp"

namespace reavae {

namespace {

void require_same_size(const TextureMap& a, const TextureMap& b, const char* what)
{
    if (a.height() != b.height() || a.width() != b.width())
        throw std::invalid_argument(std::string(what) + ": images differ in size");
}

Eigen::MatrixXd luminance(const TextureMap& t)
{
    Eigen::MatrixXd y(t.height(), t.width());
    for (int i = 0; i < t.height(); ++i)
        for (int j = 0; j < t.width(); ++j)
            y(i, j) = (static_cast<double>(t.at(0, i, j)) + t.at(1, i, j) + t.at(2, i, j)) / 3.0;
    return y;
}

void require_finite(const Eigen::MatrixXd& m, const char* what)
{
    if (!m.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite embeddings");
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    const Eigen::VectorXd d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

} // namespace

double psnr(const TextureMap& a, const TextureMap& b)
{
    require_same_size(a, b, "psnr");
    double se = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.pixels.size());
    if (mse <= 0) return psnr_cap;
    return std::min(psnr_cap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const TextureMap& a, const TextureMap& b)
{
    require_same_size(a, b, "ssim");
    constexpr int k = 11;
    constexpr double sigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    if (a.height() < k || a.width() < k) throw std::invalid_argument("ssim: image smaller than the 11×11 window");
    double g[k], gs = 0;
    for (int i = 0; i < k; ++i) gs += g[i] = std::exp(-0.5 * ((i - k / 2) * (i - k / 2)) / (sigma * sigma));
    for (double& v : g) v /= gs;

    const Eigen::MatrixXd x = luminance(a), y = luminance(b);
    const int oh = a.height() - k + 1, ow = a.width() - k + 1;
    double total = 0;
    for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (int u = 0; u < k; ++u)
                for (int v = 0; v < k; ++v) {
                    const double w = g[u] * g[v], p = x(i + u, j + v), q = y(i + u, j + v);
                    mx += w * p;
                    my += w * q;
                    sxx += w * p * p;
                    syy += w * q * q;
                    sxy += w * p * q;
                }
            const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
            total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    return total / (static_cast<double>(oh) * ow);
}

FeatureMoments feature_moments(const Eigen::MatrixXd& f)
{
    require_finite(f, "feature statistics");
    if (f.rows() < 2) throw std::invalid_argument("feature statistics need at least two samples");
    FeatureMoments m;
    m.mean = f.colwise().mean().transpose();
    const Eigen::MatrixXd c = f.rowwise() - m.mean.transpose();
    m.cov = (c.transpose() * c) / static_cast<double>(f.rows() - 1);
    return m;
}

double frechet_distance(const FeatureMoments& a, const FeatureMoments& b)
{
    if (a.mean.size() != b.mean.size()) throw std::invalid_argument("frechet_distance: dimension mismatch");
    const Eigen::MatrixXd s1 = psd_sqrt(a.cov);
    const Eigen::MatrixXd cross = psd_sqrt(s1 * b.cov * s1);
    const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
    return std::max(0.0, d);
}

double fid(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake)
{
    if (real.rows() <= real.cols() || fake.rows() <= fake.cols())
        spdlog::warn("fid: {} / {} samples for {} dimensions; covariance is rank deficient", real.rows(), fake.rows(),
                     real.cols());
    return frechet_distance(feature_moments(real), feature_moments(fake));
}

namespace {

double mmd2_unbiased(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake)
{
    const Eigen::Index m = real.rows(), n = fake.rows();
    const double d = static_cast<double>(real.cols());
    auto kernel = [d](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
        Eigen::MatrixXd k = (a * b.transpose()).array() / d + 1.0;
        return Eigen::MatrixXd(k.array().cube());
    };
    const Eigen::MatrixXd kxx = kernel(real, real), kyy = kernel(fake, fake), kxy = kernel(real, fake);
    const double sxx = (kxx.sum() - kxx.trace()) / (static_cast<double>(m) * (m - 1));
    const double syy = (kyy.sum() - kyy.trace()) / (static_cast<double>(n) * (n - 1));
    // Equal-size sets use the U-statistic form, which also drops the i = j
    // cross terms; it is exactly zero when both sets are the same samples.
    const double sxy = m == n ? (kxy.sum() - kxy.trace()) / (static_cast<double>(m) * (m - 1))
                              : kxy.sum() / (static_cast<double>(m) * n);
    return sxx + syy - 2.0 * sxy;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, std::vector<Eigen::Index> idx, int count)
{
    Eigen::MatrixXd out(count, x.cols());
    for (int i = 0; i < count; ++i) out.row(i) = x.row(idx[i]);
    return out;
}

} // namespace

double kid(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake, const KidOptions& opts)
{
    if (real.rows() < 2 || fake.rows() < 2) throw std::invalid_argument("kid needs at least two samples per set");
    if (real.cols() != fake.cols()) throw std::invalid_argument("kid: dimension mismatch");
    require_finite(real, "kid");
    require_finite(fake, "kid");
    if (opts.block_size <= 0) return mmd2_unbiased(real, fake);
    if (opts.block_size < 2 || opts.blocks < 1) throw std::invalid_argument("kid: invalid block options");
    const int bm = std::min<int>(opts.block_size, static_cast<int>(real.rows()));
    const int bn = std::min<int>(opts.block_size, static_cast<int>(fake.rows()));
    std::vector<Eigen::Index> ir(real.rows()), jf(fake.rows());
    double total = 0;
    for (int b = 0; b < opts.blocks; ++b) {
        Rng rng(derive_seed(opts.seed, {seed_tag::kid_blocks, static_cast<std::uint64_t>(b)}));
        std::iota(ir.begin(), ir.end(), 0);
        std::iota(jf.begin(), jf.end(), 0);
        std::shuffle(ir.begin(), ir.end(), rng);
        std::shuffle(jf.begin(), jf.end(), rng);
        total += mmd2_unbiased(take_rows(real, ir, bm), take_rows(fake, jf, bn));
    }
    return total / opts.blocks;
}

Eigen::MatrixXd pca_2d(const Eigen::MatrixXd& features)
{
    const FeatureMoments m = feature_moments(features);
    if (features.cols() < 2) throw std::invalid_argument("pca_2d needs at least two feature dimensions");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.cov);
    // Eigenvalues ascend; take the last two columns, largest first.
    Eigen::MatrixXd axes(features.cols(), 2);
    axes.col(0) = es.eigenvectors().col(features.cols() - 1);
    axes.col(1) = es.eigenvectors().col(features.cols() - 2);
    return (features.rowwise() - m.mean.transpose()) * axes;
}

double diversity_area(const Eigen::MatrixXd& points2d)
{
    if (points2d.cols() != 2) throw std::invalid_argument("diversity_area expects N×2 points");
    if (points2d.rows() < 3) throw std::invalid_argument("diversity_area needs at least three points");
    const Eigen::Matrix2d cov = feature_moments(points2d).cov;
    const double det = cov.determinant();
    if (!(det > 1e-12 * std::max(1e-300, cov.trace() * cov.trace())))
        throw std::invalid_argument("diversity_area: singular covariance");
    return 4.0 * std::numbers::pi * std::sqrt(det);
}

double embedding_diversity_area(const Eigen::MatrixXd& features)
{
    return diversity_area(pca_2d(features));
}

} // namespace reavae
