#include <cmath>

#include "reavae/kernels.hpp"

namespace reavae::kernels {

namespace {

// Iterates the (outer, inner) layout of a normalisation group: for channel
// groups the group spans every sample's plane of that channel; for instance
// groups it is a single plane.
struct GroupLayout {
    int groups;
    int planes_per_group;
    std::size_t plane;
    int channels;
    NormGroup kind;

    std::size_t plane_offset(int g, int k) const
    {
        if (kind == NormGroup::instance) return static_cast<std::size_t>(g) * plane;
        return (static_cast<std::size_t>(k) * channels + g) * plane;
    }
    std::size_t count() const { return plane * planes_per_group; }
};

template <class T>
GroupLayout layout(const Tensor<T>& x, NormGroup kind)
{
    if (x.rank() != 4) throw std::invalid_argument("normalize expects NCHW input");
    const int n = x.dim(0), c = x.dim(1);
    const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    if (kind == NormGroup::channel) return {c, n, plane, c, kind};
    return {n * c, 1, plane, c, kind};
}

} // namespace

template <class T>
Tensor<T> normalize_forward(const Tensor<T>& x, NormGroup group, T eps, Tensor<T>& mean, Tensor<T>& var)
{
    const GroupLayout g = layout(x, group);
    mean = Tensor<T>({g.groups});
    var = Tensor<T>({g.groups});
    Tensor<T> xhat(x.shape());
    const double inv_count = 1.0 / static_cast<double>(g.count());
#pragma omp parallel for schedule(static)
    for (int gi = 0; gi < g.groups; ++gi) {
        double s = 0;
        for (int k = 0; k < g.planes_per_group; ++k) {
            const T* p = x.data() + g.plane_offset(gi, k);
            for (std::size_t q = 0; q < g.plane; ++q) s += p[q];
        }
        const double m = s * inv_count;
        double ss = 0;
        for (int k = 0; k < g.planes_per_group; ++k) {
            const T* p = x.data() + g.plane_offset(gi, k);
            for (std::size_t q = 0; q < g.plane; ++q) {
                const double d = p[q] - m;
                ss += d * d;
            }
        }
        const double v = ss * inv_count;
        mean[gi] = static_cast<T>(m);
        var[gi] = static_cast<T>(v);
        const double inv_std = 1.0 / std::sqrt(v + static_cast<double>(eps));
        for (int k = 0; k < g.planes_per_group; ++k) {
            const T* p = x.data() + g.plane_offset(gi, k);
            T* o = xhat.data() + g.plane_offset(gi, k);
            for (std::size_t q = 0; q < g.plane; ++q) o[q] = static_cast<T>((p[q] - m) * inv_std);
        }
    }
    return xhat;
}

template <class T>
Tensor<T> normalize_backward(const Tensor<T>& dy, const Tensor<T>& xhat, const Tensor<T>& var, NormGroup group,
                             T eps)
{
    const GroupLayout g = layout(dy, group);
    Tensor<T> dx(dy.shape());
    const double inv_count = 1.0 / static_cast<double>(g.count());
#pragma omp parallel for schedule(static)
    for (int gi = 0; gi < g.groups; ++gi) {
        double sum_dy = 0, sum_dy_xhat = 0;
        for (int k = 0; k < g.planes_per_group; ++k) {
            const std::size_t off = g.plane_offset(gi, k);
            for (std::size_t q = 0; q < g.plane; ++q) {
                sum_dy += dy[off + q];
                sum_dy_xhat += static_cast<double>(dy[off + q]) * xhat[off + q];
            }
        }
        const double mean_dy = sum_dy * inv_count, mean_dy_xhat = sum_dy_xhat * inv_count;
        const double inv_std = 1.0 / std::sqrt(static_cast<double>(var[gi]) + static_cast<double>(eps));
        for (int k = 0; k < g.planes_per_group; ++k) {
            const std::size_t off = g.plane_offset(gi, k);
            for (std::size_t q = 0; q < g.plane; ++q)
                dx[off + q] = static_cast<T>((dy[off + q] - mean_dy - xhat[off + q] * mean_dy_xhat) * inv_std);
        }
    }
    return dx;
}

#define REAVAE_INSTANTIATE(T)                                                                                  \
    template Tensor<T> normalize_forward<T>(const Tensor<T>&, NormGroup, T, Tensor<T>&, Tensor<T>&);           \
    template Tensor<T> normalize_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, NormGroup, T);
REAVAE_INSTANTIATE(float)
REAVAE_INSTANTIATE(double)
#undef REAVAE_INSTANTIATE

} // namespace reavae::kernels
