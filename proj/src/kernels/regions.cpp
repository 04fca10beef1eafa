#include <string>

#include "reavae/kernels.hpp"

namespace reavae::kernels {

namespace {

void check_labels(const Labels& labels, int num_classes)
{
    for (int v : labels.data)
        if (v < 0 || v >= num_classes)
            throw std::out_of_range("label " + std::to_string(v) + " outside [0, " + std::to_string(num_classes) + ")");
}

void check_spatial(const Shape& s, const Labels& labels, const char* what)
{
    if (s.size() < 3 || s[0] != labels.batch || s[s.size() - 2] != labels.height || s[s.size() - 1] != labels.width)
        throw std::invalid_argument(std::string(what) + ": label plane " + std::to_string(labels.batch) + "x" +
                                    std::to_string(labels.height) + "x" + std::to_string(labels.width) +
                                    " does not match tensor " + to_string(s));
}

} // namespace

Labels resize_labels_nearest(const Labels& labels, int out_h, int out_w)
{
    if (out_h == labels.height && out_w == labels.width) return labels;
    Labels out(labels.batch, out_h, out_w);
    for (int n = 0; n < labels.batch; ++n)
        for (int i = 0; i < out_h; ++i) {
            const int si = static_cast<int>(static_cast<long long>(i) * labels.height / out_h);
            for (int j = 0; j < out_w; ++j) {
                const int sj = static_cast<int>(static_cast<long long>(j) * labels.width / out_w);
                out.at(n, i, j) = labels.at(n, si, sj);
            }
        }
    return out;
}

template <class T>
Tensor<T> one_hot(const Labels& labels, int num_classes)
{
    check_labels(labels, num_classes);
    Tensor<T> y({labels.batch, num_classes, labels.height, labels.width});
    const std::size_t plane = labels.plane();
    for (int n = 0; n < labels.batch; ++n)
        for (std::size_t p = 0; p < plane; ++p) {
            const int c = labels.data[n * plane + p];
            y[(static_cast<std::size_t>(n) * num_classes + c) * plane + p] = T{1};
        }
    return y;
}

template <class T>
RegionPoolResult<T> region_pool(const Tensor<T>& features, const Labels& labels, int num_classes)
{
    check_spatial(features.shape(), labels, "region_pool");
    check_labels(labels, num_classes);
    const int n_batch = features.dim(0), channels = features.dim(1);
    const std::size_t plane = labels.plane();

    RegionPoolResult<T> out{Tensor<T>({n_batch, num_classes, channels}),
                            std::vector<int>(static_cast<std::size_t>(n_batch) * num_classes, 0)};
    for (int n = 0; n < n_batch; ++n)
        for (std::size_t p = 0; p < plane; ++p) ++out.counts[n * num_classes + labels.data[n * plane + p]];

#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < n_batch; ++n) {
        for (int w = 0; w < channels; ++w) {
            std::vector<double> sums(num_classes, 0.0);
            const T* f = features.data() + (static_cast<std::size_t>(n) * channels + w) * plane;
            const int* lab = labels.data.data() + n * plane;
            for (std::size_t p = 0; p < plane; ++p) sums[lab[p]] += f[p];
            for (int c = 0; c < num_classes; ++c) {
                const int count = out.counts[n * num_classes + c];
                out.styles[(static_cast<std::size_t>(n) * num_classes + c) * channels + w] =
                    count > 0 ? static_cast<T>(sums[c] / count) : T{0};
            }
        }
    }
    return out;
}

template <class T>
Tensor<T> region_pool_backward(const Tensor<T>& dstyles, const std::vector<int>& counts, const Labels& labels,
                               int feature_channels)
{
    const int n_batch = labels.batch, num_classes = dstyles.dim(1);
    const std::size_t plane = labels.plane();
    Tensor<T> df({n_batch, feature_channels, labels.height, labels.width});
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < n_batch; ++n) {
        for (int w = 0; w < feature_channels; ++w) {
            T* d = df.data() + (static_cast<std::size_t>(n) * feature_channels + w) * plane;
            const int* lab = labels.data.data() + n * plane;
            for (std::size_t p = 0; p < plane; ++p) {
                const int c = lab[p];
                d[p] = dstyles[(static_cast<std::size_t>(n) * num_classes + c) * feature_channels + w] /
                       static_cast<T>(counts[n * num_classes + c]);
            }
        }
    }
    return df;
}

template <class T>
Tensor<T> broadcast_codes(const Tensor<T>& codes, const Labels& labels)
{
    if (codes.rank() != 3 || codes.dim(0) != labels.batch)
        throw std::invalid_argument("broadcast_codes: codes " + to_string(codes.shape()) + " vs label batch " +
                                    std::to_string(labels.batch));
    const int n_batch = codes.dim(0), num_classes = codes.dim(1), depth = codes.dim(2);
    check_labels(labels, num_classes);
    const std::size_t plane = labels.plane();
    Tensor<T> map({n_batch, depth, labels.height, labels.width});
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < n_batch; ++n) {
        for (int d = 0; d < depth; ++d) {
            T* dst = map.data() + (static_cast<std::size_t>(n) * depth + d) * plane;
            const int* lab = labels.data.data() + n * plane;
            const T* row = codes.data() + static_cast<std::size_t>(n) * num_classes * depth + d;
            for (std::size_t p = 0; p < plane; ++p) dst[p] = row[static_cast<std::size_t>(lab[p]) * depth];
        }
    }
    return map;
}

template <class T>
Tensor<T> broadcast_codes_backward(const Tensor<T>& dmap, const Labels& labels, int num_classes)
{
    check_spatial(dmap.shape(), labels, "broadcast_codes_backward");
    const int n_batch = dmap.dim(0), depth = dmap.dim(1);
    const std::size_t plane = labels.plane();
    Tensor<T> dcodes({n_batch, num_classes, depth});
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < n_batch; ++n) {
        for (int d = 0; d < depth; ++d) {
            std::vector<double> sums(num_classes, 0.0);
            const T* g = dmap.data() + (static_cast<std::size_t>(n) * depth + d) * plane;
            const int* lab = labels.data.data() + n * plane;
            for (std::size_t p = 0; p < plane; ++p) sums[lab[p]] += g[p];
            for (int c = 0; c < num_classes; ++c)
                dcodes[(static_cast<std::size_t>(n) * num_classes + c) * depth + d] = static_cast<T>(sums[c]);
        }
    }
    return dcodes;
}

#define REAVAE_INSTANTIATE(T)                                                                                    \
    template Tensor<T> one_hot<T>(const Labels&, int);                                                           \
    template RegionPoolResult<T> region_pool<T>(const Tensor<T>&, const Labels&, int);                           \
    template Tensor<T> region_pool_backward<T>(const Tensor<T>&, const std::vector<int>&, const Labels&, int);   \
    template Tensor<T> broadcast_codes<T>(const Tensor<T>&, const Labels&);                                      \
    template Tensor<T> broadcast_codes_backward<T>(const Tensor<T>&, const Labels&, int);
REAVAE_INSTANTIATE(float)
REAVAE_INSTANTIATE(double)
#undef REAVAE_INSTANTIATE

} // namespace reavae::kernels
