#include "reavae/reference.hpp"

#include <algorithm>
#include <cmath>

namespace reavae::reference {

template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, int stride, int pad)
{
    const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int cout = w.dim(0), k = w.dim(2);
    const int ho = kernels::conv_out_size(h, k, stride, pad), wo = kernels::conv_out_size(wd, k, stride, pad);
    Tensor<T> y({n, cout, ho, wo});
    for (int b = 0; b < n; ++b)
        for (int o = 0; o < cout; ++o)
            for (int i = 0; i < ho; ++i)
                for (int j = 0; j < wo; ++j) {
                    double s = bias ? (*bias)[o] : 0.0;
                    for (int c = 0; c < cin; ++c)
                        for (int ki = 0; ki < k; ++ki)
                            for (int kj = 0; kj < k; ++kj) {
                                const int ii = i * stride - pad + ki, jj = j * stride - pad + kj;
                                if (ii < 0 || ii >= h || jj < 0 || jj >= wd) continue;
                                s += static_cast<double>(w.at(o, c, ki, kj)) * x.at(b, c, ii, jj);
                            }
                    y.at(b, o, i, j) = static_cast<T>(s);
                }
    return y;
}

template <class T>
kernels::Conv2dGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, int stride,
                                        int pad)
{
    const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int cout = w.dim(0), k = w.dim(2), ho = dy.dim(2), wo = dy.dim(3);
    kernels::Conv2dGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>({cout})};
    for (int b = 0; b < n; ++b)
        for (int o = 0; o < cout; ++o)
            for (int i = 0; i < ho; ++i)
                for (int j = 0; j < wo; ++j) {
                    const T d = dy.at(b, o, i, j);
                    g.db[o] += d;
                    for (int c = 0; c < cin; ++c)
                        for (int ki = 0; ki < k; ++ki)
                            for (int kj = 0; kj < k; ++kj) {
                                const int ii = i * stride - pad + ki, jj = j * stride - pad + kj;
                                if (ii < 0 || ii >= h || jj < 0 || jj >= wd) continue;
                                g.dw.at(o, c, ki, kj) += d * x.at(b, c, ii, jj);
                                g.dx.at(b, c, ii, jj) += d * w.at(o, c, ki, kj);
                            }
                }
    return g;
}

template <class T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int out_h, int out_w)
{
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<T> y({n, c, out_h, out_w});
    auto source = [](int o, int in, int out) {
        const double s = (o + 0.5) * in / out - 0.5;
        return std::max(s, 0.0);
    };
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch)
            for (int i = 0; i < out_h; ++i)
                for (int j = 0; j < out_w; ++j) {
                    const double sy = source(i, h, out_h), sx = source(j, w, out_w);
                    const int y0 = std::min(static_cast<int>(sy), h - 1), x0 = std::min(static_cast<int>(sx), w - 1);
                    const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
                    const double fy = sy - y0, fx = sx - x0;
                    y.at(b, ch, i, j) = static_cast<T>(
                        (1 - fy) * ((1 - fx) * x.at(b, ch, y0, x0) + fx * x.at(b, ch, y0, x1)) +
                        fy * ((1 - fx) * x.at(b, ch, y1, x0) + fx * x.at(b, ch, y1, x1)));
                }
    return y;
}

template <class T>
Tensor<T> bilinear_sample(const Tensor<T>& tex, std::span<const float> uv, std::span<const std::uint8_t> mask,
                          int out_h, int out_w)
{
    const int n = tex.dim(0), c = tex.dim(1), th = tex.dim(2), tw = tex.dim(3);
    Tensor<T> y({n, c, out_h, out_w});
    for (int i = 0; i < out_h; ++i)
        for (int j = 0; j < out_w; ++j) {
            const std::size_t q = static_cast<std::size_t>(i) * out_w + j;
            if (!mask[q]) continue;
            const double x = std::clamp<double>(uv[2 * q], 0, 1) * (tw - 1);
            const double yy = std::clamp<double>(uv[2 * q + 1], 0, 1) * (th - 1);
            const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(yy));
            const int x1 = std::min(x0 + 1, tw - 1), y1 = std::min(y0 + 1, th - 1);
            const double fx = x - x0, fy = yy - y0;
            for (int b = 0; b < n; ++b)
                for (int ch = 0; ch < c; ++ch)
                    y.at(b, ch, i, j) = static_cast<T>(
                        (1 - fy) * ((1 - fx) * tex.at(b, ch, y0, x0) + fx * tex.at(b, ch, y0, x1)) +
                        fy * ((1 - fx) * tex.at(b, ch, y1, x0) + fx * tex.at(b, ch, y1, x1)));
        }
    return y;
}

template <class T>
Tensor<T> region_pool(const Tensor<T>& features, const Labels& labels, int num_classes)
{
    const int n = features.dim(0), ch = features.dim(1);
    Tensor<T> out({n, num_classes, ch});
    for (int b = 0; b < n; ++b)
        for (int c = 0; c < num_classes; ++c)
            for (int w = 0; w < ch; ++w) {
                double s = 0;
                int count = 0;
                for (int i = 0; i < labels.height; ++i)
                    for (int j = 0; j < labels.width; ++j)
                        if (labels.at(b, i, j) == c) {
                            s += features.at(b, w, i, j);
                            ++count;
                        }
                out[(static_cast<std::size_t>(b) * num_classes + c) * ch + w] =
                    count ? static_cast<T>(s / count) : T{0};
            }
    return out;
}

template <class T>
Tensor<T> broadcast_codes(const Tensor<T>& codes, const Labels& labels)
{
    const int n = codes.dim(0), num_classes = codes.dim(1), depth = codes.dim(2);
    Tensor<T> y({n, depth, labels.height, labels.width});
    for (int b = 0; b < n; ++b)
        for (int d = 0; d < depth; ++d)
            for (int i = 0; i < labels.height; ++i)
                for (int j = 0; j < labels.width; ++j)
                    y.at(b, d, i, j) = codes[(static_cast<std::size_t>(b) * num_classes + labels.at(b, i, j)) * depth + d];
    return y;
}

template <class T>
Tensor<T> batch_normalize(const Tensor<T>& x, T eps)
{
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<T> y(x.shape());
    for (int ch = 0; ch < c; ++ch) {
        double s = 0;
        for (int b = 0; b < n; ++b)
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) s += x.at(b, ch, i, j);
        const double count = static_cast<double>(n) * h * w, m = s / count;
        double v = 0;
        for (int b = 0; b < n; ++b)
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) v += (x.at(b, ch, i, j) - m) * (x.at(b, ch, i, j) - m);
        v /= count;
        for (int b = 0; b < n; ++b)
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) y.at(b, ch, i, j) = static_cast<T>((x.at(b, ch, i, j) - m) / std::sqrt(v + eps));
    }
    return y;
}

#define REAVAE_INSTANTIATE(T)                                                                                   \
    template Tensor<T> conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, int, int);       \
    template kernels::Conv2dGrads<T> conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                                        int, int);                                              \
    template Tensor<T> resize_bilinear<T>(const Tensor<T>&, int, int);                                          \
    template Tensor<T> bilinear_sample<T>(const Tensor<T>&, std::span<const float>,                             \
                                          std::span<const std::uint8_t>, int, int);                             \
    template Tensor<T> region_pool<T>(const Tensor<T>&, const Labels&, int);                                    \
    template Tensor<T> broadcast_codes<T>(const Tensor<T>&, const Labels&);                                     \
    template Tensor<T> batch_normalize<T>(const Tensor<T>&, T);
REAVAE_INSTANTIATE(float)
REAVAE_INSTANTIATE(double)
#undef REAVAE_INSTANTIATE

} // namespace reavae::reference
