#include <algorithm>
#include <cmath>

#include "reavae/kernels.hpp"

namespace reavae::kernels {

namespace {

void require_rank4(const Shape& s, const char* what)
{
    if (s.size() != 4) throw std::invalid_argument(std::string(what) + " expects NCHW input, got " + to_string(s));
}

struct LinearTap {
    int i0, i1;
    double w1; // weight of i1; i0 gets 1 - w1
};

std::vector<LinearTap> half_pixel_taps(int in, int out)
{
    std::vector<LinearTap> taps(out);
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        if (src < 0) src = 0;
        int i0 = static_cast<int>(std::floor(src));
        if (i0 > in - 1) i0 = in - 1;
        const int i1 = std::min(i0 + 1, in - 1);
        taps[o] = {i0, i1, src - i0};
    }
    return taps;
}

double cubic_weight(double t)
{
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

struct TexelTap {
    int x0, x1, y0, y1;
    double fx, fy;
};

TexelTap texel_tap(float u, float v, int tex_h, int tex_w)
{
    const double uc = std::clamp(static_cast<double>(u), 0.0, 1.0);
    const double vc = std::clamp(static_cast<double>(v), 0.0, 1.0);
    const double x = uc * (tex_w - 1);
    const double y = vc * (tex_h - 1);
    TexelTap t{};
    t.x0 = static_cast<int>(std::floor(x));
    t.y0 = static_cast<int>(std::floor(y));
    t.x1 = std::min(t.x0 + 1, tex_w - 1);
    t.y1 = std::min(t.y0 + 1, tex_h - 1);
    t.fx = x - t.x0;
    t.fy = y - t.y0;
    return t;
}

} // namespace

template <class T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int out_h, int out_w)
{
    require_rank4(x.shape(), "resize_bilinear");
    const int nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    const auto rows = half_pixel_taps(h, out_h);
    const auto cols = half_pixel_taps(w, out_w);
    Tensor<T> y({x.dim(0), x.dim(1), out_h, out_w});
#pragma omp parallel for schedule(static)
    for (int p = 0; p < nc; ++p) {
        const T* src = x.data() + static_cast<std::size_t>(p) * h * w;
        T* dst = y.data() + static_cast<std::size_t>(p) * out_h * out_w;
        for (int i = 0; i < out_h; ++i) {
            const auto& r = rows[i];
            const T* a = src + static_cast<std::size_t>(r.i0) * w;
            const T* b = src + static_cast<std::size_t>(r.i1) * w;
            const T wr = static_cast<T>(r.w1);
            for (int j = 0; j < out_w; ++j) {
                const auto& c = cols[j];
                const T wc = static_cast<T>(c.w1);
                const T top = a[c.i0] + (a[c.i1] - a[c.i0]) * wc;
                const T bot = b[c.i0] + (b[c.i1] - b[c.i0]) * wc;
                dst[i * out_w + j] = top + (bot - top) * wr;
            }
        }
    }
    return y;
}

template <class T>
Tensor<T> resize_bilinear_backward(const Tensor<T>& dy, int in_h, int in_w)
{
    require_rank4(dy.shape(), "resize_bilinear_backward");
    const int nc = dy.dim(0) * dy.dim(1), out_h = dy.dim(2), out_w = dy.dim(3);
    const auto rows = half_pixel_taps(in_h, out_h);
    const auto cols = half_pixel_taps(in_w, out_w);
    Tensor<T> dx({dy.dim(0), dy.dim(1), in_h, in_w});
#pragma omp parallel for schedule(static)
    for (int p = 0; p < nc; ++p) {
        const T* g = dy.data() + static_cast<std::size_t>(p) * out_h * out_w;
        T* d = dx.data() + static_cast<std::size_t>(p) * in_h * in_w;
        for (int i = 0; i < out_h; ++i) {
            const auto& r = rows[i];
            const T wr1 = static_cast<T>(r.w1), wr0 = T{1} - wr1;
            for (int j = 0; j < out_w; ++j) {
                const auto& c = cols[j];
                const T wc1 = static_cast<T>(c.w1), wc0 = T{1} - wc1;
                const T v = g[i * out_w + j];
                d[r.i0 * in_w + c.i0] += v * wr0 * wc0;
                d[r.i0 * in_w + c.i1] += v * wr0 * wc1;
                d[r.i1 * in_w + c.i0] += v * wr1 * wc0;
                d[r.i1 * in_w + c.i1] += v * wr1 * wc1;
            }
        }
    }
    return dx;
}

template <class T>
Tensor<T> upsample_nearest(const Tensor<T>& x, int factor)
{
    require_rank4(x.shape(), "upsample_nearest");
    const int nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = h * factor, ow = w * factor;
    Tensor<T> y({x.dim(0), x.dim(1), oh, ow});
#pragma omp parallel for schedule(static)
    for (int p = 0; p < nc; ++p) {
        const T* src = x.data() + static_cast<std::size_t>(p) * h * w;
        T* dst = y.data() + static_cast<std::size_t>(p) * oh * ow;
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) dst[i * ow + j] = src[(i / factor) * w + j / factor];
    }
    return y;
}

template <class T>
Tensor<T> upsample_nearest_backward(const Tensor<T>& dy, int factor)
{
    require_rank4(dy.shape(), "upsample_nearest_backward");
    const int nc = dy.dim(0) * dy.dim(1), oh = dy.dim(2), ow = dy.dim(3);
    const int h = oh / factor, w = ow / factor;
    Tensor<T> dx({dy.dim(0), dy.dim(1), h, w});
#pragma omp parallel for schedule(static)
    for (int p = 0; p < nc; ++p) {
        const T* g = dy.data() + static_cast<std::size_t>(p) * oh * ow;
        T* d = dx.data() + static_cast<std::size_t>(p) * h * w;
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) d[(i / factor) * w + j / factor] += g[i * ow + j];
    }
    return dx;
}

template <class T>
Tensor<T> avg_pool2(const Tensor<T>& x)
{
    require_rank4(x.shape(), "avg_pool2");
    const int nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = h / 2, ow = w / 2;
    Tensor<T> y({x.dim(0), x.dim(1), oh, ow});
#pragma omp parallel for schedule(static)
    for (int p = 0; p < nc; ++p) {
        const T* src = x.data() + static_cast<std::size_t>(p) * h * w;
        T* dst = y.data() + static_cast<std::size_t>(p) * oh * ow;
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
                const T* a = src + (2 * i) * w + 2 * j;
                dst[i * ow + j] = (a[0] + a[1] + a[w] + a[w + 1]) * T(0.25);
            }
    }
    return y;
}

template <class T>
Tensor<T> avg_pool2_backward(const Tensor<T>& dy, int in_h, int in_w)
{
    require_rank4(dy.shape(), "avg_pool2_backward");
    const int nc = dy.dim(0) * dy.dim(1), oh = dy.dim(2), ow = dy.dim(3);
    Tensor<T> dx({dy.dim(0), dy.dim(1), in_h, in_w});
#pragma omp parallel for schedule(static)
    for (int p = 0; p < nc; ++p) {
        const T* g = dy.data() + static_cast<std::size_t>(p) * oh * ow;
        T* d = dx.data() + static_cast<std::size_t>(p) * in_h * in_w;
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
                const T v = g[i * ow + j] * T(0.25);
                T* a = d + (2 * i) * in_w + 2 * j;
                a[0] += v;
                a[1] += v;
                a[in_w] += v;
                a[in_w + 1] += v;
            }
    }
    return dx;
}

template <class T>
Tensor<T> area_downsample(const Tensor<T>& x, int factor)
{
    require_rank4(x.shape(), "area_downsample");
    const int nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % factor != 0 || w % factor != 0)
        throw std::invalid_argument("area_downsample: size not divisible by factor");
    const int oh = h / factor, ow = w / factor;
    const double inv = 1.0 / (factor * factor);
    Tensor<T> y({x.dim(0), x.dim(1), oh, ow});
#pragma omp parallel for schedule(static)
    for (int p = 0; p < nc; ++p) {
        const T* src = x.data() + static_cast<std::size_t>(p) * h * w;
        T* dst = y.data() + static_cast<std::size_t>(p) * oh * ow;
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
                double s = 0;
                for (int a = 0; a < factor; ++a)
                    for (int b = 0; b < factor; ++b) s += src[(i * factor + a) * w + j * factor + b];
                dst[i * ow + j] = static_cast<T>(s * inv);
            }
    }
    return y;
}

template <class T>
Tensor<T> bicubic_upsample(const Tensor<T>& x, int factor)
{
    require_rank4(x.shape(), "bicubic_upsample");
    const int nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = h * factor, ow = w * factor;

    struct Taps {
        int idx[4];
        double wt[4];
    };
    auto make_taps = [factor](int in, int out) {
        std::vector<Taps> taps(out);
        for (int o = 0; o < out; ++o) {
            const double src = (o + 0.5) / factor - 0.5;
            const int base = static_cast<int>(std::floor(src));
            for (int k = 0; k < 4; ++k) {
                const int i = base - 1 + k;
                taps[o].idx[k] = std::clamp(i, 0, in - 1);
                taps[o].wt[k] = cubic_weight(src - i);
            }
        }
        return taps;
    };
    const auto rows = make_taps(h, oh);
    const auto cols = make_taps(w, ow);

    Tensor<T> y({x.dim(0), x.dim(1), oh, ow});
#pragma omp parallel for schedule(static)
    for (int p = 0; p < nc; ++p) {
        const T* src = x.data() + static_cast<std::size_t>(p) * h * w;
        T* dst = y.data() + static_cast<std::size_t>(p) * oh * ow;
        std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < ow; ++j) {
                double s = 0;
                for (int k = 0; k < 4; ++k) s += cols[j].wt[k] * src[i * w + cols[j].idx[k]];
                tmp[static_cast<std::size_t>(i) * ow + j] = s;
            }
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
                double s = 0;
                for (int k = 0; k < 4; ++k) s += rows[i].wt[k] * tmp[static_cast<std::size_t>(rows[i].idx[k]) * ow + j];
                dst[i * ow + j] = static_cast<T>(s);
            }
    }
    return y;
}

template <class T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r)
{
    require_rank4(x.shape(), "pixel_shuffle");
    const int n = x.dim(0), cr = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (cr % (r * r) != 0) throw std::invalid_argument("pixel_shuffle: channels not divisible by r^2");
    const int c = cr / (r * r);
    Tensor<T> y({n, c, h * r, w * r});
#pragma omp parallel for schedule(static)
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch)
            for (int i = 0; i < h * r; ++i)
                for (int j = 0; j < w * r; ++j)
                    y.at(b, ch, i, j) = x.at(b, ch * r * r + (i % r) * r + (j % r), i / r, j / r);
    return y;
}

template <class T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r)
{
    require_rank4(x.shape(), "pixel_unshuffle");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2) / r, w = x.dim(3) / r;
    Tensor<T> y({n, c * r * r, h, w});
#pragma omp parallel for schedule(static)
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch)
            for (int i = 0; i < h * r; ++i)
                for (int j = 0; j < w * r; ++j)
                    y.at(b, ch * r * r + (i % r) * r + (j % r), i / r, j / r) = x.at(b, ch, i, j);
    return y;
}

template <class T>
Tensor<T> bilinear_sample(const Tensor<T>& tex, std::span<const float> uv, std::span<const std::uint8_t> mask,
                          int out_h, int out_w)
{
    require_rank4(tex.shape(), "bilinear_sample");
    const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
    if (uv.size() != 2 * plane || mask.size() != plane)
        throw std::invalid_argument("bilinear_sample: uv/mask size does not match view size");
    const int nc = tex.dim(0) * tex.dim(1), th = tex.dim(2), tw = tex.dim(3);
    Tensor<T> y({tex.dim(0), tex.dim(1), out_h, out_w});
#pragma omp parallel for schedule(static)
    for (int p = 0; p < nc; ++p) {
        const T* src = tex.data() + static_cast<std::size_t>(p) * th * tw;
        T* dst = y.data() + static_cast<std::size_t>(p) * plane;
        for (std::size_t q = 0; q < plane; ++q) {
            if (!mask[q]) continue;
            const TexelTap t = texel_tap(uv[2 * q], uv[2 * q + 1], th, tw);
            const T fx = static_cast<T>(t.fx), fy = static_cast<T>(t.fy);
            const T top = src[t.y0 * tw + t.x0] * (T{1} - fx) + src[t.y0 * tw + t.x1] * fx;
            const T bot = src[t.y1 * tw + t.x0] * (T{1} - fx) + src[t.y1 * tw + t.x1] * fx;
            dst[q] = top * (T{1} - fy) + bot * fy;
        }
    }
    return y;
}

template <class T>
Tensor<T> bilinear_sample_backward(const Tensor<T>& dy, std::span<const float> uv,
                                   std::span<const std::uint8_t> mask, int tex_h, int tex_w)
{
    require_rank4(dy.shape(), "bilinear_sample_backward");
    const int nc = dy.dim(0) * dy.dim(1);
    const std::size_t plane = static_cast<std::size_t>(dy.dim(2)) * dy.dim(3);
    Tensor<T> dtex({dy.dim(0), dy.dim(1), tex_h, tex_w});
#pragma omp parallel for schedule(static)
    for (int p = 0; p < nc; ++p) {
        const T* g = dy.data() + static_cast<std::size_t>(p) * plane;
        T* d = dtex.data() + static_cast<std::size_t>(p) * tex_h * tex_w;
        for (std::size_t q = 0; q < plane; ++q) {
            if (!mask[q]) continue;
            const TexelTap t = texel_tap(uv[2 * q], uv[2 * q + 1], tex_h, tex_w);
            const T fx = static_cast<T>(t.fx), fy = static_cast<T>(t.fy);
            const T v = g[q];
            d[t.y0 * tex_w + t.x0] += v * (T{1} - fx) * (T{1} - fy);
            d[t.y0 * tex_w + t.x1] += v * fx * (T{1} - fy);
            d[t.y1 * tex_w + t.x0] += v * (T{1} - fx) * fy;
            d[t.y1 * tex_w + t.x1] += v * fx * fy;
        }
    }
    return dtex;
}

template <class T>
Tensor<T> forward_difference(const Tensor<T>& x, int dir)
{
    require_rank4(x.shape(), "forward_difference");
    const int nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<T> y(x.shape());
#pragma omp parallel for schedule(static)
    for (int p = 0; p < nc; ++p) {
        const T* a = x.data() + static_cast<std::size_t>(p) * h * w;
        T* d = y.data() + static_cast<std::size_t>(p) * h * w;
        if (dir == 0) {
            for (int i = 0; i < h; ++i)
                for (int j = 0; j + 1 < w; ++j) d[i * w + j] = a[i * w + j + 1] - a[i * w + j];
        } else {
            for (int i = 0; i + 1 < h; ++i)
                for (int j = 0; j < w; ++j) d[i * w + j] = a[(i + 1) * w + j] - a[i * w + j];
        }
    }
    return y;
}

template <class T>
Tensor<T> forward_difference_backward(const Tensor<T>& dy, int dir)
{
    require_rank4(dy.shape(), "forward_difference_backward");
    const int nc = dy.dim(0) * dy.dim(1), h = dy.dim(2), w = dy.dim(3);
    Tensor<T> dx(dy.shape());
#pragma omp parallel for schedule(static)
    for (int p = 0; p < nc; ++p) {
        const T* g = dy.data() + static_cast<std::size_t>(p) * h * w;
        T* d = dx.data() + static_cast<std::size_t>(p) * h * w;
        if (dir == 0) {
            for (int i = 0; i < h; ++i)
                for (int j = 0; j + 1 < w; ++j) {
                    d[i * w + j + 1] += g[i * w + j];
                    d[i * w + j] -= g[i * w + j];
                }
        } else {
            for (int i = 0; i + 1 < h; ++i)
                for (int j = 0; j < w; ++j) {
                    d[(i + 1) * w + j] += g[i * w + j];
                    d[i * w + j] -= g[i * w + j];
                }
        }
    }
    return dx;
}

#define REAVAE_INSTANTIATE(T)                                                                                     \
    template Tensor<T> resize_bilinear<T>(const Tensor<T>&, int, int);                                            \
    template Tensor<T> resize_bilinear_backward<T>(const Tensor<T>&, int, int);                                   \
    template Tensor<T> upsample_nearest<T>(const Tensor<T>&, int);                                                \
    template Tensor<T> upsample_nearest_backward<T>(const Tensor<T>&, int);                                       \
    template Tensor<T> avg_pool2<T>(const Tensor<T>&);                                                            \
    template Tensor<T> avg_pool2_backward<T>(const Tensor<T>&, int, int);                                         \
    template Tensor<T> area_downsample<T>(const Tensor<T>&, int);                                                 \
    template Tensor<T> bicubic_upsample<T>(const Tensor<T>&, int);                                                \
    template Tensor<T> pixel_shuffle<T>(const Tensor<T>&, int);                                                   \
    template Tensor<T> pixel_unshuffle<T>(const Tensor<T>&, int);                                                 \
    template Tensor<T> bilinear_sample<T>(const Tensor<T>&, std::span<const float>, std::span<const std::uint8_t>, \
                                          int, int);                                                              \
    template Tensor<T> bilinear_sample_backward<T>(const Tensor<T>&, std::span<const float>,                      \
                                                   std::span<const std::uint8_t>, int, int);                      \
    template Tensor<T> forward_difference<T>(const Tensor<T>&, int);                                              \
    template Tensor<T> forward_difference_backward<T>(const Tensor<T>&, int);
REAVAE_INSTANTIATE(float)
REAVAE_INSTANTIATE(double)
#undef REAVAE_INSTANTIATE

} // namespace reavae::kernels
