#include <Eigen/Core>

#include "reavae/kernels.hpp"

namespace reavae::kernels {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

struct Geometry {
    int cin, h, w, cout, k, stride, pad, ho, wo;
    bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
    int patch() const { return cin * k * k; }
    int out_plane() const { return ho * wo; }
};

template <class T>
Geometry geometry(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad)
{
    if (x.rank() != 4 || w.rank() != 4)
        throw std::invalid_argument("conv2d expects rank-4 input and weight");
    if (w.dim(1) != x.dim(1))
        throw std::invalid_argument("conv2d channel mismatch: input " + to_string(x.shape()) + ", weight " +
                                    to_string(w.shape()));
    if (w.dim(2) != w.dim(3)) throw std::invalid_argument("conv2d expects square kernels");
    Geometry g{x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), stride, pad, 0, 0};
    g.ho = conv_out_size(g.h, g.k, stride, pad);
    g.wo = conv_out_size(g.w, g.k, stride, pad);
    if (g.ho <= 0 || g.wo <= 0) throw std::invalid_argument("conv2d output would be empty");
    return g;
}

template <class T>
void im2col(const T* x, const Geometry& g, T* cols)
{
    const int plane = g.out_plane();
    for (int c = 0; c < g.cin; ++c) {
        const T* xc = x + static_cast<std::size_t>(c) * g.h * g.w;
        for (int ki = 0; ki < g.k; ++ki) {
            for (int kj = 0; kj < g.k; ++kj) {
                T* row = cols + static_cast<std::size_t>((c * g.k + ki) * g.k + kj) * plane;
                for (int oh = 0; oh < g.ho; ++oh) {
                    const int ih = oh * g.stride - g.pad + ki;
                    T* dst = row + oh * g.wo;
                    if (ih < 0 || ih >= g.h) {
                        std::fill(dst, dst + g.wo, T{0});
                        continue;
                    }
                    const T* src = xc + static_cast<std::size_t>(ih) * g.w;
                    for (int ow = 0; ow < g.wo; ++ow) {
                        const int iw = ow * g.stride - g.pad + kj;
                        dst[ow] = (iw >= 0 && iw < g.w) ? src[iw] : T{0};
                    }
                }
            }
        }
    }
}

template <class T>
void col2im(const T* cols, const Geometry& g, T* x)
{
    const int plane = g.out_plane();
    std::fill(x, x + static_cast<std::size_t>(g.cin) * g.h * g.w, T{0});
    for (int c = 0; c < g.cin; ++c) {
        T* xc = x + static_cast<std::size_t>(c) * g.h * g.w;
        for (int ki = 0; ki < g.k; ++ki) {
            for (int kj = 0; kj < g.k; ++kj) {
                const T* row = cols + static_cast<std::size_t>((c * g.k + ki) * g.k + kj) * plane;
                for (int oh = 0; oh < g.ho; ++oh) {
                    const int ih = oh * g.stride - g.pad + ki;
                    if (ih < 0 || ih >= g.h) continue;
                    T* dst = xc + static_cast<std::size_t>(ih) * g.w;
                    const T* src = row + oh * g.wo;
                    for (int ow = 0; ow < g.wo; ++ow) {
                        const int iw = ow * g.stride - g.pad + kj;
                        if (iw >= 0 && iw < g.w) dst[iw] += src[ow];
                    }
                }
            }
        }
    }
}

} // namespace

int conv_out_size(int in, int kernel, int stride, int pad) { return (in + 2 * pad - kernel) / stride + 1; }

template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, int stride, int pad)
{
    const Geometry g = geometry(x, w, stride, pad);
    const int n = x.dim(0);
    Tensor<T> y({n, g.cout, g.ho, g.wo});
    const ConstMatMap<T> wm(w.data(), g.cout, g.patch());
    const std::size_t in_stride = static_cast<std::size_t>(g.cin) * g.h * g.w;
    const std::size_t out_stride = static_cast<std::size_t>(g.cout) * g.out_plane();

#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        MatMap<T> ym(y.data() + i * out_stride, g.cout, g.out_plane());
        if (g.pointwise()) {
            ym.noalias() = wm * ConstMatMap<T>(x.data() + i * in_stride, g.cin, g.out_plane());
        } else {
            std::vector<T> cols(static_cast<std::size_t>(g.patch()) * g.out_plane());
            im2col(x.data() + i * in_stride, g, cols.data());
            ym.noalias() = wm * ConstMatMap<T>(cols.data(), g.patch(), g.out_plane());
        }
        if (bias != nullptr) {
            for (int c = 0; c < g.cout; ++c) ym.row(c).array() += (*bias)[c];
        }
    }
    return y;
}

template <class T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, int stride, int pad,
                               bool need_dx, bool need_dw, bool need_db)
{
    const Geometry g = geometry(x, w, stride, pad);
    const int n = x.dim(0);
    if (dy.shape() != Shape{n, g.cout, g.ho, g.wo})
        throw std::invalid_argument("conv2d_backward: gradient shape " + to_string(dy.shape()));

    Conv2dGrads<T> grads;
    if (need_dx) grads.dx = Tensor<T>(x.shape());
    // Per-sample partial weight gradients are reduced in sample order so the
    // result does not depend on the thread schedule.
    std::vector<Tensor<T>> dw_parts(need_dw ? n : 0);

    const ConstMatMap<T> wm(w.data(), g.cout, g.patch());
    const std::size_t in_stride = static_cast<std::size_t>(g.cin) * g.h * g.w;
    const std::size_t out_stride = static_cast<std::size_t>(g.cout) * g.out_plane();

#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const ConstMatMap<T> dym(dy.data() + i * out_stride, g.cout, g.out_plane());
        std::vector<T> cols;
        if (need_dw) {
            dw_parts[i] = Tensor<T>(w.shape());
            MatMap<T> dwm(dw_parts[i].data(), g.cout, g.patch());
            if (g.pointwise()) {
                dwm.noalias() = dym * ConstMatMap<T>(x.data() + i * in_stride, g.cin, g.out_plane()).transpose();
            } else {
                cols.resize(static_cast<std::size_t>(g.patch()) * g.out_plane());
                im2col(x.data() + i * in_stride, g, cols.data());
                dwm.noalias() = dym * ConstMatMap<T>(cols.data(), g.patch(), g.out_plane()).transpose();
            }
        }
        if (need_dx) {
            if (g.pointwise()) {
                MatMap<T>(grads.dx.data() + i * in_stride, g.cin, g.out_plane()).noalias() = wm.transpose() * dym;
            } else {
                cols.resize(static_cast<std::size_t>(g.patch()) * g.out_plane());
                MatMap<T>(cols.data(), g.patch(), g.out_plane()).noalias() = wm.transpose() * dym;
                col2im(cols.data(), g, grads.dx.data() + i * in_stride);
            }
        }
    }

    if (need_dw) {
        grads.dw = std::move(dw_parts[0]);
        for (int i = 1; i < n; ++i) grads.dw += dw_parts[i];
    }
    if (need_db) {
        grads.db = Tensor<T>({g.cout});
        for (int i = 0; i < n; ++i) {
            for (int c = 0; c < g.cout; ++c) {
                const T* p = dy.data() + i * out_stride + static_cast<std::size_t>(c) * g.out_plane();
                T s{0};
                for (int j = 0; j < g.out_plane(); ++j) s += p[j];
                grads.db[c] += s;
            }
        }
    }
    return grads;
}

#define REAVAE_INSTANTIATE(T)                                                                                 \
    template Tensor<T> conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, int, int);     \
    template Conv2dGrads<T> conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int, \
                                               bool, bool, bool);
REAVAE_INSTANTIATE(float)
REAVAE_INSTANTIATE(double)
#undef REAVAE_INSTANTIATE

} // namespace reavae::kernels
