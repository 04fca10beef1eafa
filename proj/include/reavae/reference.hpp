#pragma once

// Serial, loop-for-loop reference versions of the hot kernels. They favour
// obviousness over speed and exist so tests and the benchmark can check the
// parallel kernels against them.

#include "reavae/kernels.hpp"

namespace reavae::reference {

template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, int stride, int pad);

template <class T>
kernels::Conv2dGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, int stride,
                                        int pad);

template <class T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int out_h, int out_w);

template <class T>
Tensor<T> bilinear_sample(const Tensor<T>& tex, std::span<const float> uv, std::span<const std::uint8_t> mask,
                          int out_h, int out_w);

template <class T>
Tensor<T> region_pool(const Tensor<T>& features, const Labels& labels, int num_classes);

template <class T>
Tensor<T> broadcast_codes(const Tensor<T>& codes, const Labels& labels);

template <class T>
Tensor<T> batch_normalize(const Tensor<T>& x, T eps);

} // namespace reavae::reference
