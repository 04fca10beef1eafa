#pragma once

// Data-parallel compute kernels (OpenMP). Every kernel here has a serial
// counterpart in reference.hpp that the unit tests and the benchmark compare
// against. All kernels are explicitly instantiated for float and double.

#include <cstdint>
#include <span>
#include <vector>

#include "reavae/tensor.hpp"

namespace reavae::kernels {

int conv_out_size(int in, int kernel, int stride, int pad);

/// x: N×Cin×H×W, w: Cout×Cin×k×k, bias: Cout or nullptr. Zero padding.
template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, int stride, int pad);

template <class T>
struct Conv2dGrads {
    Tensor<T> dx, dw, db;
};

template <class T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, int stride, int pad,
                               bool need_dx, bool need_dw, bool need_db);

/// Bilinear resize with half-pixel centers (align_corners = false).
template <class T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int out_h, int out_w);
template <class T>
Tensor<T> resize_bilinear_backward(const Tensor<T>& dy, int in_h, int in_w);

template <class T>
Tensor<T> upsample_nearest(const Tensor<T>& x, int factor);
template <class T>
Tensor<T> upsample_nearest_backward(const Tensor<T>& dy, int factor);

/// 2×2 mean pooling, stride 2. Odd trailing rows/columns are dropped.
template <class T>
Tensor<T> avg_pool2(const Tensor<T>& x);
template <class T>
Tensor<T> avg_pool2_backward(const Tensor<T>& dy, int in_h, int in_w);

/// Box-filter downsampling by an integer factor (exact area average).
template <class T>
Tensor<T> area_downsample(const Tensor<T>& x, int factor);

/// Keys cubic convolution (a = -0.5), half-pixel centers, edge clamping.
template <class T>
Tensor<T> bicubic_upsample(const Tensor<T>& x, int factor);

/// N×(C·r²)×H×W -> N×C×(H·r)×(W·r)
template <class T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r);
template <class T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r);

/// Nearest-neighbour label resampling: source index floor(i · in / out).
Labels resize_labels_nearest(const Labels& labels, int out_h, int out_w);

template <class T>
Tensor<T> one_hot(const Labels& labels, int num_classes);

template <class T>
struct RegionPoolResult {
    Tensor<T> styles;        // N×C×W
    std::vector<int> counts; // N×C pixel counts
};

/// Per-class spatial mean of a feature map. Classes with no pixels give zero rows.
template <class T>
RegionPoolResult<T> region_pool(const Tensor<T>& features, const Labels& labels, int num_classes);
template <class T>
Tensor<T> region_pool_backward(const Tensor<T>& dstyles, const std::vector<int>& counts, const Labels& labels,
                               int feature_channels);

/// codes: N×C×D -> N×D×H×W where pixel p takes the row of its label.
template <class T>
Tensor<T> broadcast_codes(const Tensor<T>& codes, const Labels& labels);
template <class T>
Tensor<T> broadcast_codes_backward(const Tensor<T>& dmap, const Labels& labels, int num_classes);

/// Samples tex (N×C×Ht×Wt) at per-pixel texture coordinates. uv holds
/// out_h·out_w (u, v) pairs in [0,1]; texel x = u·(Wt−1), y = v·(Ht−1).
/// Pixels with mask == 0 are left at zero. Coordinates are clamped to [0,1].
template <class T>
Tensor<T> bilinear_sample(const Tensor<T>& tex, std::span<const float> uv, std::span<const std::uint8_t> mask,
                          int out_h, int out_w);
template <class T>
Tensor<T> bilinear_sample_backward(const Tensor<T>& dy, std::span<const float> uv,
                                   std::span<const std::uint8_t> mask, int tex_h, int tex_w);

/// Forward differences along width (dir 0) or height (dir 1); the last
/// column/row is zero.
template <class T>
Tensor<T> forward_difference(const Tensor<T>& x, int dir);
template <class T>
Tensor<T> forward_difference_backward(const Tensor<T>& dy, int dir);

enum class NormGroup { channel, instance };

/// Zero-mean unit-variance normalisation over N·H·W per channel (channel)
/// or over H·W per (n, c) (instance). Biased variance. Returns x̂ and fills
/// the per-group mean and variance.
template <class T>
Tensor<T> normalize_forward(const Tensor<T>& x, NormGroup group, T eps, Tensor<T>& mean, Tensor<T>& var);
template <class T>
Tensor<T> normalize_backward(const Tensor<T>& dy, const Tensor<T>& xhat, const Tensor<T>& var, NormGroup group,
                             T eps);

} // namespace reavae::kernels
