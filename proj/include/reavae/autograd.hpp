#pragma once

// Tape-free reverse-mode autodiff over Tensor<T>. Every op records its
// parents and a backward closure; Var::backward() walks the graph in reverse
// topological order. Graphs are freed when the last Var referencing them goes
// out of scope.

#include <functional>
#include <memory>
#include <vector>

#include "reavae/kernels.hpp"

namespace reavae::ag {

template <class T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    void accumulate(Tensor<T> g)
    {
        if (grad.empty())
            grad = std::move(g);
        else
            grad += g;
    }
};

/// Thread-local switch; with grad disabled ops produce constants and build no graph.
class GradMode {
public:
    static bool enabled() noexcept;
    static void set(bool on) noexcept;
};

class NoGradGuard {
public:
    NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set(false); }
    ~NoGradGuard() { GradMode::set(previous_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

template <class T>
class Var {
public:
    Var() = default;
    explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>())
    {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }
    explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    bool defined() const noexcept { return node_ != nullptr; }
    const Tensor<T>& value() const { return node_->value; }
    /// In-place access for optimizers and buffers; never use on graph interior nodes.
    Tensor<T>& mutable_value() { return node_->value; }
    const Tensor<T>& grad() const { return node_->grad; }
    bool has_grad() const { return node_ && !node_->grad.empty(); }
    void zero_grad() const { node_->grad = Tensor<T>(); }
    bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
    /// Only meaningful on leaves (parameters).
    void set_requires_grad(bool on) const { node_->requires_grad = on; }
    const Shape& shape() const { return node_->value.shape(); }
    int dim(std::size_t i) const { return node_->value.dim(i); }
    T item() const { return node_->value[0]; }

    Var detach() const { return Var(node_->value); }

    /// Seeds d(self)/d(self) = 1; self must hold a single element.
    void backward() const;

    const std::shared_ptr<Node<T>>& node() const noexcept { return node_; }

private:
    std::shared_ptr<Node<T>> node_;
};

template <class T>
using VarList = std::vector<Var<T>>;

// ---- elementwise -----------------------------------------------------------
template <class T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> scale(const Var<T>& a, T s);
template <class T> Var<T> add_scalar(const Var<T>& a, T s);
template <class T> Var<T> relu(const Var<T>& a);
template <class T> Var<T> leaky_relu(const Var<T>& a, T slope);
template <class T> Var<T> sigmoid(const Var<T>& a);
template <class T> Var<T> tanh(const Var<T>& a);
template <class T> Var<T> exp(const Var<T>& a);
template <class T> Var<T> square(const Var<T>& a);
/// Gradient passes only where lo < a < hi.
template <class T> Var<T> clamp(const Var<T>& a, T lo, T hi);
template <class T> Var<T> reshape(const Var<T>& a, Shape shape);

// ---- reductions ------------------------------------------------------------
template <class T> Var<T> sum(const Var<T>& a);
template <class T> Var<T> mean(const Var<T>& a);
/// mean |a - b|
template <class T> Var<T> l1_mean(const Var<T>& a, const Var<T>& b);
/// mean |a - b| over (n, c, p) with mask[p] != 0 for a plane mask of H·W.
template <class T> Var<T> masked_l1_mean(const Var<T>& a, const Var<T>& b, std::vector<std::uint8_t> mask);
/// ½ Σ (μ² + e^{lv} − 1 − lv)
template <class T> Var<T> kl_divergence(const Var<T>& mu, const Var<T>& log_var);

// ---- linear maps -----------------------------------------------------------
template <class T> Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride, int pad);
/// x: (..., in) rows, w: out×in, bias: out (may be undefined)
template <class T> Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias);
/// x: N×C×in, w: C×out×in, bias: C×out. Row c uses its own affine map.
template <class T> Var<T> grouped_linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias);
/// w / σ with σ = uᵀ W v for fixed unit vectors u (rows) and v (cols) of the
/// flattened weight. σ is floored at 1e-12. Returns the normalised weight.
template <class T> Var<T> spectral_divide(const Var<T>& w, const Tensor<T>& u, const Tensor<T>& v);

// ---- spatial ---------------------------------------------------------------
template <class T> Var<T> upsample_nearest(const Var<T>& x, int factor);
template <class T> Var<T> resize_bilinear(const Var<T>& x, int out_h, int out_w);
template <class T> Var<T> avg_pool2(const Var<T>& x);
template <class T> Var<T> pixel_shuffle(const Var<T>& x, int r);
template <class T> Var<T> concat_channels(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> forward_difference(const Var<T>& x, int dir);
template <class T>
Var<T> bilinear_sample(const Var<T>& tex, std::vector<float> uv, std::vector<std::uint8_t> mask, int out_h,
                       int out_w);

// ---- normalisation ---------------------------------------------------------
/// Parameter-free normalisation; fills batch mean/var when pointers are given.
template <class T>
Var<T> normalize(const Var<T>& x, kernels::NormGroup group, T eps, Tensor<T>* mean_out = nullptr,
                 Tensor<T>* var_out = nullptr);
/// (x - mean[c]) / sqrt(var[c] + eps) with constant statistics.
template <class T> Var<T> normalize_with(const Var<T>& x, const Tensor<T>& mean, const Tensor<T>& var, T eps);
/// x + strength[c] · noise[n, 0, h, w]
template <class T> Var<T> add_channel_scaled_noise(const Var<T>& x, const Var<T>& strength, const Tensor<T>& noise);

// ---- region ops ------------------------------------------------------------
template <class T>
Var<T> region_pool(const Var<T>& features, const Labels& labels, int num_classes,
                   std::vector<int>* counts_out = nullptr);
template <class T> Var<T> broadcast_codes(const Var<T>& codes, const Labels& labels);

} // namespace reavae::ag
