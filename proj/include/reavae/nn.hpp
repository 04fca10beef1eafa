#pragma once

#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "reavae/autograd.hpp"
#include "reavae/rng.hpp"

namespace reavae::nn {

template <class T>
using Var = ag::Var<T>;

/// Base class holding named parameters, buffers and child modules. Children
/// are members of the derived object, so modules are neither copyable nor
/// movable.
template <class T>
class Module {
public:
    Module() = default;
    Module(const Module&) = delete;
    Module& operator=(const Module&) = delete;
    virtual ~Module() = default;

    std::vector<std::pair<std::string, Var<T>*>> named_parameters(const std::string& prefix = "");
    std::vector<std::pair<std::string, Tensor<T>*>> named_buffers(const std::string& prefix = "");
    std::vector<Var<T>*> parameters();
    std::size_t parameter_count();
    /// Sets every parameter (not buffers) to v.
    void fill_parameters(T v);
    /// Toggles gradient tracking on every parameter (used to freeze a module).
    void set_requires_grad(bool on);

    void set_training(bool on);
    bool training() const noexcept { return training_; }

protected:
    Var<T>& register_parameter(std::string name, Tensor<T> init);
    Tensor<T>& register_buffer(std::string name, Tensor<T> init);
    void register_module(std::string name, Module& child);

private:
    std::deque<std::pair<std::string, Var<T>>> params_;
    std::deque<std::pair<std::string, Tensor<T>>> buffers_;
    std::vector<std::pair<std::string, Module*>> children_;
    bool training_ = true;
};

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation, as in common frameworks.
template <class T>
Tensor<T> uniform_init(Shape shape, int fan_in, Rng& rng);

template <class T>
class Conv2d : public Module<T> {
public:
    Conv2d(int in, int out, int kernel, Rng& rng, int stride = 1, bool bias = true);
    Var<T> forward(const Var<T>& x) const;
    void zero_();

    int in_channels, out_channels, kernel, stride;
    Var<T>& weight;
    Var<T> bias;
};

template <class T>
class Linear : public Module<T> {
public:
    Linear(int in, int out, Rng& rng, bool bias = true);
    Var<T> forward(const Var<T>& x) const;
    void zero_();

    Var<T>& weight;
    Var<T> bias;
};

/// Persistent power-iteration vectors for the flattened weight W (rows = dim 0).
template <class T>
struct PowerIteration {
    Tensor<T> u, v;
};

template <class T>
PowerIteration<T> init_power_iteration(int rows, int cols, Rng& rng);

/// Runs `iterations` rounds of v ← Wᵀu/‖·‖, u ← Wv/‖·‖ and returns σ = uᵀWv.
template <class T>
T power_iterate(const Tensor<T>& w, PowerIteration<T>& state, int iterations = 1);

/// W / max(σ, 1e-12) with σ from the current state (no iteration performed).
template <class T>
Tensor<T> spectral_normalize(const Tensor<T>& w, const PowerIteration<T>& state);

/// Conv2d with spectrally normalised weight. The power iteration is advanced
/// explicitly once per optimisation step through update_spectral().
template <class T>
class SNConv2d : public Module<T> {
public:
    SNConv2d(int in, int out, int kernel, Rng& rng, int stride = 1);
    Var<T> forward(const Var<T>& x) const;
    void update_spectral();
    T sigma() const;

    int stride, pad;
    Var<T>& weight;
    Var<T>& bias;
    Tensor<T>& u;
    Tensor<T>& v;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.0;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam over a fixed list of named parameters. Moment buffers are exposed for
/// checkpointing.
template <class T>
class Adam {
public:
    Adam(std::vector<std::pair<std::string, Var<T>*>> params, AdamConfig cfg);
    void step();
    void zero_grad();

    std::vector<std::pair<std::string, Tensor<T>*>> named_state();
    std::int64_t steps() const noexcept { return t_; }
    void set_steps(std::int64_t t) noexcept { t_ = t; }
    const AdamConfig& config() const noexcept { return cfg_; }

private:
    std::vector<std::pair<std::string, Var<T>*>> params_;
    std::vector<Tensor<T>> m_, v_;
    AdamConfig cfg_;
    std::int64_t t_ = 0;
};

} // namespace reavae::nn
