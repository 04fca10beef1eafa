#pragma once

#include "reavae/config.hpp"
#include "reavae/nn.hpp"

namespace reavae {

template <class T>
struct GaussianStats {
    nn::Var<T> mu;      // N×C×W
    nn::Var<T> log_var; // N×C×W, clamped to [-20, 20]
};

/// One (μ, log σ²) affine pair per class; no weight sharing between classes.
template <class T>
class GaussianHeads : public nn::Module<T> {
public:
    GaussianHeads(int num_classes, int style_dim, Rng& rng);
    GaussianStats<T> forward(const nn::Var<T>& raw_styles) const;

    nn::Var<T>& mu_weight;
    nn::Var<T>& mu_bias;
    nn::Var<T>& lv_weight;
    nn::Var<T>& lv_bias;
};

inline constexpr double log_var_limit = 20.0;

/// S = μ + exp(log_var / 2) ⊙ ε
template <class T>
nn::Var<T> reparameterize(const GaussianStats<T>& stats, const Tensor<T>& eps);

/// ½ Σ_c Σ_w (μ² + σ² − 1 − ln σ²) per sample, averaged over the batch.
/// When `presence` (N×C) is given, absent classes are left out of the sum.
template <class T>
nn::Var<T> kld_loss(const GaussianStats<T>& stats, const std::vector<std::uint8_t>* presence = nullptr);

} // namespace reavae
