#include "reavae/vae.hpp"

namespace reavae {

template <class T>
GaussianHeads<T>::GaussianHeads(int c, int w, Rng& rng)
    : mu_weight(this->register_parameter("mu_weight", nn::uniform_init<T>({c, w, w}, w, rng))),
      mu_bias(this->register_parameter("mu_bias", nn::uniform_init<T>({c, w}, w, rng))),
      lv_weight(this->register_parameter("lv_weight", nn::uniform_init<T>({c, w, w}, w, rng))),
      lv_bias(this->register_parameter("lv_bias", nn::uniform_init<T>({c, w}, w, rng)))
{
}

template <class T>
GaussianStats<T> GaussianHeads<T>::forward(const nn::Var<T>& raw_styles) const
{
    if (raw_styles.shape().size() != 3 || raw_styles.dim(1) != mu_weight.dim(0) || raw_styles.dim(2) != mu_weight.dim(2))
        throw std::invalid_argument("gaussian_heads: expected N×" + std::to_string(mu_weight.dim(0)) + "×" +
                                    std::to_string(mu_weight.dim(2)) + " styles, got " + to_string(raw_styles.shape()));
    const T lim = static_cast<T>(log_var_limit);
    return {ag::grouped_linear(raw_styles, mu_weight, mu_bias),
            ag::clamp(ag::grouped_linear(raw_styles, lv_weight, lv_bias), -lim, lim)};
}

template <class T>
nn::Var<T> reparameterize(const GaussianStats<T>& stats, const Tensor<T>& eps)
{
    stats.mu.value().require_same_shape(eps, "reparameterize");
    const nn::Var<T> sigma = ag::exp(ag::scale(stats.log_var, T(0.5)));
    return ag::add(stats.mu, ag::mul(sigma, nn::Var<T>(eps)));
}

template <class T>
nn::Var<T> kld_loss(const GaussianStats<T>& stats, const std::vector<std::uint8_t>* presence)
{
    const int n = stats.mu.dim(0);
    if (!presence) return ag::scale(ag::kl_divergence(stats.mu, stats.log_var), T(1) / n);
    const int c = stats.mu.dim(1), w = stats.mu.dim(2);
    if (presence->size() != static_cast<std::size_t>(n) * c)
        throw std::invalid_argument("kld_loss: presence mask must be N×C");
    // KL(0, 0) = 0, so zeroing absent rows removes them from the sum.
    Tensor<T> mask(stats.mu.shape());
    for (int b = 0; b < n; ++b)
        for (int k = 0; k < c; ++k)
            if ((*presence)[b * c + k])
                std::fill_n(mask.data() + (static_cast<std::size_t>(b) * c + k) * w, w, T{1});
    const nn::Var<T> m(mask);
    return ag::scale(ag::kl_divergence(ag::mul(stats.mu, m), ag::mul(stats.log_var, m)), T(1) / n);
}

#define REAVAE_INSTANTIATE(T)                                                                          \
    template class GaussianHeads<T>;                                                                   \
    template nn::Var<T> reparameterize<T>(const GaussianStats<T>&, const Tensor<T>&);                  \
    template nn::Var<T> kld_loss<T>(const GaussianStats<T>&, const std::vector<std::uint8_t>*);
REAVAE_INSTANTIATE(float)
REAVAE_INSTANTIATE(double)
#undef REAVAE_INSTANTIATE

} // namespace reavae
