#include "reavae/nn.hpp"

#include <cmath>

namespace reavae::nn {

template <class T>
std::vector<std::pair<std::string, Var<T>*>> Module<T>::named_parameters(const std::string& prefix)
{
    std::vector<std::pair<std::string, Var<T>*>> out;
    for (auto& [name, p] : params_) out.emplace_back(prefix + name, &p);
    for (auto& [name, child] : children_)
        for (auto& entry : child->named_parameters(prefix + name + ".")) out.push_back(std::move(entry));
    return out;
}

template <class T>
std::vector<std::pair<std::string, Tensor<T>*>> Module<T>::named_buffers(const std::string& prefix)
{
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    for (auto& [name, b] : buffers_) out.emplace_back(prefix + name, &b);
    for (auto& [name, child] : children_)
        for (auto& entry : child->named_buffers(prefix + name + ".")) out.push_back(std::move(entry));
    return out;
}

template <class T>
std::vector<Var<T>*> Module<T>::parameters()
{
    std::vector<Var<T>*> out;
    for (auto& entry : named_parameters()) out.push_back(entry.second);
    return out;
}

template <class T>
std::size_t Module<T>::parameter_count()
{
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->value().size();
    return n;
}

template <class T>
void Module<T>::fill_parameters(T v)
{
    for (auto* p : parameters()) p->mutable_value().fill(v);
}

template <class T>
void Module<T>::set_requires_grad(bool on)
{
    for (auto* p : parameters()) p->set_requires_grad(on);
}

template <class T>
void Module<T>::set_training(bool on)
{
    training_ = on;
    for (auto& entry : children_) entry.second->set_training(on);
}

template <class T>
Var<T>& Module<T>::register_parameter(std::string name, Tensor<T> init)
{
    return params_.emplace_back(std::move(name), Var<T>(std::move(init), true)).second;
}

template <class T>
Tensor<T>& Module<T>::register_buffer(std::string name, Tensor<T> init)
{
    return buffers_.emplace_back(std::move(name), std::move(init)).second;
}

template <class T>
void Module<T>::register_module(std::string name, Module& child)
{
    children_.emplace_back(std::move(name), &child);
}

template <class T>
Tensor<T> uniform_init(Shape shape, int fan_in, Rng& rng)
{
    Tensor<T> t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& x : t.values()) x = static_cast<T>(dist(rng));
    return t;
}

template <class T>
Conv2d<T>::Conv2d(int in, int out, int k, Rng& rng, int s, bool has_bias)
    : in_channels(in), out_channels(out), kernel(k), stride(s),
      weight(this->register_parameter("weight", uniform_init<T>({out, in, k, k}, in * k * k, rng)))
{
    if (has_bias) bias = this->register_parameter("bias", uniform_init<T>({out}, in * k * k, rng));
}

template <class T>
Var<T> Conv2d<T>::forward(const Var<T>& x) const
{
    return ag::conv2d(x, weight, bias, stride, kernel / 2);
}

template <class T>
void Conv2d<T>::zero_()
{
    weight.mutable_value().fill(T{0});
    if (bias.defined()) bias.mutable_value().fill(T{0});
}

template <class T>
Linear<T>::Linear(int in, int out, Rng& rng, bool has_bias)
    : weight(this->register_parameter("weight", uniform_init<T>({out, in}, in, rng)))
{
    if (has_bias) bias = this->register_parameter("bias", uniform_init<T>({out}, in, rng));
}

template <class T>
Var<T> Linear<T>::forward(const Var<T>& x) const
{
    return ag::linear(x, weight, bias);
}

template <class T>
void Linear<T>::zero_()
{
    weight.mutable_value().fill(T{0});
    if (bias.defined()) bias.mutable_value().fill(T{0});
}

namespace {

template <class T>
void normalize_in_place(Tensor<T>& x)
{
    double s = 0;
    for (T v : x.values()) s += static_cast<double>(v) * v;
    const double n = std::max(std::sqrt(s), 1e-12);
    for (auto& v : x.values()) v = static_cast<T>(v / n);
}

} // namespace

template <class T>
PowerIteration<T> init_power_iteration(int rows, int cols, Rng& rng)
{
    PowerIteration<T> s{Tensor<T>({rows}), Tensor<T>({cols})};
    fill_normal<T>(rng, s.u.values().begin(), s.u.values().end());
    fill_normal<T>(rng, s.v.values().begin(), s.v.values().end());
    normalize_in_place(s.u);
    normalize_in_place(s.v);
    return s;
}

template <class T>
T power_iterate(const Tensor<T>& w, PowerIteration<T>& state, int iterations)
{
    const int rows = static_cast<int>(state.u.size()), cols = static_cast<int>(state.v.size());
    if (w.size() != static_cast<std::size_t>(rows) * cols)
        throw std::invalid_argument("power_iterate: state does not match weight " + to_string(w.shape()));
    for (int it = 0; it < iterations; ++it) {
        for (int c = 0; c < cols; ++c) {
            double s = 0;
            for (int r = 0; r < rows; ++r) s += static_cast<double>(w[static_cast<std::size_t>(r) * cols + c]) * state.u[r];
            state.v[c] = static_cast<T>(s);
        }
        normalize_in_place(state.v);
        for (int r = 0; r < rows; ++r) {
            double s = 0;
            for (int c = 0; c < cols; ++c) s += static_cast<double>(w[static_cast<std::size_t>(r) * cols + c]) * state.v[c];
            state.u[r] = static_cast<T>(s);
        }
        normalize_in_place(state.u);
    }
    double sigma = 0;
    for (int r = 0; r < rows; ++r) {
        double s = 0;
        for (int c = 0; c < cols; ++c) s += static_cast<double>(w[static_cast<std::size_t>(r) * cols + c]) * state.v[c];
        sigma += s * state.u[r];
    }
    return static_cast<T>(sigma);
}

template <class T>
Tensor<T> spectral_normalize(const Tensor<T>& w, const PowerIteration<T>& state)
{
    ag::NoGradGuard guard;
    return ag::spectral_divide(Var<T>(w), state.u, state.v).value();
}

template <class T>
SNConv2d<T>::SNConv2d(int in, int out, int k, Rng& rng, int s)
    : stride(s), pad(k / 2), weight(this->register_parameter("weight", uniform_init<T>({out, in, k, k}, in * k * k, rng))),
      bias(this->register_parameter("bias", uniform_init<T>({out}, in * k * k, rng))),
      u(this->register_buffer("sn_u", Tensor<T>({out}))), v(this->register_buffer("sn_v", Tensor<T>({in * k * k})))
{
    auto state = init_power_iteration<T>(out, in * k * k, rng);
    u = std::move(state.u);
    v = std::move(state.v);
}

template <class T>
Var<T> SNConv2d<T>::forward(const Var<T>& x) const
{
    return ag::conv2d(x, ag::spectral_divide(weight, u, v), bias, stride, pad);
}

template <class T>
void SNConv2d<T>::update_spectral()
{
    PowerIteration<T> state{u, v};
    power_iterate(weight.value(), state, 1);
    u = std::move(state.u);
    v = std::move(state.v);
}

template <class T>
T SNConv2d<T>::sigma() const
{
    PowerIteration<T> state{u, v};
    return power_iterate(weight.value(), state, 0);
}

template <class T>
Adam<T>::Adam(std::vector<std::pair<std::string, Var<T>*>> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg)
{
    for (auto& [name, p] : params_) {
        m_.emplace_back(p->shape());
        v_.emplace_back(p->shape());
    }
}

template <class T>
void Adam<T>::step()
{
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const double step_size = cfg_.lr / bc1;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Var<T>& p = *params_[i].second;
        if (!p.has_grad()) continue;
        const Tensor<T>& g = p.grad();
        Tensor<T>& w = p.mutable_value();
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double gk = g[k];
            const double m = cfg_.beta1 * m_[i][k] + (1.0 - cfg_.beta1) * gk;
            const double v = cfg_.beta2 * v_[i][k] + (1.0 - cfg_.beta2) * gk * gk;
            m_[i][k] = static_cast<T>(m);
            v_[i][k] = static_cast<T>(v);
            w[k] = static_cast<T>(w[k] - step_size * m / (std::sqrt(v / bc2) + cfg_.eps));
        }
    }
}

template <class T>
void Adam<T>::zero_grad()
{
    for (auto& entry : params_) entry.second->zero_grad();
}

template <class T>
std::vector<std::pair<std::string, Tensor<T>*>> Adam<T>::named_state()
{
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        out.emplace_back(params_[i].first + ".adam_m", &m_[i]);
        out.emplace_back(params_[i].first + ".adam_v", &v_[i]);
    }
    return out;
}

#define REAVAE_INSTANTIATE(T)                                                                  \
    template class Module<T>;                                                                  \
    template class Conv2d<T>;                                                                  \
    template class Linear<T>;                                                                  \
    template class SNConv2d<T>;                                                                \
    template class Adam<T>;                                                                    \
    template Tensor<T> uniform_init<T>(Shape, int, Rng&);                                      \
    template PowerIteration<T> init_power_iteration<T>(int, int, Rng&);                        \
    template T power_iterate<T>(const Tensor<T>&, PowerIteration<T>&, int);                    \
    template Tensor<T> spectral_normalize<T>(const Tensor<T>&, const PowerIteration<T>&);
REAVAE_INSTANTIATE(float)
REAVAE_INSTANTIATE(double)
#undef REAVAE_INSTANTIATE

} // namespace reavae::nn
