#include "reavae/autograd.hpp"

#include <Eigen/Core>
#include <cmath>
#include <unordered_set>

namespace reavae::ag {

namespace {

thread_local bool grad_enabled = true;

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <class T>
Var<T> make_result(Tensor<T> value, std::initializer_list<const Var<T>*> inputs, std::function<void(Node<T>&)> bw)
{
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    if (GradMode::enabled()) {
        bool any = false;
        for (const Var<T>* in : inputs) any = any || (in->defined() && in->requires_grad());
        if (any) {
            node->requires_grad = true;
            for (const Var<T>* in : inputs) node->parents.push_back(in->defined() ? in->node() : nullptr);
            node->backward = std::move(bw);
        }
    }
    return Var<T>(std::move(node));
}

template <class T>
bool wants(const Node<T>& self, std::size_t i)
{
    return self.parents[i] && self.parents[i]->requires_grad;
}

template <class T, class F>
Tensor<T> map_values(const Tensor<T>& a, F f)
{
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    return out;
}

template <class T>
void require_same(const Var<T>& a, const Var<T>& b, const char* what)
{
    a.value().require_same_shape(b.value(), what);
}

} // namespace

bool GradMode::enabled() noexcept { return grad_enabled; }
void GradMode::set(bool on) noexcept { grad_enabled = on; }

template <class T>
void Var<T>::backward() const
{
    if (node_->value.size() != 1) throw std::logic_error("backward() requires a scalar root");
    if (!node_->requires_grad) return;

    // Post-order DFS gives a topological order with parents before children.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node<T>* p = n->parents[next++].get();
            if (p && p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    node_->accumulate(Tensor<T>(node_->value.shape(), T{1}));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (!n->backward || n->grad.empty()) continue;
        n->backward(*n);
        n->grad = Tensor<T>();
    }
}

// ---- elementwise -----------------------------------------------------------

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b)
{
    require_same(a, b, "add");
    Tensor<T> v = a.value();
    v += b.value();
    return make_result<T>(std::move(v), {&a, &b}, [](Node<T>& self) {
        if (wants(self, 0)) self.parents[0]->accumulate(self.grad);
        if (wants(self, 1)) self.parents[1]->accumulate(self.grad);
    });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b)
{
    require_same(a, b, "sub");
    Tensor<T> v = a.value();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= b.value()[i];
    return make_result<T>(std::move(v), {&a, &b}, [](Node<T>& self) {
        if (wants(self, 0)) self.parents[0]->accumulate(self.grad);
        if (wants(self, 1)) self.parents[1]->accumulate(map_values(self.grad, [](T g) { return -g; }));
    });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b)
{
    require_same(a, b, "mul");
    Tensor<T> v = a.value();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= b.value()[i];
    return make_result<T>(std::move(v), {&a, &b}, [](Node<T>& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        if (wants(self, 0)) {
            Tensor<T> g(av.shape());
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * bv[i];
            self.parents[0]->accumulate(std::move(g));
        }
        if (wants(self, 1)) {
            Tensor<T> g(bv.shape());
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * av[i];
            self.parents[1]->accumulate(std::move(g));
        }
    });
}

template <class T>
Var<T> scale(const Var<T>& a, T s)
{
    return make_result<T>(map_values(a.value(), [s](T x) { return x * s; }), {&a}, [s](Node<T>& self) {
        self.parents[0]->accumulate(map_values(self.grad, [s](T g) { return g * s; }));
    });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s)
{
    return make_result<T>(map_values(a.value(), [s](T x) { return x + s; }), {&a},
                          [](Node<T>& self) { self.parents[0]->accumulate(self.grad); });
}

template <class T>
Var<T> relu(const Var<T>& a)
{
    return leaky_relu(a, T{0});
}

template <class T>
Var<T> leaky_relu(const Var<T>& a, T slope)
{
    return make_result<T>(map_values(a.value(), [slope](T x) { return x > 0 ? x : x * slope; }), {&a},
                          [slope](Node<T>& self) {
                              const auto& x = self.parents[0]->value;
                              Tensor<T> g(x.shape());
                              for (std::size_t i = 0; i < g.size(); ++i)
                                  g[i] = x[i] > 0 ? self.grad[i] : self.grad[i] * slope;
                              self.parents[0]->accumulate(std::move(g));
                          });
}

template <class T>
Var<T> sigmoid(const Var<T>& a)
{
    return make_result<T>(map_values(a.value(), [](T x) { return T{1} / (T{1} + std::exp(-x)); }), {&a},
                          [](Node<T>& self) {
                              Tensor<T> g(self.value.shape());
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                  const T y = self.value[i];
                                  g[i] = self.grad[i] * y * (T{1} - y);
                              }
                              self.parents[0]->accumulate(std::move(g));
                          });
}

template <class T>
Var<T> tanh(const Var<T>& a)
{
    return make_result<T>(map_values(a.value(), [](T x) { return std::tanh(x); }), {&a}, [](Node<T>& self) {
        Tensor<T> g(self.value.shape());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * (T{1} - self.value[i] * self.value[i]);
        self.parents[0]->accumulate(std::move(g));
    });
}

template <class T>
Var<T> exp(const Var<T>& a)
{
    return make_result<T>(map_values(a.value(), [](T x) { return std::exp(x); }), {&a}, [](Node<T>& self) {
        Tensor<T> g(self.value.shape());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * self.value[i];
        self.parents[0]->accumulate(std::move(g));
    });
}

template <class T>
Var<T> square(const Var<T>& a)
{
    return make_result<T>(map_values(a.value(), [](T x) { return x * x; }), {&a}, [](Node<T>& self) {
        const auto& x = self.parents[0]->value;
        Tensor<T> g(x.shape());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = T{2} * x[i] * self.grad[i];
        self.parents[0]->accumulate(std::move(g));
    });
}

template <class T>
Var<T> clamp(const Var<T>& a, T lo, T hi)
{
    return make_result<T>(map_values(a.value(), [lo, hi](T x) { return std::min(std::max(x, lo), hi); }), {&a},
                          [lo, hi](Node<T>& self) {
                              const auto& x = self.parents[0]->value;
                              Tensor<T> g(x.shape());
                              for (std::size_t i = 0; i < g.size(); ++i)
                                  g[i] = (x[i] > lo && x[i] < hi) ? self.grad[i] : T{0};
                              self.parents[0]->accumulate(std::move(g));
                          });
}

template <class T>
Var<T> reshape(const Var<T>& a, Shape shape)
{
    return make_result<T>(a.value().reshaped(std::move(shape)), {&a}, [](Node<T>& self) {
        self.parents[0]->accumulate(self.grad.reshaped(self.parents[0]->value.shape()));
    });
}

// ---- reductions ------------------------------------------------------------

template <class T>
Var<T> sum(const Var<T>& a)
{
    double s = 0;
    for (T x : a.value().values()) s += x;
    return make_result<T>(Tensor<T>({1}, static_cast<T>(s)), {&a}, [](Node<T>& self) {
        self.parents[0]->accumulate(Tensor<T>(self.parents[0]->value.shape(), self.grad[0]));
    });
}

template <class T>
Var<T> mean(const Var<T>& a)
{
    const std::size_t n = a.value().size();
    double s = 0;
    for (T x : a.value().values()) s += x;
    return make_result<T>(Tensor<T>({1}, static_cast<T>(s / n)), {&a}, [n](Node<T>& self) {
        self.parents[0]->accumulate(Tensor<T>(self.parents[0]->value.shape(), self.grad[0] / static_cast<T>(n)));
    });
}

template <class T>
Var<T> l1_mean(const Var<T>& a, const Var<T>& b)
{
    require_same(a, b, "l1_mean");
    const std::size_t n = a.value().size();
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += std::abs(static_cast<double>(a.value()[i]) - b.value()[i]);
    return make_result<T>(Tensor<T>({1}, static_cast<T>(s / n)), {&a, &b}, [n](Node<T>& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        const T k = self.grad[0] / static_cast<T>(n);
        Tensor<T> g(av.shape());
        for (std::size_t i = 0; i < n; ++i) g[i] = av[i] > bv[i] ? k : (av[i] < bv[i] ? -k : T{0});
        if (wants(self, 1)) self.parents[1]->accumulate(map_values(g, [](T x) { return -x; }));
        if (wants(self, 0)) self.parents[0]->accumulate(std::move(g));
    });
}

template <class T>
Var<T> masked_l1_mean(const Var<T>& a, const Var<T>& b, std::vector<std::uint8_t> mask)
{
    require_same(a, b, "masked_l1_mean");
    const auto& s = a.value().shape();
    if (s.size() != 4 || mask.size() != static_cast<std::size_t>(s[2]) * s[3])
        throw std::invalid_argument("masked_l1_mean: mask does not match image plane");
    const std::size_t plane = mask.size(), planes = static_cast<std::size_t>(s[0]) * s[1];
    std::size_t fg = 0;
    for (auto m : mask) fg += m ? 1 : 0;
    if (fg == 0) throw std::invalid_argument("masked_l1_mean: empty mask");
    const double count = static_cast<double>(fg * planes);
    double total = 0;
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t q = 0; q < plane; ++q)
            if (mask[q]) total += std::abs(static_cast<double>(a.value()[p * plane + q]) - b.value()[p * plane + q]);
    return make_result<T>(
        Tensor<T>({1}, static_cast<T>(total / count)), {&a, &b},
        [mask = std::move(mask), plane, planes, count](Node<T>& self) {
            const auto& av = self.parents[0]->value;
            const auto& bv = self.parents[1]->value;
            const T k = static_cast<T>(self.grad[0] / count);
            Tensor<T> g(av.shape());
            for (std::size_t p = 0; p < planes; ++p)
                for (std::size_t q = 0; q < plane; ++q) {
                    if (!mask[q]) continue;
                    const std::size_t i = p * plane + q;
                    g[i] = av[i] > bv[i] ? k : (av[i] < bv[i] ? -k : T{0});
                }
            if (wants(self, 1)) self.parents[1]->accumulate(map_values(g, [](T x) { return -x; }));
            if (wants(self, 0)) self.parents[0]->accumulate(std::move(g));
        });
}

template <class T>
Var<T> kl_divergence(const Var<T>& mu, const Var<T>& log_var)
{
    require_same(mu, log_var, "kl_divergence");
    double s = 0;
    for (std::size_t i = 0; i < mu.value().size(); ++i) {
        const double m = mu.value()[i], lv = log_var.value()[i];
        s += m * m + std::exp(lv) - 1.0 - lv;
    }
    return make_result<T>(Tensor<T>({1}, static_cast<T>(0.5 * s)), {&mu, &log_var}, [](Node<T>& self) {
        const T g0 = self.grad[0];
        if (wants(self, 0))
            self.parents[0]->accumulate(map_values(self.parents[0]->value, [g0](T m) { return g0 * m; }));
        if (wants(self, 1))
            self.parents[1]->accumulate(map_values(
                self.parents[1]->value, [g0](T lv) { return g0 * T(0.5) * (std::exp(lv) - T{1}); }));
    });
}

// ---- linear maps -----------------------------------------------------------

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride, int pad)
{
    Tensor<T> y = kernels::conv2d_forward(x.value(), w.value(), bias.defined() ? &bias.value() : nullptr, stride, pad);
    return make_result<T>(std::move(y), {&x, &w, &bias}, [stride, pad](Node<T>& self) {
        auto g = kernels::conv2d_backward(self.parents[0]->value, self.parents[1]->value, self.grad, stride, pad,
                                          wants(self, 0), wants(self, 1), wants(self, 2));
        if (wants(self, 0)) self.parents[0]->accumulate(std::move(g.dx));
        if (wants(self, 1)) self.parents[1]->accumulate(std::move(g.dw));
        if (wants(self, 2)) self.parents[2]->accumulate(std::move(g.db));
    });
}

template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias)
{
    const int in = w.dim(1), out = w.dim(0);
    const Shape& xs = x.shape();
    if (xs.empty() || xs.back() != in)
        throw std::invalid_argument("linear: input " + to_string(xs) + " vs weight " + to_string(w.shape()));
    const int rows = static_cast<int>(x.value().size() / in);
    Shape ys = xs;
    ys.back() = out;
    Tensor<T> y(ys);
    MatMap<T> ym(y.data(), rows, out);
    ym.noalias() = ConstMatMap<T>(x.value().data(), rows, in) * ConstMatMap<T>(w.value().data(), out, in).transpose();
    if (bias.defined())
        for (int r = 0; r < rows; ++r)
            for (int o = 0; o < out; ++o) ym(r, o) += bias.value()[o];
    return make_result<T>(std::move(y), {&x, &w, &bias}, [rows, in, out](Node<T>& self) {
        const ConstMatMap<T> g(self.grad.data(), rows, out);
        if (wants(self, 0)) {
            Tensor<T> dx(self.parents[0]->value.shape());
            MatMap<T>(dx.data(), rows, in).noalias() = g * ConstMatMap<T>(self.parents[1]->value.data(), out, in);
            self.parents[0]->accumulate(std::move(dx));
        }
        if (wants(self, 1)) {
            Tensor<T> dw({out, in});
            MatMap<T>(dw.data(), out, in).noalias() =
                g.transpose() * ConstMatMap<T>(self.parents[0]->value.data(), rows, in);
            self.parents[1]->accumulate(std::move(dw));
        }
        if (wants(self, 2)) {
            Tensor<T> db({out});
            for (int r = 0; r < rows; ++r)
                for (int o = 0; o < out; ++o) db[o] += g(r, o);
            self.parents[2]->accumulate(std::move(db));
        }
    });
}

template <class T>
Var<T> grouped_linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias)
{
    if (x.shape().size() != 3 || w.shape().size() != 3 || x.dim(1) != w.dim(0) || x.dim(2) != w.dim(2))
        throw std::invalid_argument("grouped_linear: input " + to_string(x.shape()) + " vs weight " +
                                    to_string(w.shape()));
    const int n = x.dim(0), groups = x.dim(1), in = x.dim(2), out = w.dim(1);
    using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
    Tensor<T> y({n, groups, out});
    for (int b = 0; b < n; ++b)
        for (int c = 0; c < groups; ++c) {
            Eigen::Map<Vec> yv(y.data() + (static_cast<std::size_t>(b) * groups + c) * out, out);
            yv.noalias() = ConstMatMap<T>(w.value().data() + static_cast<std::size_t>(c) * out * in, out, in) *
                           Eigen::Map<const Vec>(x.value().data() + (static_cast<std::size_t>(b) * groups + c) * in, in);
            if (bias.defined()) yv += Eigen::Map<const Vec>(bias.value().data() + static_cast<std::size_t>(c) * out, out);
        }
    return make_result<T>(std::move(y), {&x, &w, &bias}, [n, groups, in, out](Node<T>& self) {
        const auto& xv = self.parents[0]->value;
        const auto& wv = self.parents[1]->value;
        Tensor<T> dx, dw, db;
        if (wants(self, 0)) dx = Tensor<T>(xv.shape());
        if (wants(self, 1)) dw = Tensor<T>(wv.shape());
        if (wants(self, 2)) db = Tensor<T>({groups, out});
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < groups; ++c) {
                const std::size_t row = static_cast<std::size_t>(b) * groups + c;
                Eigen::Map<const Vec> g(self.grad.data() + row * out, out);
                const ConstMatMap<T> wc(wv.data() + static_cast<std::size_t>(c) * out * in, out, in);
                if (!dx.empty()) Eigen::Map<Vec>(dx.data() + row * in, in).noalias() += wc.transpose() * g;
                if (!dw.empty())
                    MatMap<T>(dw.data() + static_cast<std::size_t>(c) * out * in, out, in).noalias() +=
                        g * Eigen::Map<const Vec>(xv.data() + row * in, in).transpose();
                if (!db.empty()) Eigen::Map<Vec>(db.data() + static_cast<std::size_t>(c) * out, out) += g;
            }
        if (!dx.empty()) self.parents[0]->accumulate(std::move(dx));
        if (!dw.empty()) self.parents[1]->accumulate(std::move(dw));
        if (!db.empty()) self.parents[2]->accumulate(std::move(db));
    });
}

template <class T>
Var<T> spectral_divide(const Var<T>& w, const Tensor<T>& u, const Tensor<T>& v)
{
    const int rows = w.dim(0);
    const int cols = static_cast<int>(w.value().size() / rows);
    if (static_cast<int>(u.size()) != rows || static_cast<int>(v.size()) != cols)
        throw std::invalid_argument("spectral_divide: power-iteration vectors do not match weight");
    double sigma_raw = 0;
    for (int r = 0; r < rows; ++r) {
        double s = 0;
        for (int c = 0; c < cols; ++c) s += static_cast<double>(w.value()[static_cast<std::size_t>(r) * cols + c]) * v[c];
        sigma_raw += u[r] * s;
    }
    constexpr double floor = 1e-12;
    const bool floored = sigma_raw < floor;
    const T sigma = static_cast<T>(floored ? floor : sigma_raw);
    Tensor<T> y = map_values(w.value(), [sigma](T x) { return x / sigma; });
    return make_result<T>(std::move(y), {&w}, [u, v, sigma, floored, rows, cols](Node<T>& self) {
        const auto& wv = self.parents[0]->value;
        Tensor<T> g = map_values(self.grad, [sigma](T x) { return x / sigma; });
        if (!floored) {
            double inner = 0;
            for (std::size_t i = 0; i < wv.size(); ++i) inner += static_cast<double>(self.grad[i]) * wv[i];
            const T k = static_cast<T>(inner / (static_cast<double>(sigma) * sigma));
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c) g[static_cast<std::size_t>(r) * cols + c] -= k * u[r] * v[c];
        }
        self.parents[0]->accumulate(std::move(g));
    });
}

// ---- spatial ---------------------------------------------------------------

template <class T>
Var<T> upsample_nearest(const Var<T>& x, int factor)
{
    return make_result<T>(kernels::upsample_nearest(x.value(), factor), {&x}, [factor](Node<T>& self) {
        self.parents[0]->accumulate(kernels::upsample_nearest_backward(self.grad, factor));
    });
}

template <class T>
Var<T> resize_bilinear(const Var<T>& x, int out_h, int out_w)
{
    const int in_h = x.dim(2), in_w = x.dim(3);
    if (in_h == out_h && in_w == out_w) return x;
    return make_result<T>(kernels::resize_bilinear(x.value(), out_h, out_w), {&x}, [in_h, in_w](Node<T>& self) {
        self.parents[0]->accumulate(kernels::resize_bilinear_backward(self.grad, in_h, in_w));
    });
}

template <class T>
Var<T> avg_pool2(const Var<T>& x)
{
    const int in_h = x.dim(2), in_w = x.dim(3);
    return make_result<T>(kernels::avg_pool2(x.value()), {&x}, [in_h, in_w](Node<T>& self) {
        self.parents[0]->accumulate(kernels::avg_pool2_backward(self.grad, in_h, in_w));
    });
}

template <class T>
Var<T> pixel_shuffle(const Var<T>& x, int r)
{
    return make_result<T>(kernels::pixel_shuffle(x.value(), r), {&x}, [r](Node<T>& self) {
        self.parents[0]->accumulate(kernels::pixel_unshuffle(self.grad, r));
    });
}

template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b)
{
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (as.size() != 4 || bs.size() != 4 || as[0] != bs[0] || as[2] != bs[2] || as[3] != bs[3])
        throw std::invalid_argument("concat_channels: " + to_string(as) + " vs " + to_string(bs));
    const int n = as[0], ca = as[1], cb = bs[1];
    const std::size_t plane = static_cast<std::size_t>(as[2]) * as[3];
    Tensor<T> y({n, ca + cb, as[2], as[3]});
    for (int i = 0; i < n; ++i) {
        std::copy_n(a.value().data() + i * ca * plane, ca * plane, y.data() + i * (ca + cb) * plane);
        std::copy_n(b.value().data() + i * cb * plane, cb * plane, y.data() + (i * (ca + cb) + ca) * plane);
    }
    return make_result<T>(std::move(y), {&a, &b}, [n, ca, cb, plane](Node<T>& self) {
        if (wants(self, 0)) {
            Tensor<T> g(self.parents[0]->value.shape());
            for (int i = 0; i < n; ++i)
                std::copy_n(self.grad.data() + i * (ca + cb) * plane, ca * plane, g.data() + i * ca * plane);
            self.parents[0]->accumulate(std::move(g));
        }
        if (wants(self, 1)) {
            Tensor<T> g(self.parents[1]->value.shape());
            for (int i = 0; i < n; ++i)
                std::copy_n(self.grad.data() + (i * (ca + cb) + ca) * plane, cb * plane, g.data() + i * cb * plane);
            self.parents[1]->accumulate(std::move(g));
        }
    });
}

template <class T>
Var<T> forward_difference(const Var<T>& x, int dir)
{
    return make_result<T>(kernels::forward_difference(x.value(), dir), {&x}, [dir](Node<T>& self) {
        self.parents[0]->accumulate(kernels::forward_difference_backward(self.grad, dir));
    });
}

template <class T>
Var<T> bilinear_sample(const Var<T>& tex, std::vector<float> uv, std::vector<std::uint8_t> mask, int out_h, int out_w)
{
    Tensor<T> y = kernels::bilinear_sample(tex.value(), uv, mask, out_h, out_w);
    return make_result<T>(std::move(y), {&tex}, [uv = std::move(uv), mask = std::move(mask)](Node<T>& self) {
        const auto& t = self.parents[0]->value;
        self.parents[0]->accumulate(kernels::bilinear_sample_backward(self.grad, uv, mask, t.dim(2), t.dim(3)));
    });
}

// ---- normalisation ---------------------------------------------------------

template <class T>
Var<T> normalize(const Var<T>& x, kernels::NormGroup group, T eps, Tensor<T>* mean_out, Tensor<T>* var_out)
{
    Tensor<T> mean, var;
    Tensor<T> xhat = kernels::normalize_forward(x.value(), group, eps, mean, var);
    if (mean_out) *mean_out = mean;
    if (var_out) *var_out = var;
    return make_result<T>(std::move(xhat), {&x}, [var = std::move(var), group, eps](Node<T>& self) {
        self.parents[0]->accumulate(kernels::normalize_backward(self.grad, self.value, var, group, eps));
    });
}

template <class T>
Var<T> normalize_with(const Var<T>& x, const Tensor<T>& mean, const Tensor<T>& var, T eps)
{
    const int n = x.dim(0), c = x.dim(1);
    const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    if (static_cast<int>(mean.size()) != c || static_cast<int>(var.size()) != c)
        throw std::invalid_argument("normalize_with: statistics do not match channels");
    std::vector<T> inv_std(c);
    for (int ch = 0; ch < c; ++ch) inv_std[ch] = T{1} / std::sqrt(var[ch] + eps);
    Tensor<T> y(x.shape());
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch) {
            const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
            for (std::size_t q = 0; q < plane; ++q) y[off + q] = (x.value()[off + q] - mean[ch]) * inv_std[ch];
        }
    return make_result<T>(std::move(y), {&x}, [inv_std = std::move(inv_std), n, c, plane](Node<T>& self) {
        Tensor<T> g(self.grad.shape());
        for (int b = 0; b < n; ++b)
            for (int ch = 0; ch < c; ++ch) {
                const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
                for (std::size_t q = 0; q < plane; ++q) g[off + q] = self.grad[off + q] * inv_std[ch];
            }
        self.parents[0]->accumulate(std::move(g));
    });
}

template <class T>
Var<T> add_channel_scaled_noise(const Var<T>& x, const Var<T>& strength, const Tensor<T>& noise)
{
    const int n = x.dim(0), c = x.dim(1);
    const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    if (noise.shape() != Shape{n, 1, x.dim(2), x.dim(3)} || static_cast<int>(strength.value().size()) != c)
        throw std::invalid_argument("add_channel_scaled_noise: noise " + to_string(noise.shape()) + " for input " +
                                    to_string(x.shape()));
    Tensor<T> y = x.value();
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch) {
            const T s = strength.value()[ch];
            const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
            for (std::size_t q = 0; q < plane; ++q) y[off + q] += s * noise[b * plane + q];
        }
    return make_result<T>(std::move(y), {&x, &strength}, [noise, n, c, plane](Node<T>& self) {
        if (wants(self, 0)) self.parents[0]->accumulate(self.grad);
        if (wants(self, 1)) {
            Tensor<T> ds({c});
            for (int ch = 0; ch < c; ++ch) {
                double s = 0;
                for (int b = 0; b < n; ++b) {
                    const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
                    for (std::size_t q = 0; q < plane; ++q)
                        s += static_cast<double>(self.grad[off + q]) * noise[b * plane + q];
                }
                ds[ch] = static_cast<T>(s);
            }
            self.parents[1]->accumulate(std::move(ds));
        }
    });
}

// ---- region ops ------------------------------------------------------------

template <class T>
Var<T> region_pool(const Var<T>& features, const Labels& labels, int num_classes, std::vector<int>* counts_out)
{
    auto r = kernels::region_pool(features.value(), labels, num_classes);
    if (counts_out) *counts_out = r.counts;
    const int channels = features.dim(1);
    return make_result<T>(std::move(r.styles), {&features},
                          [counts = std::move(r.counts), labels, channels](Node<T>& self) {
                              self.parents[0]->accumulate(
                                  kernels::region_pool_backward(self.grad, counts, labels, channels));
                          });
}

template <class T>
Var<T> broadcast_codes(const Var<T>& codes, const Labels& labels)
{
    const int num_classes = codes.dim(1);
    return make_result<T>(kernels::broadcast_codes(codes.value(), labels), {&codes},
                          [labels, num_classes](Node<T>& self) {
                              self.parents[0]->accumulate(
                                  kernels::broadcast_codes_backward(self.grad, labels, num_classes));
                          });
}

#define REAVAE_INSTANTIATE(T)                                                                                     \
    template class Var<T>;                                                                                        \
    template Var<T> add<T>(const Var<T>&, const Var<T>&);                                                         \
    template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                                         \
    template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                                         \
    template Var<T> scale<T>(const Var<T>&, T);                                                                   \
    template Var<T> add_scalar<T>(const Var<T>&, T);                                                              \
    template Var<T> relu<T>(const Var<T>&);                                                                       \
    template Var<T> leaky_relu<T>(const Var<T>&, T);                                                              \
    template Var<T> sigmoid<T>(const Var<T>&);                                                                    \
    template Var<T> tanh<T>(const Var<T>&);                                                                       \
    template Var<T> exp<T>(const Var<T>&);                                                                        \
    template Var<T> square<T>(const Var<T>&);                                                                     \
    template Var<T> clamp<T>(const Var<T>&, T, T);                                                                \
    template Var<T> reshape<T>(const Var<T>&, Shape);                                                             \
    template Var<T> sum<T>(const Var<T>&);                                                                        \
    template Var<T> mean<T>(const Var<T>&);                                                                       \
    template Var<T> l1_mean<T>(const Var<T>&, const Var<T>&);                                                     \
    template Var<T> masked_l1_mean<T>(const Var<T>&, const Var<T>&, std::vector<std::uint8_t>);                   \
    template Var<T> kl_divergence<T>(const Var<T>&, const Var<T>&);                                               \
    template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                             \
    template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);                                       \
    template Var<T> grouped_linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);                               \
    template Var<T> spectral_divide<T>(const Var<T>&, const Tensor<T>&, const Tensor<T>&);                        \
    template Var<T> upsample_nearest<T>(const Var<T>&, int);                                                      \
    template Var<T> resize_bilinear<T>(const Var<T>&, int, int);                                                  \
    template Var<T> avg_pool2<T>(const Var<T>&);                                                                  \
    template Var<T> pixel_shuffle<T>(const Var<T>&, int);                                                         \
    template Var<T> concat_channels<T>(const Var<T>&, const Var<T>&);                                             \
    template Var<T> forward_difference<T>(const Var<T>&, int);                                                    \
    template Var<T> bilinear_sample<T>(const Var<T>&, std::vector<float>, std::vector<std::uint8_t>, int, int);   \
    template Var<T> normalize<T>(const Var<T>&, kernels::NormGroup, T, Tensor<T>*, Tensor<T>*);                   \
    template Var<T> normalize_with<T>(const Var<T>&, const Tensor<T>&, const Tensor<T>&, T);                      \
    template Var<T> add_channel_scaled_noise<T>(const Var<T>&, const Var<T>&, const Tensor<T>&);                  \
    template Var<T> region_pool<T>(const Var<T>&, const Labels&, int, std::vector<int>*);                         \
    template Var<T> broadcast_codes<T>(const Var<T>&, const Labels&);
REAVAE_INSTANTIATE(float)
REAVAE_INSTANTIATE(double)
#undef REAVAE_INSTANTIATE

} // namespace reavae::ag
