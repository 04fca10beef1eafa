#include "reavae/renderer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "json.hpp"
#include "reavae/core_data.hpp"

namespace reavae {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

constexpr char view_magic[8] = {'R', 'E', 'A', 'V', 'A', 'E', 'U', 'V'};
constexpr int view_format_version = 1;

} // namespace

void ViewUVMap::validate() const
{
    if (height <= 0 || width <= 0) throw std::invalid_argument("view '" + name + "' has zero size");
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    if (uv.size() != 2 * plane) throw std::invalid_argument("view '" + name + "': uv plane size mismatch");
    if (mask.size() != plane) throw std::invalid_argument("view '" + name + "': mask plane size mismatch");
    for (float c : uv)
        if (!std::isfinite(c)) throw std::invalid_argument("view '" + name + "': non-finite uv coordinate");
}

std::size_t ViewUVMap::out_of_range_count() const
{
    std::size_t n = 0;
    for (std::size_t q = 0; q < mask.size(); ++q) {
        if (!mask[q]) continue;
        const float u = uv[2 * q], v = uv[2 * q + 1];
        if (u < 0.f || u > 1.f || v < 0.f || v > 1.f) ++n;
    }
    return n;
}

ViewUVMap identity_view(int height, int width, std::string name)
{
    ViewUVMap view{std::move(name), height, width, {}, {}};
    view.uv.resize(2 * static_cast<std::size_t>(height) * width);
    view.mask.assign(static_cast<std::size_t>(height) * width, 1);
    for (int i = 0; i < height; ++i)
        for (int j = 0; j < width; ++j) {
            const std::size_t q = static_cast<std::size_t>(i) * width + j;
            view.uv[2 * q] = width > 1 ? static_cast<float>(j) / static_cast<float>(width - 1) : 0.f;
            view.uv[2 * q + 1] = height > 1 ? static_cast<float>(i) / static_cast<float>(height - 1) : 0.f;
        }
    return view;
}

namespace {

template <class F>
ViewUVMap mapped_view(int height, int width, std::string name, F&& map)
{
    ViewUVMap view{std::move(name), height, width, {}, {}};
    view.uv.assign(2 * static_cast<std::size_t>(height) * width, 0.f);
    view.mask.assign(static_cast<std::size_t>(height) * width, 0);
    for (int i = 0; i < height; ++i)
        for (int j = 0; j < width; ++j) {
            const double x = (width > 1 ? j / double(width - 1) : 0.5) - 0.5;
            const double y = (height > 1 ? i / double(height - 1) : 0.5) - 0.5;
            double u = 0, v = 0;
            if (!map(x, y, u, v)) continue;
            // Snap round-off at the texture border back inside.
            constexpr double tol = 1e-9;
            if (u < -tol || u > 1 + tol || v < -tol || v > 1 + tol) continue;
            u = std::clamp(u, 0.0, 1.0);
            v = std::clamp(v, 0.0, 1.0);
            const std::size_t q = static_cast<std::size_t>(i) * width + j;
            view.uv[2 * q] = static_cast<float>(u);
            view.uv[2 * q + 1] = static_cast<float>(v);
            view.mask[q] = 1;
        }
    return view;
}

} // namespace

ViewUVMap affine_view(int height, int width, double degrees, double scale, double shift_u, double shift_v,
                      std::string name)
{
    if (scale <= 0) throw std::invalid_argument("affine_view: scale must be positive");
    const double t = degrees * std::acos(-1.0) / 180.0, c = std::cos(t), s = std::sin(t);
    return mapped_view(height, width, std::move(name), [&](double x, double y, double& u, double& v) {
        u = 0.5 + (c * x - s * y) / scale + shift_u;
        v = 0.5 + (s * x + c * y) / scale + shift_v;
        return true;
    });
}

ViewUVMap swirl_view(int height, int width, double strength, std::string name)
{
    return mapped_view(height, width, std::move(name), [&](double x, double y, double& u, double& v) {
        const double r = std::hypot(x, y);
        if (r > 0.5) return false;
        const double a = std::atan2(y, x) + strength * (1.0 - r / 0.5);
        u = 0.5 + r * std::cos(a);
        v = 0.5 + r * std::sin(a);
        return true;
    });
}

std::vector<ViewUVMap> synthetic_views(int resolution, int count)
{
    if (count < 1) throw std::invalid_argument("synthetic_views: need at least one view");
    std::vector<ViewUVMap> views;
    for (int k = 0; k < count; ++k) {
        switch (k) {
        case 0: views.push_back(identity_view(resolution, resolution, "front")); break;
        case 1: views.push_back(affine_view(resolution, resolution, 180, 1.0, 0, 0, "back")); break;
        case 2: views.push_back(affine_view(resolution, resolution, 12, 0.85, 0.04, -0.03, "left")); break;
        case 3: views.push_back(swirl_view(resolution, resolution, 1.5, "right")); break;
        default:
            views.push_back(swirl_view(resolution, resolution, (k % 2 ? -1.0 : 1.0) * (0.5 + 0.25 * k),
                                       "view" + std::to_string(k)));
        }
    }
    return views;
}

std::vector<std::uint8_t> encode_view(const ViewUVMap& view)
{
    view.validate();
    const std::string manifest =
        nlohmann::json{{"format", "reavae-uv"}, {"version", view_format_version}, {"name", view.name},
                       {"height", view.height}, {"width", view.width}}
            .dump();
    std::vector<std::uint8_t> out(view_magic, view_magic + 8);
    const std::uint64_t len = manifest.size();
    out.resize(16);
    std::memcpy(out.data() + 8, &len, 8);
    out.insert(out.end(), manifest.begin(), manifest.end());
    const auto* uv = reinterpret_cast<const std::uint8_t*>(view.uv.data());
    out.insert(out.end(), uv, uv + view.uv.size() * sizeof(float));
    out.insert(out.end(), view.mask.begin(), view.mask.end());
    return out;
}

ViewUVMap decode_view(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 16 || std::memcmp(bytes.data(), view_magic, 8) != 0)
        throw std::invalid_argument("not a view UV map file");
    std::uint64_t len = 0;
    std::memcpy(&len, bytes.data() + 8, 8);
    if (len > bytes.size() - 16) throw std::invalid_argument("view UV map: truncated manifest");
    const auto manifest = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(len));
    if (manifest.value("version", -1) != view_format_version)
        throw std::invalid_argument("view UV map: unsupported version " + manifest.value("version", nlohmann::json()).dump());
    ViewUVMap view;
    view.name = manifest.at("name").get<std::string>();
    view.height = manifest.at("height").get<int>();
    view.width = manifest.at("width").get<int>();
    if (view.height <= 0 || view.width <= 0) throw std::invalid_argument("view UV map: zero size");
    const std::size_t plane = static_cast<std::size_t>(view.height) * view.width;
    const std::size_t body = bytes.size() - 16 - len;
    if (body != plane * 2 * sizeof(float) + plane) throw std::invalid_argument("view UV map: blob length mismatch");
    const std::uint8_t* p = bytes.data() + 16 + len;
    view.uv.resize(2 * plane);
    std::memcpy(view.uv.data(), p, 2 * plane * sizeof(float));
    view.mask.assign(p + 2 * plane * sizeof(float), p + body);
    for (auto& m : view.mask) m = m ? 1 : 0;
    view.validate();
    return view;
}

void save_view(const std::filesystem::path& path, const ViewUVMap& view)
{
    write_file(path, encode_view(view));
}

ViewUVMap load_view(const std::filesystem::path& path)
{
    return decode_view(read_file(path));
}

template <class T>
ag::Var<T> render_view(const ag::Var<T>& tex, const ViewUVMap& view, std::size_t* clamped)
{
    view.validate();
    if (clamped) *clamped = view.out_of_range_count();
    return ag::bilinear_sample(tex, view.uv, view.mask, view.height, view.width);
}

template <class T>
std::pair<ag::Var<T>, ag::Var<T>> image_gradient(const ag::Var<T>& img)
{
    return {ag::forward_difference(img, 0), ag::forward_difference(img, 1)};
}

template <class T>
ag::Var<T> render_loss(const ag::Var<T>& real, const ag::Var<T>& fake, const std::vector<ViewUVMap>& views)
{
    if (views.empty()) throw std::invalid_argument("render_loss: no views");
    real.value().require_same_shape(fake.value(), "render_loss");
    const ag::Var<T> target(real.value());
    ag::Var<T> acc;
    for (const auto& view : views) {
        const ag::Var<T> rx = render_view(target, view), rg = render_view(fake, view);
        const auto [gx_r, gy_r] = image_gradient(rx);
        const auto [gx_g, gy_g] = image_gradient(rg);
        ag::Var<T> term = ag::masked_l1_mean(rx, rg, view.mask);
        term = ag::add(term, ag::masked_l1_mean(gx_r, gx_g, view.mask));
        term = ag::add(term, ag::masked_l1_mean(gy_r, gy_g, view.mask));
        acc = acc.defined() ? ag::add(acc, term) : term;
    }
    return ag::scale(acc, T(1) / static_cast<T>(views.size()));
}

#define REAVAE_INSTANTIATE(T)                                                                                   \
    template ag::Var<T> render_view<T>(const ag::Var<T>&, const ViewUVMap&, std::size_t*);                     \
    template std::pair<ag::Var<T>, ag::Var<T>> image_gradient<T>(const ag::Var<T>&);                          \
    template ag::Var<T> render_loss<T>(const ag::Var<T>&, const ag::Var<T>&, const std::vector<ViewUVMap>&);
REAVAE_INSTANTIATE(float)
REAVAE_INSTANTIATE(double)
#undef REAVAE_INSTANTIATE

} // namespace reavae
