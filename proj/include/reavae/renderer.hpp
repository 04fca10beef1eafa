#pragma once

#include <filesystem>
#include <string>

#include "reavae/autograd.hpp"

namespace reavae {

/// Per-pixel texture coordinates for one rendered view. uv holds Hv·Wv
/// interleaved (u, v) pairs; mask marks foreground pixels.
struct ViewUVMap {
    std::string name;
    int height = 0, width = 0;
    std::vector<float> uv;
    std::vector<std::uint8_t> mask;

    void validate() const;
    /// Foreground pixels whose coordinates fall outside [0,1].
    std::size_t out_of_range_count() const;
};

ViewUVMap identity_view(int height, int width, std::string name = "front");
/// Rotation by `degrees` and isotropic `scale` about the centre, then shift.
/// Pixels mapping outside the texture become background.
ViewUVMap affine_view(int height, int width, double degrees, double scale, double shift_u, double shift_v,
                      std::string name);
/// Radial swirl: angle offset strength·(1 − r/r_max) inside the unit disc.
ViewUVMap swirl_view(int height, int width, double strength, std::string name);
/// Fixed set of V stand-in views at the texture resolution.
std::vector<ViewUVMap> synthetic_views(int resolution, int count);

std::vector<std::uint8_t> encode_view(const ViewUVMap& view);
ViewUVMap decode_view(std::span<const std::uint8_t> bytes);
void save_view(const std::filesystem::path& path, const ViewUVMap& view);
ViewUVMap load_view(const std::filesystem::path& path);

/// Differentiable bilinear lookup of tex (N×3×H×W) through the view.
/// Background pixels are 0. Coordinates outside [0,1] are clamped and
/// reported through `clamped` when given.
template <class T>
ag::Var<T> render_view(const ag::Var<T>& tex, const ViewUVMap& view, std::size_t* clamped = nullptr);

/// Forward differences (along width, along height); last column/row is 0.
template <class T>
std::pair<ag::Var<T>, ag::Var<T>> image_gradient(const ag::Var<T>& img);

/// Mean over views of: masked mean |R(x) − R(G)| + masked mean |∂x R(x) − ∂x R(G)|
/// + masked mean |∂y R(x) − ∂y R(G)|. The ground-truth side is not differentiated.
template <class T>
ag::Var<T> render_loss(const ag::Var<T>& real, const ag::Var<T>& fake, const std::vector<ViewUVMap>& views);

} // namespace reavae
