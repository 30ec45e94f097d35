#include "pdeo/splat.hpp"
#include "prepared.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pdeo {

bool Image::all_finite() const {
    return std::all_of(pixels.begin(), pixels.end(), [](const Vec3& p) { return p.allFinite(); });
}

ImageGrid make_grid(const Aabb& bbox, int width, int height) {
    if (width <= 0 || height <= 0) throw ConfigError("image grid needs positive size");
    ImageGrid grid;
    grid.width = width;
    grid.height = height;
    grid.origin = Vec3(bbox.lo[0], bbox.lo[1], 0.0);
    grid.pixel_scale = std::max(bbox.extent()[0] / width, bbox.extent()[1] / height);
    return grid;
}

int view_width(const View& view) {
    return std::visit([](const auto& v) { return v.width; }, view);
}

int view_height(const View& view) {
    return std::visit([](const auto& v) { return v.height; }, view);
}

SplatCoeffs splat_coeffs(const RawGaussian& g, const Vec3& local_dir) {
    const Vec3 scale = activate_scale(g.log_scale, 3);
    if (scale.minCoeff() < kMinScale) throw SingularityError("degenerate Gaussian scale");
    SplatCoeffs out;
    for (int j = 0; j < 3; ++j) {
        const double inv_var = 1.0 / (scale[j] * scale[j]);
        out.a += 0.5 * local_dir[j] * local_dir[j] * inv_var;
        out.b_weights[j] = local_dir[j] * inv_var;
    }
    if (!(out.a > 0.0)) throw SingularityError("line-integral coefficient A is not positive");
    return out;
}

double splat_closed_form(const RawGaussian& g, const CameraOrtho& cam, int row, int col) {
    const Vec3 scale = activate_scale(g.log_scale, 3);
    if (scale.minCoeff() < kMinScale) throw SingularityError("degenerate Gaussian scale");
    const Vec3 x = g.rot.transpose() * (cam.ray_origin(row, col) - g.mu);
    const SplatCoeffs k = splat_coeffs(g, g.rot.transpose() * cam.view_dir);
    double c = 0.0;
    for (int j = 0; j < 3; ++j) c += x[j] * x[j] / (2.0 * scale[j] * scale[j]);
    const double b = k.b(x);
    return std::exp(-c + b * b / (4.0 * k.a)) * std::sqrt(std::numbers::pi / k.a);
}

double splat_quadrature(const RawGaussian& g, const CameraOrtho& cam, int row, int col, int n_samples) {
    if (n_samples < 3 || n_samples % 2 == 0) throw UsageError("quadrature needs an odd sample count >= 3");
    const Vec3 origin = cam.ray_origin(row, col);
    const double t_center = (g.mu - origin).dot(cam.view_dir);
    const double half = 8.0 * activate_scale(g.log_scale, 3).maxCoeff();
    const double h = 2.0 * half / (n_samples - 1);
    double sum = 0.0;
    for (int k = 0; k < n_samples; ++k) {
        const double t = t_center - half + k * h;
        const double f = eval_gaussian(g, Mode::ortho3d, origin + t * cam.view_dir);
        sum += (k == 0 || k == n_samples - 1) ? 0.5 * f : f;
    }
    return sum * h;
}

BlendResult render_pixel(std::span<const Vec3> colors, std::span<const double> alphas, const Vec3& background) {
    if (colors.size() != alphas.size()) throw UsageError("render_pixel: colors and alphas differ in length");
    BlendResult out;
    double t = 1.0;
    for (std::size_t i = 0; i < colors.size(); ++i) {
        const double a = std::clamp(alphas[i], 0.0, kAlphaClamp);
        out.color += colors[i] * (a * t);
        t *= 1.0 - a;
    }
    out.color += background * t;
    out.transmittance = t;
    return out;
}

double blend_depth(const RawGaussian& g, Mode mode, const View& view) {
    if (mode == Mode::image2d) return g.depth_key;
    const auto& cam = std::get<CameraOrtho>(view);
    return (g.mu - cam.center).dot(cam.view_dir);
}

std::vector<std::size_t> ForwardState::visible_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < visible.size(); ++i) {
        if (visible[i]) out.push_back(i);
    }
    return out;
}

GradientSet::GradientSet(std::size_t n, Mode m)
    : mode(m),
      d_mu(n, Vec3::Zero()),
      d_color(n, Vec3::Zero()),
      d_opacity(n, 0.0),
      d_log_scale(n, Vec3::Zero()),
      d_angle(n, 0.0),
      mu_norm(n, 0.0),
      visible(n, 0) {}

void GradientSet::refresh_norms() {
    for (std::size_t i = 0; i < size(); ++i) mu_norm[i] = d_mu[i].norm();
}

bool GradientSet::all_finite() const {
    for (std::size_t i = 0; i < size(); ++i) {
        if (!d_mu[i].allFinite() || !d_color[i].allFinite() || !std::isfinite(d_opacity[i]) ||
            !d_log_scale[i].allFinite() || !std::isfinite(d_angle[i])) {
            return false;
        }
    }
    return true;
}

}  // namespace pdeo
