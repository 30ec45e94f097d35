#pragma once

#include "pdeo/core.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

namespace pdeo {

/// Row-major RGB image.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<Vec3> pixels;

    Image() = default;
    Image(int w, int h, const Vec3& fill = Vec3::Zero())
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

    std::size_t size() const { return pixels.size(); }
    Vec3& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
    const Vec3& at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
    bool all_finite() const;
};

/// Pixel lattice for image2d scenes. Pixel (row, col) samples the point
/// origin + ((col + 0.5), (row + 0.5)) * pixel_scale.
struct ImageGrid {
    int width = 0;
    int height = 0;
    Vec3 origin = Vec3::Zero();
    double pixel_scale = 1.0;

    Vec3 pixel_center(int row, int col) const {
        return origin + Vec3((col + 0.5) * pixel_scale, (row + 0.5) * pixel_scale, 0.0);
    }
};

/// Grid covering `bbox` (first two axes) with `width` x `height` pixels.
ImageGrid make_grid(const Aabb& bbox, int width, int height);

using View = std::variant<ImageGrid, CameraOrtho>;

int view_width(const View& view);
int view_height(const View& view);

/// Coefficients of the closed-form line integral of a Gaussian along a unit
/// local-frame direction r:
///   A = sum_j r_j^2 / (2 s_j^2),   B(x) = sum_j r_j x_j / s_j^2.
/// For offsets with x_1 = 0, B reduces to r_2 x_2 / s_2^2 + r_3 x_3 / s_3^2.
struct SplatCoeffs {
    double a = 0.0;
    Vec3 b_weights = Vec3::Zero();

    double b(const Vec3& local_offset) const { return b_weights.dot(local_offset); }
    double b(double x2, double x3) const { return b_weights[1] * x2 + b_weights[2] * x3; }
};

SplatCoeffs splat_coeffs(const RawGaussian& g, const Vec3& local_dir);

/// Exact integral of eval_gaussian along the ray of pixel (row, col):
///   exp(-sum_j x_j^2 / (2 s_j^2) + B^2 / (4A)) * sqrt(pi / A)
/// with x the ray origin in the Gaussian's local frame.
double splat_closed_form(const RawGaussian& g, const CameraOrtho& cam, int row, int col);

/// Trapezoidal integral of eval_gaussian along the same ray over +-8 of the
/// Gaussian's largest standard deviations around the closest approach to mu.
/// n_samples must be odd and at least 3.
double splat_quadrature(const RawGaussian& g, const CameraOrtho& cam, int row, int col, int n_samples);

inline constexpr double kAlphaClamp = 0.999;

struct BlendResult {
    Vec3 color = Vec3::Zero();
    double transmittance = 1.0;
};

/// Front-to-back alpha blending: C = sum_i c_i a_i prod_{j<i}(1 - a_j) + T_N * background,
/// with each a_i clamped into [0, kAlphaClamp].
BlendResult render_pixel(std::span<const Vec3> colors, std::span<const double> alphas,
                         const Vec3& background = Vec3::Zero());

struct RenderOptions {
    Vec3 background = Vec3::Zero();
    /// Footprint cutoff in projected standard deviations.
    double cull_sigma = 4.0;
};

/// One Gaussian's contribution to one pixel, in blend order.
struct BlendEntry {
    std::uint32_t gaussian = 0;
    double splat = 0.0;
    double alpha = 0.0;  // after clamping
    bool clamped = false;
};

/// Everything the backward pass needs from a forward render.
struct ForwardState {
    View view;
    Mode mode = Mode::image2d;
    RenderOptions options;
    Image image;
    std::size_t scene_size = 0;
    std::vector<std::size_t> offsets;  // pixel p owns entries[offsets[p], offsets[p+1])
    std::vector<BlendEntry> entries;
    std::vector<double> final_transmittance;
    std::vector<std::uint8_t> visible;

    std::span<const BlendEntry> pixel_entries(std::size_t pixel) const {
        return {entries.data() + offsets[pixel], offsets[pixel + 1] - offsets[pixel]};
    }
    std::vector<std::size_t> visible_indices() const;
};

/// Blend depth of a Gaussian: depth_key in image2d, distance along the view
/// direction in ortho3d.
double blend_depth(const RawGaussian& g, Mode mode, const View& view);

/// Exponent of the splat weight at pixel (row, col): -1/2 of the squared
/// projected Mahalanobis distance. Pixels below -cull_sigma^2 / 2 are culled.
double splat_exponent_at(const RawGaussian& g, Mode mode, const View& view, int row, int col);

ForwardState render_forward(const Scene& scene, const View& view, const RenderOptions& options = {});
Image render_image(const Scene& scene, const View& view, const RenderOptions& options = {});

/// Per-Gaussian, per-attribute loss gradients.
struct GradientSet {
    Mode mode = Mode::image2d;
    std::vector<Vec3> d_mu;
    std::vector<Vec3> d_color;
    std::vector<double> d_opacity;
    std::vector<Vec3> d_log_scale;
    std::vector<double> d_angle;
    /// |d_mu| per Gaussian (densification statistic).
    std::vector<double> mu_norm;
    std::vector<std::uint8_t> visible;

    GradientSet() = default;
    GradientSet(std::size_t n, Mode m);
    std::size_t size() const { return d_mu.size(); }
    void refresh_norms();
    bool all_finite() const;
};

/// Analytic gradient of the scalar loss whose per-pixel derivative dL/dC is
/// `residual`, including occlusion terms for downstream Gaussians.
GradientSet backward_image(const Scene& scene, const ForwardState& forward, const Image& residual);

}  // namespace pdeo
