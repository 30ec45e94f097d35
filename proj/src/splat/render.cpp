#include "pdeo/splat.hpp"
#include "prepared.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pdeo {

namespace {

Vec3 view_direction(const View& view) {
    if (const auto* cam = std::get_if<CameraOrtho>(&view)) return cam->view_dir;
    return Vec3::UnitZ();
}

Vec3 sample_point(const View& view, int row, int col) {
    if (const auto* cam = std::get_if<CameraOrtho>(&view)) return cam->ray_origin(row, col);
    return std::get<ImageGrid>(view).pixel_center(row, col);
}

/// Continuous pixel coordinates (col, row) of a Gaussian's projected center.
std::pair<double, double> project_center(const View& view, const Vec3& mu) {
    if (const auto* cam = std::get_if<CameraOrtho>(&view)) {
        const Vec3 d = mu - cam->center;
        return {d.dot(cam->basis_u) / cam->pixel_scale + 0.5 * cam->width - 0.5,
                d.dot(cam->basis_v) / cam->pixel_scale + 0.5 * cam->height - 0.5};
    }
    const auto& grid = std::get<ImageGrid>(view);
    return {(mu[0] - grid.origin[0]) / grid.pixel_scale - 0.5, (mu[1] - grid.origin[1]) / grid.pixel_scale - 0.5};
}

double pixel_scale_of(const View& view) {
    return std::visit([](const auto& v) { return v.pixel_scale; }, view);
}

void check_view(const Scene& scene, const View& view) {
    const bool is_cam = std::holds_alternative<CameraOrtho>(view);
    if (is_cam != (scene.mode == Mode::ortho3d)) throw UsageError("view type does not match scene mode");
    if (is_cam) validate_camera(std::get<CameraOrtho>(view));
}

}  // namespace

double splat_exponent_at(const RawGaussian& g, Mode mode, const View& view, int row, int col) {
    const detail::Prepared p = detail::prepare(g, mode, view_direction(view));
    return detail::splat_exponent(p, mode, detail::local_offset(p, g, sample_point(view, row, col)));
}

ForwardState render_forward(const Scene& scene, const View& view, const RenderOptions& options) {
    check_view(scene, view);
    const Mode mode = scene.mode;
    const int width = view_width(view);
    const int height = view_height(view);
    const std::size_t n_pixels = static_cast<std::size_t>(width) * height;
    const std::size_t n = scene.size();
    const Vec3 dir = view_direction(view);
    const double ps = pixel_scale_of(view);
    const double min_exponent = -0.5 * options.cull_sigma * options.cull_sigma;

    std::vector<double> depth(n);
    for (std::size_t i = 0; i < n; ++i) depth[i] = blend_depth(scene.gaussians[i], mode, view);
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return depth[a] < depth[b]; });

    ForwardState fs;
    fs.view = view;
    fs.mode = mode;
    fs.options = options;
    fs.scene_size = n;
    fs.visible.assign(n, 0);

    // Gaussians are visited front to back, so each pixel list comes out sorted.
    std::vector<std::vector<BlendEntry>> lists(n_pixels);
    for (const std::uint32_t gi : order) {
        const RawGaussian& g = scene.gaussians[gi];
        const detail::Prepared p = detail::prepare(g, mode, dir);
        const auto [cx, cy] = project_center(view, g.mu);
        const double radius = options.cull_sigma * p.max_scale / ps + 1.0;
        const int c0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
        const int c1 = std::min(width - 1, static_cast<int>(std::ceil(cx + radius)));
        const int r0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
        const int r1 = std::min(height - 1, static_cast<int>(std::ceil(cy + radius)));
        for (int r = r0; r <= r1; ++r) {
            for (int c = c0; c <= c1; ++c) {
                const Vec3 x = detail::local_offset(p, g, sample_point(view, r, c));
                const double e = detail::splat_exponent(p, mode, x);
                if (e < min_exponent) continue;
                BlendEntry entry;
                entry.gaussian = gi;
                entry.splat = detail::splat_from_exponent(p, mode, e);
                const double raw_alpha = p.opacity * entry.splat;
                entry.clamped = raw_alpha > kAlphaClamp;
                entry.alpha = entry.clamped ? kAlphaClamp : raw_alpha;
                lists[static_cast<std::size_t>(r) * width + c].push_back(entry);
                fs.visible[gi] = 1;
            }
        }
    }

    fs.offsets.resize(n_pixels + 1, 0);
    for (std::size_t px = 0; px < n_pixels; ++px) fs.offsets[px + 1] = fs.offsets[px] + lists[px].size();
    fs.entries.reserve(fs.offsets.back());
    for (auto& list : lists) fs.entries.insert(fs.entries.end(), list.begin(), list.end());

    fs.image = Image(width, height);
    fs.final_transmittance.assign(n_pixels, 1.0);
    std::vector<Vec3> colors;
    std::vector<double> alphas;
    for (std::size_t px = 0; px < n_pixels; ++px) {
        colors.clear();
        alphas.clear();
        for (const BlendEntry& e : fs.pixel_entries(px)) {
            colors.push_back(scene.gaussians[e.gaussian].color);
            alphas.push_back(e.alpha);
        }
        const BlendResult blended = render_pixel(colors, alphas, options.background);
        fs.image.pixels[px] = blended.color;
        fs.final_transmittance[px] = blended.transmittance;
    }
    return fs;
}

Image render_image(const Scene& scene, const View& view, const RenderOptions& options) {
    return render_forward(scene, view, options).image;
}

GradientSet backward_image(const Scene& scene, const ForwardState& forward, const Image& residual) {
    if (forward.scene_size != scene.size() || forward.mode != scene.mode ||
        forward.offsets.size() != forward.image.size() + 1) {
        throw UsageError("backward_image: forward state does not belong to this scene");
    }
    if (residual.width != forward.image.width || residual.height != forward.image.height) {
        throw UsageError("backward_image: residual size does not match the rendered image");
    }
    const Mode mode = scene.mode;
    const std::size_t n = scene.size();
    const View& view = forward.view;
    const Vec3 dir = view_direction(view);
    const int width = forward.image.width;

    std::vector<detail::Prepared> prepared;
    prepared.reserve(n);
    for (const auto& g : scene.gaussians) prepared.push_back(detail::prepare(g, mode, dir));

    GradientSet grads(n, mode);
    grads.visible = forward.visible;
    std::vector<double> trans;
    for (std::size_t px = 0; px < forward.image.size(); ++px) {
        const Vec3& dl_dc = residual.pixels[px];
        if (dl_dc.isZero(0.0)) continue;
        const auto entries = forward.pixel_entries(px);
        if (entries.empty()) continue;
        trans.resize(entries.size());
        double t = 1.0;
        for (std::size_t k = 0; k < entries.size(); ++k) {
            trans[k] = t;
            t *= 1.0 - entries[k].alpha;
        }
        const int row = static_cast<int>(px / width);
        const int col = static_cast<int>(px % width);
        const Vec3 point = sample_point(view, row, col);
        // behind = sum_{k > i} c_k a_k T_k + T_N * background
        Vec3 behind = forward.options.background * forward.final_transmittance[px];
        for (std::size_t k = entries.size(); k-- > 0;) {
            const BlendEntry& e = entries[k];
            const detail::Prepared& p = prepared[e.gaussian];
            const double a = e.alpha;
            grads.d_color[e.gaussian] += dl_dc * (a * trans[k]);
            if (!e.clamped) {
                const double dl_dalpha = dl_dc.dot(p.color * trans[k] - behind / (1.0 - a));
                const double o = p.opacity;
                grads.d_opacity[e.gaussian] += dl_dalpha * e.splat * o * (1.0 - o);
                const RawGaussian& g = scene.gaussians[e.gaussian];
                const Vec3 x = detail::local_offset(p, g, point);
                const detail::SplatGrad sg = detail::splat_grad(p, mode, x, e.splat);
                const double dl_dsplat = dl_dalpha * o;
                grads.d_mu[e.gaussian] += dl_dsplat * sg.d_mu;
                grads.d_log_scale[e.gaussian] += dl_dsplat * sg.d_log_scale;
                grads.d_angle[e.gaussian] += dl_dsplat * sg.d_angle;
            }
            behind += p.color * (a * trans[k]);
        }
    }
    grads.refresh_norms();
    return grads;
}

}  // namespace pdeo
