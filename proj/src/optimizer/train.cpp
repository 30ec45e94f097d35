#include "pdeo/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace pdeo {

namespace {

double median_of(std::vector<double> values) {
    if (values.empty()) return 0.0;
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double hi = values[mid];
    if (values.size() % 2 == 1) return hi;
    const double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

std::array<double, 4> quartile_step_medians(const std::vector<double>& scales, const std::vector<Vec3>& applied) {
    const std::size_t n = scales.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scales[a] < scales[b]; });
    std::array<double, 4> out{};
    for (std::size_t q = 0; q < 4; ++q) {
        std::vector<double> norms;
        for (std::size_t r = q * n / 4; r < (q + 1) * n / 4; ++r) norms.push_back(applied[order[r]].norm());
        out[q] = median_of(std::move(norms));
    }
    return out;
}

void clamp_position(RawGaussian& g, const Aabb& limits, int dim) {
    for (int a = 0; a < dim; ++a) g.mu[a] = std::clamp(g.mu[a], limits.lo[a], limits.hi[a]);
}

void densify_and_prune(Scene& scene, OptimizerState& state, const TrainConfig& cfg, Rng& rng, const Aabb& limits) {
    const int dim = scene.dim();
    const std::size_t n = scene.size();
    std::vector<double> scales(n);
    for (std::size_t i = 0; i < n; ++i) scales[i] = max_scale(scene.gaussians[i], dim);
    const double median_scale = median_of(scales);

    std::size_t room = cfg.max_gaussians > n ? cfg.max_gaussians - n : 0;
    std::vector<std::size_t> kept;
    std::vector<RawGaussian> children;
    kept.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const RawGaussian& g = scene.gaussians[i];
        const double stat = state.grad_count[i] > 0 ? state.grad_accum[i] / state.grad_count[i] : 0.0;
        const Vec3& particle = cfg.cosine_uses_blended ? state.last_applied[i] : state.last_raw[i];
        DensifyAction action = DensifyAction::none;
        if (room > 0) {
            action = densify_decide(particle, state.field.velocity_at(g.mu), stat, scales[i], median_scale, cfg);
        }
        if (action == DensifyAction::clone) {
            auto [parent, child] = clone(g, state.last_applied[i], rng);
            clamp_position(child, limits, dim);
            kept.push_back(i);
            children.push_back(child);
            --room;
        } else if (action == DensifyAction::split) {
            auto [first, second] = split(g, scene.mode, rng);
            clamp_position(first, limits, dim);
            clamp_position(second, limits, dim);
            children.push_back(first);
            children.push_back(second);
            --room;
        } else {
            kept.push_back(i);
        }
    }
    std::vector<RawGaussian> next;
    next.reserve(kept.size() + children.size());
    for (const std::size_t i : kept) next.push_back(scene.gaussians[i]);
    next.insert(next.end(), children.begin(), children.end());
    scene.gaussians = std::move(next);
    state.remap(kept, children.size());
    std::fill(state.grad_accum.begin(), state.grad_accum.end(), 0.0);
    std::fill(state.grad_count.begin(), state.grad_count.end(), 0u);

    const std::vector<std::size_t> survivors = prune(scene, cfg);
    state.remap(survivors, 0);
}

double mean_psnr(const Scene& scene, std::span<const TrainView> views, const RenderOptions& opts, double* ssim_out) {
    double sum = 0.0;
    double ssim_sum = 0.0;
    for (const auto& v : views) {
        const Image img = render_image(scene, v.view, opts);
        sum += psnr(img, v.target);
        if (ssim_out) ssim_sum += ssim(img, v.target);
    }
    const double n = static_cast<double>(views.size());
    if (ssim_out) *ssim_out = ssim_sum / n;
    return sum / n;
}

}  // namespace

TrainResult train(Scene scene, std::span<const TrainView> views, const TrainConfig& cfg,
                  std::span<const TrainView> holdout, const TrainHooks& hooks) {
    cfg.validate();
    if (views.empty()) throw ConfigError("training needs at least one target view");
    if (scene.mode != cfg.mode) throw ConfigError("scene mode does not match the configuration");
    const int dim = scene.dim();
    const Aabb limits = scene.bbox.expanded(0.1);
    const RenderOptions ropts = render_options(cfg);

    TrainResult result;
    OptimizerState state(scene.size(),
                         VelocityField::covering(scene.bbox, dim, cfg.grid_cells_per_axis, cfg.lambda_g));
    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    result.metrics.reserve(static_cast<std::size_t>(cfg.iterations));

    for (int it = 0; it < cfg.iterations; ++it) {
        const auto t0 = std::chrono::steady_clock::now();
        const TrainView& tv = views[static_cast<std::size_t>(it) % views.size()];
        const ForwardState fs = render_forward(scene, tv.view, ropts);
        const PhotometricLoss photo = photometric_l2(fs.image, tv.target);
        const std::vector<std::size_t> visible = fs.visible_indices();
        const auto sl = scale_loss(scene, visible, cfg.beta);
        const auto cl = confidence_loss(scene, visible);
        const LossReport report = combine_losses(photo.value, sl.value, cl.value, cfg.omega_s, cfg.omega_t);
        if (!std::isfinite(report.total)) throw DivergenceError(it, report.total);

        GradientSet grads = backward_image(scene, fs, photo.residual);
        const std::size_t n = scene.size();
        for (std::size_t i = 0; i < n; ++i) {
            grads.d_log_scale[i] += cfg.omega_s * sl.grad[i];
            grads.d_opacity[i] += cfg.omega_t * cl.grad[i];
        }
        for (const std::size_t i : visible) {
            state.grad_accum[i] += grads.mu_norm[i];
            ++state.grad_count[i];
        }

        std::vector<double> scales(n);
        for (std::size_t i = 0; i < n; ++i) scales[i] = max_scale(scene.gaussians[i], dim);

        const AttributeUpdates up = base_step(grads, state, cfg, position_lr(cfg, it));
        std::vector<Vec3> applied;
        if (cfg.use_field) {
            applied = pdeo_position_step(scene, state.field, up.d_mu, cfg.lambda_p);
        } else {
            applied = up.d_mu;
            for (std::size_t i = 0; i < n; ++i) scene.gaussians[i].mu += applied[i];
        }
        for (std::size_t i = 0; i < n; ++i) {
            RawGaussian& g = scene.gaussians[i];
            g.color += up.d_color[i];
            g.opacity_logit += up.d_opacity[i];
            g.log_scale += up.d_log_scale[i];
            g.angle += up.d_angle[i];
            clamp_position(g, limits, dim);
        }
        state.last_applied = applied;
        state.last_raw = up.d_mu;

        Metrics m;
        m.iteration = it;
        m.loss_total = report.total;
        m.photometric = report.photometric;
        m.scale_term = report.scale_term;
        m.confidence_term = report.confidence_term;
        m.psnr = psnr(fs.image, tv.target);
        m.ssim = ssim(fs.image, tv.target);
        m.step_median = quartile_step_medians(scales, applied);

        if (it >= cfg.densify_start && it < cfg.densify_stop && (it - cfg.densify_start) % cfg.densify_interval == 0) {
            densify_and_prune(scene, state, cfg, rng, limits);
        }
        m.gaussian_count = scene.size();
        if (!holdout.empty()) m.psnr_holdout = mean_psnr(scene, holdout, ropts, nullptr);
        if (hooks.after_iteration) hooks.after_iteration(it, scene);
        if (!cfg.deterministic) {
            m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        }
        result.metrics.push_back(m);
    }

    result.final_psnr = mean_psnr(scene, views, ropts, &result.final_ssim);
    if (!holdout.empty()) result.final_holdout_psnr = mean_psnr(scene, holdout, ropts, nullptr);
    result.scene = std::move(scene);
    result.state = std::move(state);
    return result;
}

}  // namespace pdeo
