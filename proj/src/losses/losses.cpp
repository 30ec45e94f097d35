#include "pdeo/losses.hpp"

#include <cmath>

namespace pdeo {

LossReport combine_losses(double photometric, double scale_term, double confidence_term, double omega_s,
                          double omega_t) {
    LossReport r;
    r.photometric = photometric;
    r.scale_term = scale_term;
    r.confidence_term = confidence_term;
    r.omega_s = omega_s;
    r.omega_t = omega_t;
    r.total = photometric + omega_s * scale_term + omega_t * confidence_term;
    return r;
}

PhotometricLoss photometric_l2(const Image& rendered, const Image& target) {
    if (rendered.width != target.width || rendered.height != target.height) {
        throw UsageError("photometric_l2: image dimensions differ");
    }
    PhotometricLoss out;
    out.residual = Image(rendered.width, rendered.height);
    const double count = 3.0 * static_cast<double>(rendered.size());
    if (count == 0.0) return out;
    double sum = 0.0;
    for (std::size_t p = 0; p < rendered.size(); ++p) {
        const Vec3 d = rendered.pixels[p] - target.pixels[p];
        sum += d.squaredNorm();
        out.residual.pixels[p] = (2.0 / count) * d;
    }
    out.value = sum / count;
    return out;
}

ConstraintLoss<Vec3> scale_loss(const Scene& scene, std::span<const std::size_t> visible, double beta) {
    ConstraintLoss<Vec3> out;
    out.grad.assign(scene.size(), Vec3::Zero());
    if (visible.empty()) return out;
    const int dim = scene.dim();
    const double inv_n = 1.0 / static_cast<double>(visible.size());
    double sum = 0.0;
    for (const std::size_t i : visible) {
        const Vec3 s = activate_scale(scene.gaussians[i].log_scale, dim);
        int arg = 0;
        for (int a = 1; a < dim; ++a) {
            if (s[a] > s[arg]) arg = a;
        }
        const double excess = s[arg] - beta;
        if (excess > 0.0) {
            sum += excess;
            // d exp(s)/ds = exp(s)
            out.grad[i][arg] += inv_n * s[arg];
        }
    }
    out.value = sum * inv_n;
    return out;
}

double confidence_term(double opacity) {
    const double d = opacity - std::floor(1.99 * opacity);
    return d * d;
}

ConstraintLoss<double> confidence_loss(const Scene& scene, std::span<const std::size_t> visible) {
    ConstraintLoss<double> out;
    out.grad.assign(scene.size(), 0.0);
    if (visible.empty()) return out;
    const double inv_n = 1.0 / static_cast<double>(visible.size());
    double sum = 0.0;
    for (const std::size_t i : visible) {
        const double o = activate_opacity(scene.gaussians[i].opacity_logit);
        const double bin = std::floor(1.99 * o);
        const double d = o - bin;
        sum += d * d;
        out.grad[i] += inv_n * 2.0 * d * o * (1.0 - o);
    }
    out.value = sum * inv_n;
    return out;
}

}  // namespace pdeo
