#pragma once

#include "pdeo/splat.hpp"

#include <cmath>
#include <numbers>

namespace pdeo::detail {

/// Per-Gaussian quantities shared by the forward and backward passes.
struct Prepared {
    Mat3 rot = Mat3::Identity();
    Vec3 inv_var = Vec3::Zero();  // 1 / s_j^2
    double opacity = 0.0;
    Vec3 color = Vec3::Zero();
    double max_scale = 0.0;
    // ortho3d only
    Vec3 dir = Vec3::Zero();  // view direction in the local frame
    double a = 0.0;
    double norm = 1.0;  // sqrt(pi / A)
};

inline Prepared prepare(const RawGaussian& g, Mode mode, const Vec3& world_dir) {
    const int dim = dims_of(mode);
    const Vec3 scale = activate_scale(g.log_scale, dim);
    if (scale.head(dim).minCoeff() < kMinScale) throw SingularityError("degenerate Gaussian scale");
    Prepared p;
    p.rot = rotation_of(g, mode);
    for (int a = 0; a < dim; ++a) p.inv_var[a] = 1.0 / (scale[a] * scale[a]);
    p.opacity = activate_opacity(g.opacity_logit);
    p.color = g.color;
    p.max_scale = scale.head(dim).maxCoeff();
    if (mode == Mode::ortho3d) {
        p.dir = p.rot.transpose() * world_dir;
        p.a = 0.5 * (p.dir.array().square() * p.inv_var.array()).sum();
        if (!(p.a > 0.0)) throw SingularityError("line-integral coefficient A is not positive");
        p.norm = std::sqrt(std::numbers::pi / p.a);
    }
    return p;
}

/// Offset of the sample point (image2d) or ray origin (ortho3d) in the local frame.
inline Vec3 local_offset(const Prepared& p, const RawGaussian& g, const Vec3& point) {
    return p.rot.transpose() * (point - g.mu);
}

/// Exponent of the splat weight: -1/2 x^T W x in image2d, -C + B^2/(4A) in ortho3d.
inline double splat_exponent(const Prepared& p, Mode mode, const Vec3& x) {
    if (mode == Mode::image2d) {
        return -0.5 * (x[0] * x[0] * p.inv_var[0] + x[1] * x[1] * p.inv_var[1]);
    }
    const double c = 0.5 * (x.array().square() * p.inv_var.array()).sum();
    const double b = (p.dir.array() * x.array() * p.inv_var.array()).sum();
    return -c + b * b / (4.0 * p.a);
}

inline double splat_from_exponent(const Prepared& p, Mode mode, double exponent) {
    return mode == Mode::image2d ? std::exp(exponent) : std::exp(exponent) * p.norm;
}

struct SplatGrad {
    Vec3 d_mu = Vec3::Zero();
    Vec3 d_log_scale = Vec3::Zero();
    double d_angle = 0.0;
};

/// Derivatives of the splat weight with respect to world position, log-scale
/// and (image2d) rotation angle.
inline SplatGrad splat_grad(const Prepared& p, Mode mode, const Vec3& x, double splat) {
    SplatGrad out;
    Vec3 y = x;
    Vec3 d_log_norm = Vec3::Zero();
    if (mode == Mode::ortho3d) {
        // closest approach along the ray: y = x - (B / 2A) r
        const double b = (p.dir.array() * x.array() * p.inv_var.array()).sum();
        y = x - (b / (2.0 * p.a)) * p.dir;
        for (int j = 0; j < 3; ++j) d_log_norm[j] = 0.5 * p.dir[j] * p.dir[j] * p.inv_var[j] / p.a;
    }
    const int dim = dims_of(mode);
    Vec3 wy = Vec3::Zero();
    for (int j = 0; j < dim; ++j) {
        wy[j] = p.inv_var[j] * y[j];
        out.d_log_scale[j] = splat * (wy[j] * y[j] + d_log_norm[j]);
    }
    // df/dx = -W y and dx/dmu = -R^T
    out.d_mu = splat * (p.rot * wy);
    if (mode == Mode::image2d) {
        out.d_angle = -splat * x[0] * x[1] * (p.inv_var[0] - p.inv_var[1]);
    }
    return out;
}

}  // namespace pdeo::detail
