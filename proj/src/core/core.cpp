#include "pdeo/core.hpp"

#include <cmath>
#include <cstring>
#include <string>

namespace pdeo {

const char* to_string(Mode mode) { return mode == Mode::image2d ? "image2d" : "ortho3d"; }

Mode mode_from_string(const std::string& text) {
    if (text == "image2d" || text == "2d") return Mode::image2d;
    if (text == "ortho3d" || text == "3d") return Mode::ortho3d;
    throw ConfigError("unknown mode '" + text + "'");
}

Aabb Aabb::expanded(double fraction) const {
    const Vec3 margin = fraction * extent();
    return {lo - margin, hi + margin};
}

bool Aabb::contains(const Vec3& p, int dim) const {
    for (int a = 0; a < dim; ++a) {
        if (p[a] < lo[a] || p[a] > hi[a]) return false;
    }
    return true;
}

double Scene::diagonal() const { return bbox.extent().head(dim()).norm(); }

double Scene::extent() const { return bbox.extent().head(dim()).maxCoeff(); }

Vec3 CameraOrtho::ray_origin(int row, int col) const {
    const double du = (col + 0.5 - 0.5 * width) * pixel_scale;
    const double dv = (row + 0.5 - 0.5 * height) * pixel_scale;
    return center + du * basis_u + dv * basis_v;
}

CameraOrtho make_camera(const Vec3& view_dir, const Vec3& up, const Vec3& center, int width, int height,
                        double pixel_scale) {
    if (width <= 0 || height <= 0 || !(pixel_scale > 0.0)) {
        throw ConfigError("camera needs positive size and pixel scale");
    }
    CameraOrtho cam;
    cam.view_dir = view_dir.normalized();
    Vec3 u = up.cross(cam.view_dir);
    if (u.norm() < 1e-9) u = Vec3::UnitX().cross(cam.view_dir);
    cam.basis_u = u.normalized();
    cam.basis_v = cam.view_dir.cross(cam.basis_u).normalized();
    cam.center = center;
    cam.width = width;
    cam.height = height;
    cam.pixel_scale = pixel_scale;
    return cam;
}

void validate_camera(const CameraOrtho& cam) {
    constexpr double tol = 1e-12;
    const Vec3* axes[] = {&cam.view_dir, &cam.basis_u, &cam.basis_v};
    for (int a = 0; a < 3; ++a) {
        if (std::abs(axes[a]->squaredNorm() - 1.0) > tol) throw DomainError("camera axis is not unit length");
        for (int b = a + 1; b < 3; ++b) {
            if (std::abs(axes[a]->dot(*axes[b])) > tol) throw DomainError("camera axes are not orthogonal");
        }
    }
}

double activate_opacity(double logit) {
    if (!std::isfinite(logit)) throw DomainError("opacity logit is not finite");
    // Two branches keep exp() from overflowing for large |logit|.
    if (logit >= 0.0) return 1.0 / (1.0 + std::exp(-logit));
    const double e = std::exp(logit);
    return e / (1.0 + e);
}

double opacity_logit(double opacity) {
    if (!(opacity > 0.0 && opacity < 1.0)) throw DomainError("opacity must lie in (0, 1)");
    return std::log(opacity) - std::log1p(-opacity);
}

Vec3 activate_scale(const Vec3& log_scale, int dim) {
    Vec3 out = Vec3::Zero();
    for (int a = 0; a < dim; ++a) {
        const double s = log_scale[a];
        if (!std::isfinite(s)) throw DomainError("log-scale component is not finite");
        const double v = std::exp(s);
        if (!std::isfinite(v)) throw OverflowError("activated scale overflows");
        out[a] = v;
    }
    return out;
}

double max_scale(const RawGaussian& g, int dim) { return activate_scale(g.log_scale, dim).head(dim).maxCoeff(); }

Mat3 rotation_2d(double angle) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    Mat3 r = Mat3::Identity();
    r(0, 0) = c;
    r(0, 1) = -s;
    r(1, 0) = s;
    r(1, 1) = c;
    return r;
}

Mat3 rotation_of(const RawGaussian& g, Mode mode) {
    return mode == Mode::image2d ? rotation_2d(g.angle) : g.rot;
}

double eval_gaussian(const RawGaussian& g, Mode mode, const Vec3& x) {
    const int dim = dims_of(mode);
    const Vec3 scale = activate_scale(g.log_scale, dim);
    if (scale.head(dim).minCoeff() < kMinScale) throw SingularityError("degenerate Gaussian scale");
    const Vec3 local = rotation_of(g, mode).transpose() * (x - g.mu);
    double q = 0.0;
    for (int a = 0; a < dim; ++a) {
        const double z = local[a] / scale[a];
        q += z * z;
    }
    return std::exp(-0.5 * q);
}

namespace {

struct Fnv1a {
    std::uint64_t h = 1469598103934665603ull;
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    }
    void real(double v) { bytes(&v, sizeof v); }
    void vec(const Vec3& v) {
        for (int a = 0; a < 3; ++a) real(v[a]);
    }
};

}  // namespace

std::uint64_t checksum(const Scene& scene) {
    Fnv1a f;
    const int mode = static_cast<int>(scene.mode);
    f.bytes(&mode, sizeof mode);
    f.vec(scene.bbox.lo);
    f.vec(scene.bbox.hi);
    for (const auto& g : scene.gaussians) {
        f.vec(g.mu);
        f.vec(g.color);
        f.real(g.opacity_logit);
        f.vec(g.log_scale);
        f.real(g.angle);
        for (int i = 0; i < 9; ++i) f.real(g.rot.data()[i]);
        f.real(g.depth_key);
    }
    return f.h;
}

}  // namespace pdeo
