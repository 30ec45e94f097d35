#pragma once

// Seeded generators shared by the property tests.

#include "pdeo/core.hpp"
#include "pdeo/rng.hpp"
#include "pdeo/splat.hpp"

#include <Eigen/Geometry>

#include <cstdint>
#include <cstring>

namespace testgen {

using pdeo::Mat3;
using pdeo::Vec3;

inline Mat3 rotation(pdeo::Rng& rng) {
    Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    return q.toRotationMatrix();
}

inline Vec3 unit(pdeo::Rng& rng) {
    Vec3 v(rng.normal(), rng.normal(), rng.normal());
    while (v.norm() < 1e-6) v = Vec3(rng.normal(), rng.normal(), rng.normal());
    return v.normalized();
}

inline Vec3 uniform3(pdeo::Rng& rng, double lo, double hi) {
    return Vec3(rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi));
}

inline pdeo::RawGaussian gaussian(pdeo::Rng& rng, pdeo::Mode mode, double s_lo = 0.05, double s_hi = 0.2) {
    pdeo::RawGaussian g;
    const int dim = pdeo::dims_of(mode);
    for (int a = 0; a < dim; ++a) {
        g.mu[a] = rng.uniform(0.25, 0.75);
        g.log_scale[a] = std::log(rng.uniform(s_lo, s_hi));
    }
    g.color = uniform3(rng, 0.0, 1.0);
    g.opacity_logit = pdeo::opacity_logit(rng.uniform(0.2, 0.9));
    if (mode == pdeo::Mode::image2d) {
        g.angle = rng.uniform(0.0, 3.14159);
    } else {
        g.rot = rotation(rng);
    }
    g.depth_key = rng.uniform();
    return g;
}

inline pdeo::Scene scene(pdeo::Rng& rng, pdeo::Mode mode, std::size_t n) {
    pdeo::Scene s;
    s.mode = mode;
    for (std::size_t i = 0; i < n; ++i) s.gaussians.push_back(gaussian(rng, mode));
    return s;
}

inline pdeo::Image image(pdeo::Rng& rng, int w, int h) {
    pdeo::Image img(w, h);
    for (auto& p : img.pixels) p = uniform3(rng, 0.0, 1.0);
    return img;
}

/// FNV-1a over the raw bytes of every pixel.
inline std::uint64_t image_checksum(const pdeo::Image& img) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& p : img.pixels) {
        for (int k = 0; k < 3; ++k) {
            unsigned char bytes[sizeof(double)];
            const double v = p[k];
            std::memcpy(bytes, &v, sizeof v);
            for (const unsigned char b : bytes) {
                h ^= b;
                h *= 1099511628211ull;
            }
        }
    }
    return h;
}

}  // namespace testgen
