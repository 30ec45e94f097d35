#pragma once

#include "pdeo/core.hpp"
#include "pdeo/splat.hpp"

#include <span>
#include <vector>

namespace pdeo {

struct LossReport {
    double photometric = 0.0;
    double scale_term = 0.0;
    double confidence_term = 0.0;
    double total = 0.0;
    double omega_s = 0.0;
    double omega_t = 0.0;
};

/// photometric + omega_s * scale_term + omega_t * confidence_term.
LossReport combine_losses(double photometric, double scale_term, double confidence_term, double omega_s,
                          double omega_t);

struct PhotometricLoss {
    double value = 0.0;
    Image residual;  // dL/dC per pixel
};

/// Mean squared error over pixels and channels, with residual 2 (C - C_gt) / (#pixels * 3).
PhotometricLoss photometric_l2(const Image& rendered, const Image& target);

/// Loss value plus per-Gaussian gradient, indexed like the scene.
template <typename Grad>
struct ConstraintLoss {
    double value = 0.0;
    std::vector<Grad> grad;
};

/// Mean over the visible set of max(s* - beta, 0), s* the largest activated scale.
/// The subgradient reaches only the arg-max log-scale component.
ConstraintLoss<Vec3> scale_loss(const Scene& scene, std::span<const std::size_t> visible, double beta);

/// Mean over the visible set of (o - floor(1.99 o))^2 on activated opacity o,
/// with the floor held constant when differentiating (gradient w.r.t. logit).
ConstraintLoss<double> confidence_loss(const Scene& scene, std::span<const std::size_t> visible);

/// Single-Gaussian confidence term (o - floor(1.99 o))^2.
double confidence_term(double opacity);

}  // namespace pdeo
