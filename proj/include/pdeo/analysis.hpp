#pragma once

#include "pdeo/field.hpp"
#include "pdeo/optimizer.hpp"
#include "pdeo/splat.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace pdeo {

/// Number of meaningful components of an attribute in a mode (0 when the
/// attribute is not learnable there, e.g. rotation in ortho3d).
int attribute_components(Attribute attr, Mode mode);

/// Reads one component of an attribute from a gradient set.
double gradient_component(const GradientSet& grads, std::size_t gaussian, Attribute attr, int component);

/// Mutable reference to one raw attribute component of a Gaussian.
double& attribute_ref(RawGaussian& g, Attribute attr, int component);

/// Photometric L2 loss of a full forward render.
double render_loss(const Scene& scene, const View& view, const Image& target, const RenderOptions& options = {});

/// Central difference (L(x + eps) - L(x - eps)) / (2 eps) of render_loss.
double finite_diff_grad(const Scene& scene, const View& view, const Image& target, std::size_t gaussian,
                        Attribute attr, int component, double eps, const RenderOptions& options = {});

/// Direct evaluation of the neighbour-averaged viscous increment
///   du_i + (1 - lambda) (mean_{j in N_i} du_j - du_i)
/// with N_i the particles sharing i's voxel in `grid` (including i).
std::vector<Vec3> viscous_reference_update(std::span<const Vec3> positions, std::span<const Vec3> updates,
                                           double lambda, const VelocityField& grid);

struct ScalingRow {
    double scale = 0.0;
    double grad_mu = 0.0;
    double grad_color = 0.0;
    double grad_opacity = 0.0;
    double grad_scale = 0.0;
    /// scale * |dL/dmu| / |dL/ds|
    double ratio = 0.0;
    std::size_t footprint_pixels = 0;
};

struct ScalingReport {
    std::vector<ScalingRow> rows;
    double slope = 0.0;
    double slope_ci_low = 0.0;
    double slope_ci_high = 0.0;
    std::vector<std::string> warnings;
};

/// Single-Gaussian image2d probe. The Gaussian is fitted against a copy of
/// itself shifted by half its scale; gradients of the summed squared error are
/// accumulated over the pixels inside the 0.99 confidence region and divided
/// by the summed splat weight there.
struct ScalingProbeConfig {
    RawGaussian gaussian;
    double base_scale = 0.006;          // world units, multiplied per probe point
    Vec3 anisotropy = Vec3(1.0, 0.7, 0.0);
    double pixel_scale = 1.0 / 256.0;
    Vec3 shift_direction = Vec3(1.0, 0.5, 0.0);
    double shift_fraction = 0.5;
    double confidence = 0.99;
};

ScalingProbeConfig default_scaling_probe();

ScalingReport gradient_scaling_probe(const ScalingProbeConfig& probe, std::span<const double> multipliers);

/// `count` multipliers spaced geometrically over [lo, hi].
std::vector<double> geometric_sweep(double lo, double hi, int count);

/// Max voxel velocity norm after each of `steps` zero-gradient field updates;
/// entry 0 is the starting norm.
std::vector<double> energy_decay_probe(VelocityField field, int steps);

/// Worst relative error between two gradient sources, per attribute.
struct AttributeError {
    Attribute attribute = Attribute::position;
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

struct GradcheckFailure {
    int config = 0;
    std::size_t gaussian = 0;
    Attribute attribute = Attribute::position;
    int component = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradcheckReport {
    Mode mode = Mode::image2d;
    int configs = 0;
    int rejected = 0;
    std::vector<AttributeError> per_attribute;
    std::vector<GradcheckFailure> failures;
    bool passed() const { return failures.empty(); }
};

struct GradcheckOptions {
    int configs = 200;
    std::uint64_t seed = 1;
    double eps = 1e-5;
    double tolerance = 1e-4;
    /// Applied to the analytic gradients before comparison (fault injection in tests).
    std::function<void(GradientSet&)> mutate;
};

/// |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

/// Seeded random scenes checked attribute by attribute against finite differences.
/// Configurations with a sample within a small band of the cull footprint,
/// the alpha clamp, or a depth tie are redrawn since the loss is not
/// differentiable there.
GradcheckReport run_gradient_check(Mode mode, const GradcheckOptions& options);

struct QuadratureReport {
    int cases = 0;
    double max_rel_error = 0.0;
    double axis_aligned_error = 0.0;  // |closed form - sqrt(2 pi) s_1| at zero offset
};

/// Random rotated Gaussians and cameras: closed form vs trapezoid quadrature.
QuadratureReport run_quadrature_check(int cases, std::uint64_t seed, int n_samples = 20001);

/// Random particle sets: viscous P2G/G2P step at the field fixed point vs the
/// direct neighbour-averaged update. Returns the largest absolute difference per set.
std::vector<double> run_fixed_point_check(int sets, std::uint64_t seed, double lambda_g, double lambda_p);

}  // namespace pdeo
