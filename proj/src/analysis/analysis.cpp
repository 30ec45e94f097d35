#include "pdeo/analysis.hpp"
#include "pdeo/losses.hpp"
#include "pdeo/rng.hpp"

#include <Eigen/Geometry>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace pdeo {

int attribute_components(Attribute attr, Mode mode) {
    const int dim = dims_of(mode);
    switch (attr) {
        case Attribute::position: return dim;
        case Attribute::color: return 3;
        case Attribute::opacity: return 1;
        case Attribute::scale: return dim;
        case Attribute::rotation: return mode == Mode::image2d ? 1 : 0;
    }
    return 0;
}

double gradient_component(const GradientSet& grads, std::size_t i, Attribute attr, int component) {
    switch (attr) {
        case Attribute::position: return grads.d_mu[i][component];
        case Attribute::color: return grads.d_color[i][component];
        case Attribute::opacity: return grads.d_opacity[i];
        case Attribute::scale: return grads.d_log_scale[i][component];
        case Attribute::rotation: return grads.d_angle[i];
    }
    return 0.0;
}

double& attribute_ref(RawGaussian& g, Attribute attr, int component) {
    switch (attr) {
        case Attribute::position: return g.mu[component];
        case Attribute::color: return g.color[component];
        case Attribute::opacity: return g.opacity_logit;
        case Attribute::scale: return g.log_scale[component];
        case Attribute::rotation: return g.angle;
    }
    throw UsageError("unknown attribute");
}

double render_loss(const Scene& scene, const View& view, const Image& target, const RenderOptions& options) {
    return photometric_l2(render_image(scene, view, options), target).value;
}

double finite_diff_grad(const Scene& scene, const View& view, const Image& target, std::size_t gaussian,
                        Attribute attr, int component, double eps, const RenderOptions& options) {
    if (!(eps >= 1e-7 && eps <= 1e-3)) throw UsageError("finite_diff_grad: eps must lie in [1e-7, 1e-3]");
    if (gaussian >= scene.size()) throw UsageError("finite_diff_grad: Gaussian index out of range");
    Scene probe = scene;
    double& value = attribute_ref(probe.gaussians[gaussian], attr, component);
    const double base = value;
    value = base + eps;
    const double up = render_loss(probe, view, target, options);
    value = base - eps;
    const double down = render_loss(probe, view, target, options);
    return (up - down) / (2.0 * eps);
}

std::vector<Vec3> viscous_reference_update(std::span<const Vec3> positions, std::span<const Vec3> updates,
                                           double lambda, const VelocityField& grid) {
    if (positions.size() != updates.size()) throw UsageError("viscous_reference_update: length mismatch");
    const std::size_t n = positions.size();
    std::vector<VoxelIndex> voxel(n);
    for (std::size_t i = 0; i < n; ++i) voxel[i] = grid.voxel_index(positions[i]);
    std::vector<Vec3> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        Vec3 sum = Vec3::Zero();
        std::size_t count = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (voxel[j] != voxel[i]) continue;
            sum += updates[j];
            ++count;
        }
        const Vec3 mean = sum / static_cast<double>(count);
        out[i] = updates[i] + (1.0 - lambda) * (mean - updates[i]);
    }
    return out;
}

ScalingProbeConfig default_scaling_probe() {
    ScalingProbeConfig probe;
    RawGaussian& g = probe.gaussian;
    g.mu = Vec3(0.4137, 0.5291, 0.0);
    g.color = Vec3(0.8, 0.55, 0.3);
    g.opacity_logit = opacity_logit(0.8);
    g.angle = 0.35;
    return probe;
}

std::vector<double> geometric_sweep(double lo, double hi, int count) {
    std::vector<double> out;
    if (count <= 0) return out;
    if (count == 1) return {lo};
    for (int k = 0; k < count; ++k) {
        out.push_back(lo * std::pow(hi / lo, static_cast<double>(k) / (count - 1)));
    }
    return out;
}

namespace {

struct LineFit {
    double slope = 0.0;
    double half_width = 0.0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    LineFit fit;
    if (x.size() < 2) return fit;
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    fit.slope = sxy / sxx;
    if (x.size() > 2) {
        const double intercept = my - fit.slope * mx;
        double sse = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double r = y[i] - (intercept + fit.slope * x[i]);
            sse += r * r;
        }
        const double se = std::sqrt(sse / (n - 2.0) / sxx);
        const boost::math::students_t dist(n - 2.0);
        fit.half_width = boost::math::quantile(boost::math::complement(dist, 0.025)) * se;
    }
    return fit;
}

}  // namespace

ScalingReport gradient_scaling_probe(const ScalingProbeConfig& probe, std::span<const double> multipliers) {
    ScalingReport report;
    const double ps = probe.pixel_scale;
    // level set of a 2D Gaussian enclosing `confidence` of its mass, relative to the peak
    const double eps_level = 1.0 - probe.confidence;
    const double radius_sigma = std::sqrt(-2.0 * std::log(eps_level));
    const Vec3 dir = probe.shift_direction.normalized();
    std::vector<double> log_s, log_g;
    for (const double m : multipliers) {
        const double s = probe.base_scale * m;
        Scene scene;
        scene.mode = Mode::image2d;
        RawGaussian g = probe.gaussian;
        for (int a = 0; a < 2; ++a) g.log_scale[a] = std::log(s * probe.anisotropy[a]);
        g.log_scale[2] = 0.0;
        const double s_min = s * std::min(probe.anisotropy[0], probe.anisotropy[1]);
        const double s_max = s * std::max(probe.anisotropy[0], probe.anisotropy[1]);
        if (2.0 * radius_sigma * s_min < 2.0 * ps) {
            report.warnings.push_back("scale " + std::to_string(s) + ": footprint under 2x2 pixels, skipped");
            continue;
        }
        scene.gaussians = {g};
        Scene target_scene = scene;
        target_scene.gaussians[0].mu += probe.shift_fraction * s * dir;

        // pixel lattice anchored at world multiples of the pixel size
        const double reach = 4.5 * s_max + probe.shift_fraction * s;
        ImageGrid grid;
        grid.pixel_scale = ps;
        grid.origin = Vec3(std::floor((g.mu[0] - reach) / ps) * ps, std::floor((g.mu[1] - reach) / ps) * ps, 0.0);
        grid.width = static_cast<int>(std::ceil(2.0 * reach / ps)) + 2;
        grid.height = grid.width;
        scene.bbox = Aabb{grid.origin, grid.origin + Vec3(grid.width * ps, grid.height * ps, 1.0)};
        target_scene.bbox = scene.bbox;

        const Image target = render_image(target_scene, grid);
        const ForwardState fs = render_forward(scene, grid);
        Image residual(grid.width, grid.height);
        double weight = 0.0;
        std::size_t footprint = 0;
        for (std::size_t px = 0; px < fs.image.size(); ++px) {
            for (const BlendEntry& e : fs.pixel_entries(px)) {
                if (e.splat < eps_level) continue;
                residual.pixels[px] = 2.0 * (fs.image.pixels[px] - target.pixels[px]);
                weight += e.splat;
                ++footprint;
            }
        }
        const GradientSet grads = backward_image(scene, fs, residual);
        ScalingRow row;
        row.scale = s;
        row.footprint_pixels = footprint;
        row.grad_mu = grads.d_mu[0].norm() / weight;
        row.grad_color = grads.d_color[0].norm() / weight;
        row.grad_opacity = std::abs(grads.d_opacity[0]) / weight;
        row.grad_scale = grads.d_log_scale[0].norm() / weight;
        row.ratio = s * row.grad_mu / row.grad_scale;
        report.rows.push_back(row);
        log_s.push_back(std::log(s));
        log_g.push_back(std::log(row.grad_mu));
    }
    const LineFit fit = fit_line(log_s, log_g);
    report.slope = fit.slope;
    report.slope_ci_low = fit.slope - fit.half_width;
    report.slope_ci_high = fit.slope + fit.half_width;
    return report;
}

std::vector<double> energy_decay_probe(VelocityField field, int steps) {
    std::vector<double> series;
    series.reserve(static_cast<std::size_t>(std::max(steps, 0)) + 1);
    series.push_back(field.max_norm());
    for (int k = 0; k < steps; ++k) {
        field = p2g_update(field, {}, {});
        series.push_back(field.max_norm());
    }
    return series;
}

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

namespace {

Mat3 random_rotation(Rng& rng) {
    Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    return q.toRotationMatrix();
}

Vec3 random_unit(Rng& rng) {
    Vec3 v(rng.normal(), rng.normal(), rng.normal());
    while (v.norm() < 1e-6) v = Vec3(rng.normal(), rng.normal(), rng.normal());
    return v.normalized();
}

struct CheckCase {
    Scene scene;
    View view;
    Image target;
    RenderOptions options;
};

CheckCase draw_case(Mode mode, Rng& rng) {
    CheckCase c;
    c.scene.mode = mode;
    const int dim = dims_of(mode);
    const std::size_t n = 3 + rng.below(3);
    constexpr int size = 12;
    if (mode == Mode::image2d) {
        c.view = make_grid(c.scene.bbox, size, size);
    } else {
        c.view = make_camera(random_unit(rng), random_unit(rng), Vec3::Constant(0.5), size, size, 1.2 / size);
    }
    const double lo = mode == Mode::image2d ? 0.2 : 0.3;
    const double hi = mode == Mode::image2d ? 0.8 : 0.7;
    for (std::size_t i = 0; i < n; ++i) {
        RawGaussian g;
        for (int a = 0; a < dim; ++a) {
            g.mu[a] = rng.uniform(lo, hi);
            g.log_scale[a] = std::log(rng.uniform(0.08, 0.25));
        }
        for (int k = 0; k < 3; ++k) g.color[k] = rng.uniform();
        g.opacity_logit = opacity_logit(rng.uniform(0.2, 0.9));
        if (mode == Mode::image2d) {
            g.angle = rng.uniform(0.0, std::numbers::pi);
        } else {
            g.rot = random_rotation(rng);
        }
        g.depth_key = rng.uniform();
        c.scene.gaussians.push_back(g);
    }
    c.target = Image(size, size);
    for (auto& p : c.target.pixels) p = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    c.options.background = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    return c;
}

/// True when a small perturbation could cross a non-differentiable point.
bool near_kink(const CheckCase& c) {
    const int w = view_width(c.view);
    const int h = view_height(c.view);
    const double cull = -0.5 * c.options.cull_sigma * c.options.cull_sigma;
    std::vector<double> depths;
    for (const auto& g : c.scene.gaussians) {
        const double o = activate_opacity(g.opacity_logit);
        for (int r = 0; r < h; ++r) {
            for (int col = 0; col < w; ++col) {
                const double e = splat_exponent_at(g, c.scene.mode, c.view, r, col);
                if (std::abs(e - cull) < 0.02) return true;
                double splat = std::exp(e);
                if (c.scene.mode == Mode::ortho3d) {
                    const Vec3 local = g.rot.transpose() * std::get<CameraOrtho>(c.view).view_dir;
                    splat *= std::sqrt(std::numbers::pi / splat_coeffs(g, local).a);
                }
                if (o * splat > kAlphaClamp - 1e-3) return true;
            }
        }
        depths.push_back(blend_depth(g, c.scene.mode, c.view));
    }
    std::sort(depths.begin(), depths.end());
    for (std::size_t i = 1; i < depths.size(); ++i) {
        if (depths[i] - depths[i - 1] < 1e-3) return true;
    }
    return false;
}

}  // namespace

GradcheckReport run_gradient_check(Mode mode, const GradcheckOptions& options) {
    GradcheckReport report;
    report.mode = mode;
    const Attribute attrs[] = {Attribute::position, Attribute::color, Attribute::opacity, Attribute::scale,
                               Attribute::rotation};
    std::map<Attribute, AttributeError> worst;
    for (const Attribute a : attrs) {
        if (attribute_components(a, mode) > 0) worst[a] = AttributeError{a, 0.0, 0};
    }
    Rng rng(options.seed);
    for (int cfg = 0; cfg < options.configs; ++cfg) {
        CheckCase c = draw_case(mode, rng);
        while (near_kink(c)) {
            ++report.rejected;
            c = draw_case(mode, rng);
        }
        const ForwardState fs = render_forward(c.scene, c.view, c.options);
        const PhotometricLoss photo = photometric_l2(fs.image, c.target);
        GradientSet grads = backward_image(c.scene, fs, photo.residual);
        if (options.mutate) options.mutate(grads);
        for (std::size_t i = 0; i < c.scene.size(); ++i) {
            for (auto& [attr, err] : worst) {
                for (int k = 0; k < attribute_components(attr, mode); ++k) {
                    const double analytic = gradient_component(grads, i, attr, k);
                    const double numeric =
                        finite_diff_grad(c.scene, c.view, c.target, i, attr, k, options.eps, c.options);
                    const double rel = relative_error(analytic, numeric);
                    err.max_rel_error = std::max(err.max_rel_error, rel);
                    ++err.checked;
                    if (!(rel < options.tolerance)) {
                        report.failures.push_back({cfg, i, attr, k, analytic, numeric, rel});
                    }
                }
            }
        }
        ++report.configs;
    }
    for (const auto& [attr, err] : worst) report.per_attribute.push_back(err);
    return report;
}

QuadratureReport run_quadrature_check(int cases, std::uint64_t seed, int n_samples) {
    QuadratureReport report;
    Rng rng(seed);
    for (int k = 0; k < cases; ++k) {
        RawGaussian g;
        for (int a = 0; a < 3; ++a) {
            g.mu[a] = rng.uniform(0.3, 0.7);
            g.log_scale[a] = std::log(rng.uniform(0.05, 0.3));
        }
        g.rot = random_rotation(rng);
        const CameraOrtho cam =
            make_camera(random_unit(rng), random_unit(rng), Vec3::Constant(0.5), 16, 16, 1.2 / 16);
        int row = 0, col = 0;
        for (int tries = 0; tries < 1000; ++tries) {
            row = static_cast<int>(rng.below(16));
            col = static_cast<int>(rng.below(16));
            if (splat_exponent_at(g, Mode::ortho3d, cam, row, col) > -8.0) break;
        }
        const double closed = splat_closed_form(g, cam, row, col);
        const double quad = splat_quadrature(g, cam, row, col, n_samples);
        report.max_rel_error = std::max(report.max_rel_error, std::abs(closed - quad) / std::abs(quad));
        ++report.cases;
    }
    RawGaussian axis;
    axis.mu = Vec3(0.3, 0.6, 0.45);
    axis.log_scale = Vec3(std::log(0.17), std::log(0.09), std::log(0.23));
    const CameraOrtho cam = make_camera(Vec3::UnitX(), Vec3::UnitZ(), axis.mu, 1, 1, 0.01);
    report.axis_aligned_error =
        std::abs(splat_closed_form(axis, cam, 0, 0) - std::sqrt(2.0 * std::numbers::pi) * 0.17);
    return report;
}

std::vector<double> run_fixed_point_check(int sets, std::uint64_t seed, double lambda_g, double lambda_p) {
    std::vector<double> diffs;
    Rng rng(seed);
    Aabb box;
    for (int s = 0; s < sets; ++s) {
        const std::size_t n = 20 + rng.below(41);
        Scene scene;
        scene.mode = Mode::ortho3d;
        std::vector<Vec3> pos(n), upd(n);
        for (std::size_t i = 0; i < n; ++i) {
            pos[i] = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
            upd[i] = Vec3(rng.normal(), rng.normal(), rng.normal());
            RawGaussian g;
            g.mu = pos[i];
            scene.gaussians.push_back(g);
        }
        VelocityField field = VelocityField::covering(box, 3, 3, lambda_g);
        for (int it = 0; it < 100000; ++it) {
            VelocityField next = p2g_update(field, pos, upd);
            double change = 0.0;
            for (std::size_t v = 0; v < next.voxel_count(); ++v) {
                change = std::max(change, (next.velocities()[v] - field.velocities()[v]).norm());
            }
            field = std::move(next);
            if (change < 1e-13) break;
        }
        const std::vector<Vec3> applied = pdeo_position_step(scene, field, upd, lambda_p);
        const std::vector<Vec3> reference = viscous_reference_update(pos, upd, lambda_p, field);
        double worst = 0.0;
        for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, (applied[i] - reference[i]).cwiseAbs().maxCoeff());
        diffs.push_back(worst);
    }
    return diffs;
}

}  // namespace pdeo
