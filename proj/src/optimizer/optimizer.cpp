#include "pdeo/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace pdeo {

const char* to_string(Attribute attr) {
    switch (attr) {
        case Attribute::position: return "mu";
        case Attribute::color: return "c";
        case Attribute::opacity: return "o";
        case Attribute::scale: return "s";
        case Attribute::rotation: return "rot";
    }
    return "?";
}

PoisonedStepError::PoisonedStepError(std::size_t g, Attribute a)
    : DomainError("non-finite gradient for Gaussian " + std::to_string(g) + " attribute " + to_string(a)),
      gaussian(g),
      attribute(a) {}

DivergenceError::DivergenceError(int it, double loss)
    : std::runtime_error("loss became non-finite at iteration " + std::to_string(it) + " (" + std::to_string(loss) +
                         ")"),
      iteration(it) {}

OptimizerState::OptimizerState(std::size_t n, VelocityField f)
    : first_moment(n, ParamBlock{}),
      second_moment(n, ParamBlock{}),
      grad_accum(n, 0.0),
      grad_count(n, 0),
      last_applied(n, Vec3::Zero()),
      last_raw(n, Vec3::Zero()),
      field(std::move(f)) {}

namespace {

template <typename T>
void remap_vector(std::vector<T>& v, std::span<const std::size_t> kept, std::size_t children, const T& zero) {
    std::vector<T> out;
    out.reserve(kept.size() + children);
    for (const std::size_t i : kept) out.push_back(v[i]);
    out.insert(out.end(), children, zero);
    v = std::move(out);
}

}  // namespace

void OptimizerState::remap(std::span<const std::size_t> kept, std::size_t children) {
    remap_vector(first_moment, kept, children, ParamBlock{});
    remap_vector(second_moment, kept, children, ParamBlock{});
    remap_vector(grad_accum, kept, children, 0.0);
    remap_vector(grad_count, kept, children, std::uint32_t{0});
    remap_vector(last_applied, kept, children, Vec3(Vec3::Zero()));
    remap_vector(last_raw, kept, children, Vec3(Vec3::Zero()));
}

namespace {

void check_finite(const GradientSet& grads) {
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!grads.d_mu[i].allFinite()) throw PoisonedStepError(i, Attribute::position);
        if (!grads.d_color[i].allFinite()) throw PoisonedStepError(i, Attribute::color);
        if (!std::isfinite(grads.d_opacity[i])) throw PoisonedStepError(i, Attribute::opacity);
        if (!grads.d_log_scale[i].allFinite()) throw PoisonedStepError(i, Attribute::scale);
        if (!std::isfinite(grads.d_angle[i])) throw PoisonedStepError(i, Attribute::rotation);
    }
}

}  // namespace

AttributeUpdates base_step(const GradientSet& grads, OptimizerState& state, const TrainConfig& cfg,
                           double lr_position) {
    check_finite(grads);
    const std::size_t n = grads.size();
    if (state.size() != n) throw UsageError("base_step: optimizer state and gradients differ in size");
    AttributeUpdates up;
    up.d_mu.assign(n, Vec3::Zero());
    up.d_color.assign(n, Vec3::Zero());
    up.d_opacity.assign(n, 0.0);
    up.d_log_scale.assign(n, Vec3::Zero());
    up.d_angle.assign(n, 0.0);

    std::array<double, kParamsPerGaussian> lr{};
    for (int k = 0; k < 3; ++k) {
        lr[k] = lr_position;
        lr[3 + k] = cfg.lr_color;
        lr[7 + k] = cfg.lr_scale;
    }
    lr[6] = cfg.lr_opacity;
    lr[10] = cfg.lr_rotation;

    ++state.step;
    const bool adam = cfg.base_optimizer == BaseOptimizer::adaptive_moment;
    const double t = static_cast<double>(state.step);
    const double bias1 = 1.0 - std::pow(cfg.adam_beta1, t);
    const double bias2 = 1.0 - std::pow(cfg.adam_beta2, t);

    for (std::size_t i = 0; i < n; ++i) {
        ParamBlock g{};
        for (int k = 0; k < 3; ++k) {
            g[k] = grads.d_mu[i][k];
            g[3 + k] = grads.d_color[i][k];
            g[7 + k] = grads.d_log_scale[i][k];
        }
        g[6] = grads.d_opacity[i];
        g[10] = grads.d_angle[i];
        ParamBlock d{};
        if (!adam) {
            for (std::size_t k = 0; k < kParamsPerGaussian; ++k) d[k] = -lr[k] * g[k];
        } else {
            auto& m = state.first_moment[i];
            auto& v = state.second_moment[i];
            for (std::size_t k = 0; k < kParamsPerGaussian; ++k) {
                m[k] = cfg.adam_beta1 * m[k] + (1.0 - cfg.adam_beta1) * g[k];
                v[k] = cfg.adam_beta2 * v[k] + (1.0 - cfg.adam_beta2) * g[k] * g[k];
                const double m_hat = m[k] / bias1;
                const double v_hat = v[k] / bias2;
                d[k] = -lr[k] * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
            }
        }
        up.d_mu[i] = Vec3(d[0], d[1], d[2]);
        up.d_color[i] = Vec3(d[3], d[4], d[5]);
        up.d_opacity[i] = d[6];
        up.d_log_scale[i] = Vec3(d[7], d[8], d[9]);
        up.d_angle[i] = d[10];
    }
    return up;
}

std::vector<Vec3> pdeo_position_step(Scene& scene, VelocityField& field, std::span<const Vec3> raw_updates,
                                     double lambda_p) {
    const std::size_t n = scene.size();
    if (raw_updates.size() != n) throw UsageError("pdeo_position_step: update count does not match the scene");
    std::vector<Vec3> positions(n);
    for (std::size_t i = 0; i < n; ++i) positions[i] = scene.gaussians[i].mu;
    field = p2g_update(field, positions, raw_updates);
    std::vector<Vec3> applied(n);
    for (std::size_t i = 0; i < n; ++i) {
        applied[i] = g2p_blend(raw_updates[i], field.velocity_at(positions[i]), lambda_p);
        scene.gaussians[i].mu += applied[i];
    }
    return applied;
}

const char* to_string(DensifyAction action) {
    switch (action) {
        case DensifyAction::none: return "none";
        case DensifyAction::clone: return "clone";
        case DensifyAction::split: return "split";
    }
    return "?";
}

std::optional<double> angle_between_deg(const Vec3& a, const Vec3& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na <= 1e-12 || nb <= 1e-12) return std::nullopt;
    const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
    return std::acos(c) * 180.0 / std::numbers::pi;
}

DensifyAction densify_decide(const Vec3& particle_velocity, const Vec3& voxel_velocity, double grad_stat,
                             double scale_max, double median_scale, const TrainConfig& cfg) {
    bool candidate = grad_stat > cfg.grad_threshold;
    if (!candidate && cfg.use_cosine_criterion) {
        if (const auto angle = angle_between_deg(particle_velocity, voxel_velocity)) {
            candidate = cfg.cosine_mode == CosineMode::disagree ? *angle > cfg.theta_p_deg : *angle < cfg.theta_p_deg;
        }
    }
    if (!candidate) return DensifyAction::none;
    return scale_max < median_scale ? DensifyAction::clone : DensifyAction::split;
}

namespace {

double jittered_key(double key, Rng& rng) { return key + 1e-6 * rng.uniform(-1.0, 1.0); }

}  // namespace

std::pair<RawGaussian, RawGaussian> clone(const RawGaussian& g, const Vec3& offset, Rng& rng) {
    RawGaussian child = g;
    child.mu += offset;
    child.depth_key = jittered_key(g.depth_key, rng);
    return {g, child};
}

std::pair<RawGaussian, RawGaussian> split(const RawGaussian& g, Mode mode, Rng& rng) {
    const int dim = dims_of(mode);
    const Vec3 scale = activate_scale(g.log_scale, dim);
    const Mat3 rot = rotation_of(g, mode);
    const double shrink = std::log(kSplitScaleDivisor);
    auto make_child = [&]() {
        RawGaussian c = g;
        Vec3 z = Vec3::Zero();
        for (int a = 0; a < dim; ++a) z[a] = rng.normal() * scale[a];
        c.mu = g.mu + rot * z;
        for (int a = 0; a < dim; ++a) c.log_scale[a] = g.log_scale[a] - shrink;
        c.depth_key = jittered_key(g.depth_key, rng);
        return c;
    };
    RawGaussian first = make_child();
    RawGaussian second = make_child();
    return {first, second};
}

std::vector<std::size_t> prune(Scene& scene, const TrainConfig& cfg) {
    const int dim = scene.dim();
    const double limit = scene.extent();
    std::vector<std::size_t> kept;
    std::vector<RawGaussian> survivors;
    kept.reserve(scene.size());
    survivors.reserve(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const RawGaussian& g = scene.gaussians[i];
        if (activate_opacity(g.opacity_logit) < cfg.prune_opacity) continue;
        if (max_scale(g, dim) > limit) continue;
        kept.push_back(i);
        survivors.push_back(g);
    }
    scene.gaussians = std::move(survivors);
    return kept;
}

RenderOptions render_options(const TrainConfig& cfg) {
    RenderOptions opts;
    opts.background = cfg.white_background ? Vec3::Ones() : Vec3::Zero();
    return opts;
}

double position_lr(const TrainConfig& cfg, int iteration) {
    if (cfg.iterations <= 1 || cfg.lr_position_final == cfg.lr_position) return cfg.lr_position;
    const double t = std::clamp(static_cast<double>(iteration) / (cfg.iterations - 1), 0.0, 1.0);
    return std::exp((1.0 - t) * std::log(cfg.lr_position) + t * std::log(cfg.lr_position_final));
}

}  // namespace pdeo
