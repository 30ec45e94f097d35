#pragma once

#include "pdeo/config.hpp"
#include "pdeo/field.hpp"
#include "pdeo/losses.hpp"
#include "pdeo/metrics.hpp"
#include "pdeo/rng.hpp"
#include "pdeo/splat.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pdeo {

enum class Attribute { position, color, opacity, scale, rotation };
const char* to_string(Attribute attr);

/// Raised when a gradient entering the optimizer is not finite.
struct PoisonedStepError : DomainError {
    PoisonedStepError(std::size_t gaussian, Attribute attribute);
    std::size_t gaussian;
    Attribute attribute;
};

/// Raised by train() when the total loss stops being finite.
struct DivergenceError : std::runtime_error {
    DivergenceError(int iteration, double loss);
    int iteration;
};

/// Learnable scalars per Gaussian in optimizer-state order:
/// mu(3) color(3) opacity(1) log_scale(3) angle(1).
inline constexpr std::size_t kParamsPerGaussian = 11;
using ParamBlock = std::array<double, kParamsPerGaussian>;

struct OptimizerState {
    std::int64_t step = 0;
    std::vector<ParamBlock> first_moment;
    std::vector<ParamBlock> second_moment;
    // densification statistic: running sum and count of |dL/dmu| over visible steps
    std::vector<double> grad_accum;
    std::vector<std::uint32_t> grad_count;
    std::vector<Vec3> last_applied;
    std::vector<Vec3> last_raw;
    VelocityField field;

    OptimizerState() = default;
    OptimizerState(std::size_t n, VelocityField f);
    std::size_t size() const { return grad_accum.size(); }
    /// Keeps entries listed in `kept` (in that order) then appends `children` zeroed entries.
    void remap(std::span<const std::size_t> kept, std::size_t children);
    bool operator==(const OptimizerState& other) const = default;
};

/// Per-attribute raw updates (already signed to descend the loss).
struct AttributeUpdates {
    std::vector<Vec3> d_mu;
    std::vector<Vec3> d_color;
    std::vector<double> d_opacity;
    std::vector<Vec3> d_log_scale;
    std::vector<double> d_angle;
};

/// Plain SGD: -lr * grad. Adaptive moment: bias-corrected first/second moment
/// step, per scalar. `lr_position` overrides cfg.lr_position (for decay).
AttributeUpdates base_step(const GradientSet& grads, OptimizerState& state, const TrainConfig& cfg,
                           double lr_position);

/// One viscous position step: P2G with the raw updates, then each particle
/// blends its raw update with its voxel's new velocity, then moves.
/// Returns the applied updates.
std::vector<Vec3> pdeo_position_step(Scene& scene, VelocityField& field, std::span<const Vec3> raw_updates,
                                     double lambda_p);

enum class DensifyAction { none, clone, split };
const char* to_string(DensifyAction action);

/// Angle in degrees between two vectors; nullopt when either is shorter than 1e-12.
std::optional<double> angle_between_deg(const Vec3& a, const Vec3& b);

DensifyAction densify_decide(const Vec3& particle_velocity, const Vec3& voxel_velocity, double grad_stat,
                             double scale_max, double median_scale, const TrainConfig& cfg);

/// Returns {parent copy, child moved by `offset`}.
std::pair<RawGaussian, RawGaussian> clone(const RawGaussian& g, const Vec3& offset, Rng& rng);

inline constexpr double kSplitScaleDivisor = 1.6;

/// Two children sampled from the parent density, log-scale reduced by ln 1.6.
std::pair<RawGaussian, RawGaussian> split(const RawGaussian& g, Mode mode, Rng& rng);

/// Removes Gaussians with activated opacity below cfg.prune_opacity or with a
/// largest scale above the scene extent. Returns the kept original indices.
std::vector<std::size_t> prune(Scene& scene, const TrainConfig& cfg);

struct TrainView {
    View view;
    Image target;
};

struct TrainHooks {
    /// Called after every iteration with the updated scene.
    std::function<void(int iteration, const Scene&)> after_iteration;
};

struct TrainResult {
    Scene scene;
    OptimizerState state;
    std::vector<Metrics> metrics;
    double final_psnr = 0.0;
    double final_ssim = 0.0;
    std::optional<double> final_holdout_psnr;
};

/// Per-iteration position learning rate (log-linear from lr_position to lr_position_final).
double position_lr(const TrainConfig& cfg, int iteration);

/// Trains `scene` on `views`, cycling through them one per iteration.
TrainResult train(Scene scene, std::span<const TrainView> views, const TrainConfig& cfg,
                  std::span<const TrainView> holdout = {}, const TrainHooks& hooks = {});

RenderOptions render_options(const TrainConfig& cfg);

}  // namespace pdeo
