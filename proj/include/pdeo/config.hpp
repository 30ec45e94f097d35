#pragma once

#include "pdeo/core.hpp"

#include <cstddef>
#include <cstdint>

namespace pdeo {

enum class BaseOptimizer { plain_sgd, adaptive_moment };

/// Direction of the particle/voxel velocity cosine test used by densification.
/// `disagree` densifies when the angle exceeds theta_p; `agree` when it is
/// below theta_p.
enum class CosineMode { disagree, agree };

const char* to_string(BaseOptimizer opt);
const char* to_string(CosineMode mode);
BaseOptimizer base_optimizer_from_string(const std::string& text);
CosineMode cosine_mode_from_string(const std::string& text);

/// Every hyperparameter of a training run. Defaults for the viscosity and
/// particle-constraint terms are lambda_g = lambda_p = 0.8, theta_p = 120 deg,
/// beta = 0.6, omega_s = omega_t = 0.04.
struct TrainConfig {
    // scene construction
    Mode mode = Mode::image2d;
    Aabb bbox;
    std::size_t initial_count = 256;
    std::size_t max_gaussians = 4096;

    // velocity field
    bool use_field = true;
    double lambda_g = 0.8;
    double lambda_p = 0.8;
    int grid_cells_per_axis = 64;

    // particle constraints
    double beta = 0.6;
    double omega_s = 0.04;
    double omega_t = 0.04;

    // base optimizer
    BaseOptimizer base_optimizer = BaseOptimizer::adaptive_moment;
    double lr_position = 2e-3;
    double lr_position_final = 2e-3;
    double lr_color = 2.5e-2;
    double lr_opacity = 5e-2;
    double lr_scale = 5e-3;
    double lr_rotation = 1e-2;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-15;

    // schedule
    int iterations = 2000;
    int densify_interval = 100;
    int densify_start = 200;
    int densify_stop = 1500;
    double grad_threshold = 2e-4;
    double prune_opacity = 0.005;
    double theta_p_deg = 120.0;
    CosineMode cosine_mode = CosineMode::disagree;
    bool use_cosine_criterion = true;
    bool cosine_uses_blended = true;

    // rendering
    bool white_background = false;
    /// Rendering is always single-threaded and reproducible; this flag also
    /// zeroes wall-clock timings so metric files compare byte for byte.
    bool deterministic = false;

    std::uint64_t seed = 0;

    /// Throws ConfigError naming the first violated constraint.
    void validate() const;
};

/// Seeded random scene inside cfg.bbox: uniform positions, isotropic scale of
/// half the mean nearest-neighbour distance, opacity 0.1, uniform colors.
/// Identical (cfg, seed) yields a bit-identical scene.
Scene init_scene(const TrainConfig& cfg, std::uint64_t seed);

}  // namespace pdeo
