#include "pdeo/config.hpp"
#include "pdeo/rng.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <limits>
#include <string>

namespace pdeo {

const char* to_string(BaseOptimizer opt) {
    return opt == BaseOptimizer::plain_sgd ? "plain_sgd" : "adaptive_moment";
}

const char* to_string(CosineMode mode) { return mode == CosineMode::disagree ? "disagree" : "agree"; }

BaseOptimizer base_optimizer_from_string(const std::string& text) {
    if (text == "plain_sgd") return BaseOptimizer::plain_sgd;
    if (text == "adaptive_moment") return BaseOptimizer::adaptive_moment;
    throw ConfigError("unknown base_optimizer '" + text + "'");
}

CosineMode cosine_mode_from_string(const std::string& text) {
    if (text == "disagree") return CosineMode::disagree;
    if (text == "agree") return CosineMode::agree;
    throw ConfigError("unknown densify_cosine_mode '" + text + "'");
}

void TrainConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(what);
    };
    require(lambda_g >= 0.0 && lambda_g <= 1.0, "lambda_g must lie in [0, 1]");
    require(lambda_p >= 0.0 && lambda_p <= 1.0, "lambda_p must lie in [0, 1]");
    require(theta_p_deg > 0.0 && theta_p_deg < 180.0, "theta_p must lie in (0, 180) degrees");
    require(lr_position > 0 && lr_color > 0 && lr_opacity > 0 && lr_scale > 0 && lr_rotation > 0,
            "learning rates must be positive");
    require(lr_position_final > 0, "lr_position_final must be positive");
    require(iterations >= 0, "iterations must be non-negative");
    require(densify_interval > 0, "densify_interval must be positive");
    require(densify_start < densify_stop, "densify_start must be below densify_stop");
    require(densify_stop <= iterations || iterations == 0, "densify_stop must not exceed iterations");
    require(initial_count > 0, "initial_count must be positive");
    require(max_gaussians >= initial_count, "max_gaussians must be at least initial_count");
    require(grid_cells_per_axis >= 1, "grid_cells_per_axis must be at least 1");
    require(beta >= 0.0 && omega_s >= 0.0 && omega_t >= 0.0, "beta and loss weights must be non-negative");
    require(prune_opacity >= 0.0 && prune_opacity < 1.0, "prune_opacity must lie in [0, 1)");
    require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0,
            "adam betas must lie in [0, 1)");
    const int dim = dims_of(mode);
    for (int a = 0; a < dim; ++a) require(bbox.hi[a] > bbox.lo[a], "bbox must have positive extent");
}

namespace {

Mat3 random_rotation(Rng& rng) {
    Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    return q.toRotationMatrix();
}

double mean_nearest_neighbor(const std::vector<RawGaussian>& gs, int dim) {
    double sum = 0.0;
    for (std::size_t i = 0; i < gs.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < gs.size(); ++j) {
            if (i == j) continue;
            best = std::min(best, (gs[i].mu - gs[j].mu).head(dim).squaredNorm());
        }
        sum += std::sqrt(best);
    }
    return sum / static_cast<double>(gs.size());
}

}  // namespace

Scene init_scene(const TrainConfig& cfg, std::uint64_t seed) {
    if (cfg.initial_count == 0) throw ConfigError("initial_count must be positive");
    const int dim = dims_of(cfg.mode);
    Rng rng(seed);
    Scene scene;
    scene.mode = cfg.mode;
    scene.bbox = cfg.bbox;
    scene.gaussians.resize(cfg.initial_count);
    const double init_logit = opacity_logit(0.1);
    for (auto& g : scene.gaussians) {
        for (int a = 0; a < dim; ++a) g.mu[a] = rng.uniform(cfg.bbox.lo[a], cfg.bbox.hi[a]);
        for (int c = 0; c < 3; ++c) g.color[c] = rng.uniform();
        g.opacity_logit = init_logit;
        if (cfg.mode == Mode::image2d) {
            g.angle = rng.uniform(0.0, std::numbers::pi);
        } else {
            g.rot = random_rotation(rng);
        }
        g.depth_key = rng.uniform();
    }
    double scale = 0.0;
    if (scene.size() > 1) {
        scale = 0.5 * mean_nearest_neighbor(scene.gaussians, dim);
    } else {
        scale = 0.1 * scene.extent();
    }
    scale = std::max(scale, 1e-6 * scene.extent());
    for (auto& g : scene.gaussians) {
        for (int a = 0; a < dim; ++a) g.log_scale[a] = std::log(scale);
    }
    return scene;
}

}  // namespace pdeo
