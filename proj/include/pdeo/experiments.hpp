#pragma once

#include "pdeo/io.hpp"
#include "pdeo/optimizer.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pdeo {

/// Seeded band-limited noise (a few low-frequency cosines per channel) with
/// anti-aliased discs and rotated rectangles on top, covering the unit square.
Image synthetic_target_2d(int width, int height, std::uint64_t seed);

/// Seeded ground-truth Gaussian cloud inside the central part of the unit cube.
Scene synthetic_cloud_3d(std::size_t count, std::uint64_t seed);

/// Orthographic cameras looking at the unit cube's center from `count`
/// directions spread in azimuth with alternating elevation. `phase` shifts the
/// azimuths by that fraction of the spacing (holdout views use 0.5).
std::vector<CameraOrtho> orbit_cameras(int count, double phase, double elevation, int width, int height);

/// Initial scene, training views and holdout views for one run.
struct FitSetup {
    Scene scene;
    std::vector<TrainView> views;
    std::vector<TrainView> holdout;
};

FitSetup prepare_fit(const ExperimentConfig& cfg);

/// Trains per `cfg`. When `out_dir` is set, writes metrics.csv, target.ppm,
/// final.ppm, progress renders, config.resolved, checkpoint.txt and field.txt.
TrainResult run_fit(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& out_dir);

struct AblationVariant {
    std::string name;
    std::function<void(TrainConfig&)> apply;
};

/// full, no_p2g_g2p, no_densify_criterion, no_scale_loss, no_confidence_loss.
const std::vector<AblationVariant>& ablation_variants();

struct AblationRow {
    std::string variant;
    std::uint64_t seed = 0;
    double psnr = 0.0;
    double ssim = 0.0;
    std::size_t gaussian_count = 0;
    std::optional<double> psnr_holdout;
};

/// Every variant on seeds base, base + 1, ..., base + cfg.ablate_seeds - 1.
std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg);

/// Options shared by all subcommands.
struct CommandContext {
    std::optional<std::filesystem::path> config;
    std::filesystem::path out = "run";
    std::optional<std::uint64_t> seed;
    bool deterministic = false;
    std::ostream* log = nullptr;
    std::ostream* err = nullptr;
};

/// Exit codes: 0 success, 1 check failed, 2 bad config or usage, 3 training diverged.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDiverged = 3;

int cmd_fit(Mode mode, const CommandContext& ctx);

struct GradcheckCommand {
    int configs = 200;
    int quadrature_cases = 500;
    /// Negates one attribute's analytic gradient before comparison.
    std::optional<Attribute> flip_sign;
};
int cmd_gradcheck(const CommandContext& ctx, const GradcheckCommand& opts);

int cmd_probe(const std::string& kind, const CommandContext& ctx);
int cmd_ablate(const CommandContext& ctx);

std::optional<Attribute> attribute_from_string(const std::string& text);

}  // namespace pdeo
