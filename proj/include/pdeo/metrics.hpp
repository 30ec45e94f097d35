#pragma once

#include "pdeo/splat.hpp"

#include <array>
#include <cstddef>
#include <optional>

namespace pdeo {

/// PSNR reported for identical images.
inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over all channels, with both images clamped to [0, 1].
double psnr(const Image& a, const Image& b);

/// Mean SSIM over channels using an 11x11 Gaussian window (sigma 1.5),
/// k1 = 0.01, k2 = 0.03, dynamic range 1, valid-region filtering.
double ssim(const Image& a, const Image& b);

/// One row of a training run's metric series.
struct Metrics {
    int iteration = 0;
    double loss_total = 0.0;
    double photometric = 0.0;
    double scale_term = 0.0;
    double confidence_term = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
    std::size_t gaussian_count = 0;
    /// Median per-step |applied position update| per scale quartile, smallest first.
    std::array<double, 4> step_median{};
    double wall_ms = 0.0;
    std::optional<double> psnr_holdout;
};

}  // namespace pdeo
