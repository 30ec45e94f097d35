#pragma once

#include "pdeo/config.hpp"
#include "pdeo/metrics.hpp"
#include "pdeo/splat.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace pdeo {

/// Everything a CLI run reads from its config file: the training
/// hyperparameters plus the experiment setup around them.
struct ExperimentConfig {
    TrainConfig train;
    int width = 0;   // 0 selects the mode default (64 in image2d, 32 in ortho3d)
    int height = 0;
    int views = 4;
    int holdout_views = 1;
    std::string target = "synthetic";  // or a path to a P6 PPM (image2d only)
    std::size_t target_count = 48;     // Gaussians in the synthetic 3D ground truth
    int render_interval = 500;         // iterations between progress renders, 0 disables
    int ablate_seeds = 5;

    int resolved_width() const;
    int resolved_height() const;
};

/// Parses flat `key = value` lines; `#` starts a comment. Unknown keys,
/// malformed values and duplicate keys raise ConfigError with the line number.
ExperimentConfig parse_config(std::istream& in, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

/// Every key with its value, one per line, in a fixed order. Parsing the
/// output yields the same configuration.
void write_config(std::ostream& out, const ExperimentConfig& cfg);

/// Binary P6, maxval 255, channel values clamped to [0, 1] and rounded to nearest.
void write_ppm(std::ostream& out, const Image& image);
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(std::istream& in);
Image read_ppm(const std::filesystem::path& path);

/// 9 significant digits, '.' decimal separator, independent of locale.
std::string format_real(double value);

/// Comma-separated rows ending in '\n'.
class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}
    CsvWriter& header(std::initializer_list<const char*> names);
    CsvWriter& cell(double value);
    CsvWriter& cell(long long value);
    CsvWriter& cell(std::size_t value) { return cell(static_cast<long long>(value)); }
    CsvWriter& cell(int value) { return cell(static_cast<long long>(value)); }
    CsvWriter& cell(const std::string& text);
    CsvWriter& empty();
    void end_row();

private:
    void separate();
    std::ostream& out_;
    bool first_ = true;
};

/// metrics.csv: fixed column order, `psnr_holdout` appended when requested.
void write_metrics_csv(std::ostream& out, const std::vector<Metrics>& metrics, bool with_holdout);

}  // namespace pdeo
