#include "pdeo/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace pdeo {

int ExperimentConfig::resolved_width() const {
    if (width > 0) return width;
    return train.mode == Mode::image2d ? 64 : 32;
}

int ExperimentConfig::resolved_height() const {
    if (height > 0) return height;
    return train.mode == Mode::image2d ? 64 : 32;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_real(const std::string& v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
        throw ConfigError("expected a real number, got '" + v + "'");
    }
    return out;
}

long long parse_int(const std::string& v) {
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("expected an integer, got '" + v + "'");
    return out;
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("expected true or false, got '" + v + "'");
}

std::size_t parse_count(const std::string& v) {
    const long long n = parse_int(v);
    if (n < 0) throw ConfigError("expected a non-negative count, got '" + v + "'");
    return static_cast<std::size_t>(n);
}

int parse_small_int(const std::string& v) {
    const long long n = parse_int(v);
    if (n < -1000000000LL || n > 1000000000LL) throw ConfigError("integer out of range: '" + v + "'");
    return static_cast<int>(n);
}

struct Key {
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

// Shortest of 9 or 17 significant digits that reads back to the same double.
std::string show(double v) {
    std::string s = format_real(v);
    if (std::strtod(s.c_str(), nullptr) == v) return s;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
std::string show(bool v) { return v ? "true" : "false"; }
template <typename I>
std::string show_int(I v) {
    return std::to_string(v);
}

#define PDEO_REAL(name, field)                                                           \
    {name, Key{[](ExperimentConfig& c, const std::string& v) { c.field = parse_real(v); }, \
               [](const ExperimentConfig& c) { return show(c.field); }}}
#define PDEO_INT(name, field)                                                                   \
    {name, Key{[](ExperimentConfig& c, const std::string& v) { c.field = parse_small_int(v); }, \
               [](const ExperimentConfig& c) { return show_int(c.field); }}}
#define PDEO_COUNT(name, field)                                                             \
    {name, Key{[](ExperimentConfig& c, const std::string& v) { c.field = parse_count(v); }, \
               [](const ExperimentConfig& c) { return show_int(c.field); }}}
#define PDEO_BOOL(name, field)                                                             \
    {name, Key{[](ExperimentConfig& c, const std::string& v) { c.field = parse_bool(v); }, \
               [](const ExperimentConfig& c) { return show(c.field); }}}

// Ordered so that config.resolved lists keys in this sequence.
const std::vector<std::pair<std::string, Key>>& keys() {
    static const std::vector<std::pair<std::string, Key>> table = {
        {"mode", Key{[](ExperimentConfig& c, const std::string& v) { c.train.mode = mode_from_string(v); },
                     [](const ExperimentConfig& c) { return std::string(to_string(c.train.mode)); }}},
        {"seed", Key{[](ExperimentConfig& c, const std::string& v) {
                         const long long s = parse_int(v);
                         if (s < 0) throw ConfigError("seed must be non-negative");
                         c.train.seed = static_cast<std::uint64_t>(s);
                     },
                     [](const ExperimentConfig& c) { return show_int(c.train.seed); }}},
        PDEO_BOOL("deterministic", train.deterministic),
        PDEO_INT("iterations", train.iterations),
        PDEO_COUNT("initial_count", train.initial_count),
        PDEO_COUNT("max_gaussians", train.max_gaussians),
        PDEO_BOOL("use_field", train.use_field),
        PDEO_REAL("lambda_g", train.lambda_g),
        PDEO_REAL("lambda_p", train.lambda_p),
        PDEO_INT("grid_cells_per_axis", train.grid_cells_per_axis),
        PDEO_REAL("beta", train.beta),
        PDEO_REAL("omega_s", train.omega_s),
        PDEO_REAL("omega_t", train.omega_t),
        {"base_optimizer",
         Key{[](ExperimentConfig& c, const std::string& v) { c.train.base_optimizer = base_optimizer_from_string(v); },
             [](const ExperimentConfig& c) { return std::string(to_string(c.train.base_optimizer)); }}},
        PDEO_REAL("lr_position", train.lr_position),
        PDEO_REAL("lr_position_final", train.lr_position_final),
        PDEO_REAL("lr_color", train.lr_color),
        PDEO_REAL("lr_opacity", train.lr_opacity),
        PDEO_REAL("lr_scale", train.lr_scale),
        PDEO_REAL("lr_rotation", train.lr_rotation),
        PDEO_REAL("adam_beta1", train.adam_beta1),
        PDEO_REAL("adam_beta2", train.adam_beta2),
        PDEO_REAL("adam_eps", train.adam_eps),
        PDEO_INT("densify_interval", train.densify_interval),
        PDEO_INT("densify_start", train.densify_start),
        PDEO_INT("densify_stop", train.densify_stop),
        PDEO_REAL("grad_threshold", train.grad_threshold),
        PDEO_REAL("prune_opacity", train.prune_opacity),
        PDEO_REAL("theta_p", train.theta_p_deg),
        {"densify_cosine_mode",
         Key{[](ExperimentConfig& c, const std::string& v) { c.train.cosine_mode = cosine_mode_from_string(v); },
             [](const ExperimentConfig& c) { return std::string(to_string(c.train.cosine_mode)); }}},
        PDEO_BOOL("use_cosine_criterion", train.use_cosine_criterion),
        PDEO_BOOL("cosine_uses_blended", train.cosine_uses_blended),
        PDEO_BOOL("white_background", train.white_background),
        PDEO_INT("width", width),
        PDEO_INT("height", height),
        PDEO_INT("views", views),
        PDEO_INT("holdout_views", holdout_views),
        {"target", Key{[](ExperimentConfig& c, const std::string& v) {
                           if (v.empty()) throw ConfigError("target must not be empty");
                           c.target = v;
                       },
                       [](const ExperimentConfig& c) { return c.target; }}},
        PDEO_COUNT("target_count", target_count),
        PDEO_INT("render_interval", render_interval),
        PDEO_INT("ablate_seeds", ablate_seeds),
    };
    return table;
}

#undef PDEO_REAL
#undef PDEO_INT
#undef PDEO_COUNT
#undef PDEO_BOOL

const Key* find_key(const std::string& name) {
    for (const auto& [k, key] : keys()) {
        if (k == name) return &key;
    }
    return nullptr;
}

}  // namespace

ExperimentConfig parse_config(std::istream& in, ExperimentConfig cfg) {
    std::string line;
    int number = 0;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto fail = [&](const std::string& what) {
            throw ConfigError("line " + std::to_string(number) + ": " + what);
        };
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("expected 'key = value'");
        const std::string name = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const Key* key = find_key(name);
        if (!key) fail("unknown key '" + name + "'");
        if (!seen.insert(name).second) fail("duplicate key '" + name + "'");
        if (value.empty()) fail("missing value for '" + name + "'");
        try {
            key->set(cfg, value);
        } catch (const ConfigError& e) {
            fail(name + ": " + e.what());
        }
    }
    if (cfg.views < 1) throw ConfigError("views must be at least 1");
    if (cfg.holdout_views < 0) throw ConfigError("holdout_views must be non-negative");
    if (cfg.width < 0 || cfg.height < 0) throw ConfigError("width and height must be non-negative");
    if (cfg.render_interval < 0) throw ConfigError("render_interval must be non-negative");
    if (cfg.ablate_seeds < 1) throw ConfigError("ablate_seeds must be at least 1");
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    return parse_config(in, std::move(base));
}

void write_config(std::ostream& out, const ExperimentConfig& cfg) {
    for (const auto& [name, key] : keys()) out << name << " = " << key.get(cfg) << '\n';
}

void write_ppm(std::ostream& out, const Image& image) {
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    std::vector<unsigned char> bytes;
    bytes.reserve(image.size() * 3);
    for (const Vec3& p : image.pixels) {
        for (int k = 0; k < 3; ++k) {
            const double v = std::isfinite(p[k]) ? std::clamp(p[k], 0.0, 1.0) : 0.0;
            bytes.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
        }
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("cannot write '" + path.string() + "'");
    write_ppm(out, image);
}

namespace {

int read_header_int(std::istream& in) {
    // skip whitespace and comment lines
    for (;;) {
        const int c = in.peek();
        if (c == '#') {
            std::string skip;
            std::getline(in, skip);
        } else if (c == ' ' || c == '\n' || c == '\r' || c == '\t') {
            in.get();
        } else {
            break;
        }
    }
    int v = 0;
    if (!(in >> v)) throw ConfigError("ppm: malformed header");
    return v;
}

}  // namespace

Image read_ppm(std::istream& in) {
    std::string magic;
    if (!(in >> magic) || magic != "P6") throw ConfigError("ppm: expected a binary P6 file");
    const int w = read_header_int(in);
    const int h = read_header_int(in);
    const int maxval = read_header_int(in);
    if (w <= 0 || h <= 0 || maxval != 255) throw ConfigError("ppm: unsupported size or maxval");
    in.get();
    std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * 3);
    if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
        throw ConfigError("ppm: truncated pixel data");
    }
    Image img(w, h);
    for (std::size_t i = 0; i < img.size(); ++i) {
        img.pixels[i] = Vec3(bytes[3 * i], bytes[3 * i + 1], bytes[3 * i + 2]) / 255.0;
    }
    return img;
}

Image read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open image '" + path.string() + "'");
    return read_ppm(in);
}

std::string format_real(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", value);
    // snprintf honours LC_NUMERIC; the CLI never changes it, but be safe
    for (char* p = buf; *p; ++p) {
        if (*p == ',') *p = '.';
    }
    return buf;
}

void CsvWriter::separate() {
    if (!first_) out_ << ',';
    first_ = false;
}

CsvWriter& CsvWriter::header(std::initializer_list<const char*> names) {
    for (const char* n : names) {
        separate();
        out_ << n;
    }
    end_row();
    return *this;
}

CsvWriter& CsvWriter::cell(double value) {
    separate();
    out_ << format_real(value);
    return *this;
}

CsvWriter& CsvWriter::cell(long long value) {
    separate();
    out_ << value;
    return *this;
}

CsvWriter& CsvWriter::cell(const std::string& text) {
    separate();
    out_ << text;
    return *this;
}

CsvWriter& CsvWriter::empty() {
    separate();
    return *this;
}

void CsvWriter::end_row() {
    out_ << '\n';
    first_ = true;
}

void write_metrics_csv(std::ostream& out, const std::vector<Metrics>& metrics, bool with_holdout) {
    CsvWriter csv(out);
    out << "iteration,loss_total,photometric,scale_term,confidence_term,psnr,ssim,gaussian_count,"
           "step_median_q1,step_median_q2,step_median_q3,step_median_q4,wall_ms";
    if (with_holdout) out << ",psnr_holdout";
    out << '\n';
    for (const Metrics& m : metrics) {
        csv.cell(m.iteration).cell(m.loss_total).cell(m.photometric).cell(m.scale_term).cell(m.confidence_term);
        csv.cell(m.psnr).cell(m.ssim).cell(m.gaussian_count);
        for (const double q : m.step_median) csv.cell(q);
        csv.cell(m.wall_ms);
        if (with_holdout) {
            if (m.psnr_holdout) {
                csv.cell(*m.psnr_holdout);
            } else {
                csv.empty();
            }
        }
        csv.end_row();
    }
}

}  // namespace pdeo
