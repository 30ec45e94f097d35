#include "pdeo/experiments.hpp"
#include "pdeo/analysis.hpp"
#include "pdeo/checkpoint.hpp"
#include "pdeo/rng.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>

namespace pdeo {

namespace {

constexpr double kPi = std::numbers::pi;

// Target streams are decorrelated from the init and densification streams.
constexpr std::uint64_t kTargetStream = 0x5bd1e9955bd1e995ull;

double smoothstep_edge(double signed_distance, double width) {
    return std::clamp(0.5 - signed_distance / width, 0.0, 1.0);
}

}  // namespace

Image synthetic_target_2d(int width, int height, std::uint64_t seed) {
    if (width <= 0 || height <= 0) throw ConfigError("target size must be positive");
    Rng rng(seed ^ kTargetStream);

    struct Wave {
        double fx, fy, phase, amp;
    };
    std::array<std::vector<Wave>, 3> waves;
    for (auto& channel : waves) {
        double total = 0.0;
        for (int k = 0; k < 6; ++k) {
            Wave w;
            w.fx = static_cast<double>(static_cast<int>(rng.below(7)) - 3);
            w.fy = static_cast<double>(static_cast<int>(rng.below(7)) - 3);
            w.phase = rng.uniform(0.0, 2.0 * kPi);
            w.amp = 1.0 / (1.0 + std::hypot(w.fx, w.fy));
            total += w.amp;
            channel.push_back(w);
        }
        for (auto& w : channel) w.amp *= 0.3 / total;
    }
    Vec3 base(rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7));

    struct Disc {
        Vec3 center;
        double radius;
        Vec3 color;
    };
    struct Rect {
        Vec3 center;
        double half_w, half_h, angle;
        Vec3 color;
    };
    std::vector<Disc> discs(4);
    for (auto& d : discs) {
        d.center = Vec3(rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85), 0.0);
        d.radius = rng.uniform(0.05, 0.16);
        d.color = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    }
    std::vector<Rect> rects(3);
    for (auto& r : rects) {
        r.center = Vec3(rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), 0.0);
        r.half_w = rng.uniform(0.04, 0.15);
        r.half_h = rng.uniform(0.02, 0.08);
        r.angle = rng.uniform(0.0, kPi);
        r.color = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    }

    Image img(width, height);
    const double edge = 1.0 / std::max(width, height);
    for (int row = 0; row < height; ++row) {
        for (int col = 0; col < width; ++col) {
            const double x = (col + 0.5) / width;
            const double y = (row + 0.5) / height;
            Vec3 c = base;
            for (int ch = 0; ch < 3; ++ch) {
                for (const Wave& w : waves[ch]) c[ch] += w.amp * std::cos(2.0 * kPi * (w.fx * x + w.fy * y) + w.phase);
            }
            const Vec3 p(x, y, 0.0);
            for (const Disc& d : discs) {
                const double cover = smoothstep_edge((p - d.center).norm() - d.radius, edge);
                c = (1.0 - cover) * c + cover * d.color;
            }
            for (const Rect& r : rects) {
                const Vec3 q = p - r.center;
                const double u = std::abs(std::cos(r.angle) * q[0] + std::sin(r.angle) * q[1]) - r.half_w;
                const double v = std::abs(-std::sin(r.angle) * q[0] + std::cos(r.angle) * q[1]) - r.half_h;
                const double cover = smoothstep_edge(std::max(u, v), edge);
                c = (1.0 - cover) * c + cover * r.color;
            }
            img.at(row, col) = c.cwiseMax(0.0).cwiseMin(1.0);
        }
    }
    return img;
}

Scene synthetic_cloud_3d(std::size_t count, std::uint64_t seed) {
    Rng rng(seed ^ kTargetStream);
    Scene scene;
    scene.mode = Mode::ortho3d;
    for (std::size_t i = 0; i < count; ++i) {
        RawGaussian g;
        for (int a = 0; a < 3; ++a) {
            g.mu[a] = rng.uniform(0.2, 0.8);
            g.log_scale[a] = std::log(rng.uniform(0.03, 0.1));
        }
        g.color = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
        g.opacity_logit = opacity_logit(rng.uniform(0.5, 0.95));
        Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        q.normalize();
        g.rot = q.toRotationMatrix();
        g.depth_key = rng.uniform();
        scene.gaussians.push_back(g);
    }
    return scene;
}

std::vector<CameraOrtho> orbit_cameras(int count, double phase, double elevation, int width, int height) {
    std::vector<CameraOrtho> cams;
    const Vec3 center = Vec3::Constant(0.5);
    const double ps = 1.2 / std::max(width, height);
    for (int k = 0; k < count; ++k) {
        const double az = 2.0 * kPi * (k + phase) / std::max(count, 1);
        const double el = (k % 2 == 0 ? 1.0 : -1.0) * elevation;
        const Vec3 eye(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
        cams.push_back(make_camera(-eye, Vec3::UnitZ(), center, width, height, ps));
    }
    return cams;
}

FitSetup prepare_fit(const ExperimentConfig& cfg) {
    cfg.train.validate();
    FitSetup setup;
    const int w = cfg.resolved_width();
    const int h = cfg.resolved_height();
    const RenderOptions ropts = render_options(cfg.train);
    if (cfg.train.mode == Mode::image2d) {
        Image target =
            cfg.target == "synthetic" ? synthetic_target_2d(w, h, cfg.train.seed) : read_ppm(cfg.target);
        setup.scene = init_scene(cfg.train, cfg.train.seed);
        const ImageGrid grid = make_grid(setup.scene.bbox, target.width, target.height);
        setup.views.push_back({grid, std::move(target)});
        return setup;
    }
    if (cfg.target != "synthetic") throw ConfigError("ortho3d runs only support the synthetic target");
    if (cfg.views < 1) throw ConfigError("views must be at least 1");
    const Scene truth = synthetic_cloud_3d(cfg.target_count, cfg.train.seed);
    for (const auto& cam : orbit_cameras(cfg.views, 0.0, 0.35, w, h)) {
        setup.views.push_back({cam, render_image(truth, cam, ropts)});
    }
    for (const auto& cam : orbit_cameras(cfg.holdout_views, 0.5, 0.15, w, h)) {
        setup.holdout.push_back({cam, render_image(truth, cam, ropts)});
    }
    setup.scene = init_scene(cfg.train, cfg.train.seed);
    return setup;
}

TrainResult run_fit(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& out_dir) {
    const FitSetup setup = prepare_fit(cfg);
    const RenderOptions ropts = render_options(cfg.train);
    TrainHooks hooks;
    if (out_dir) {
        std::filesystem::create_directories(*out_dir);
        std::ofstream resolved(*out_dir / "config.resolved");
        write_config(resolved, cfg);
        write_ppm(*out_dir / "target.ppm", setup.views.front().target);
        if (cfg.render_interval > 0) {
            const View first = setup.views.front().view;
            const auto dir = *out_dir;
            const int interval = cfg.render_interval;
            hooks.after_iteration = [first, dir, interval, ropts](int it, const Scene& scene) {
                if ((it + 1) % interval != 0) return;
                char name[32];
                std::snprintf(name, sizeof name, "render_%06d.ppm", it + 1);
                write_ppm(dir / name, render_image(scene, first, ropts));
            };
        }
    }
    TrainResult result = train(setup.scene, setup.views, cfg.train, setup.holdout, hooks);
    if (out_dir) {
        std::ofstream metrics(*out_dir / "metrics.csv", std::ios::binary);
        write_metrics_csv(metrics, result.metrics, !setup.holdout.empty());
        write_ppm(*out_dir / "final.ppm", render_image(result.scene, setup.views.front().view, ropts));
        if (!setup.holdout.empty()) {
            write_ppm(*out_dir / "holdout.ppm", render_image(result.scene, setup.holdout.front().view, ropts));
        }
        std::ofstream cp(*out_dir / "checkpoint.txt", std::ios::binary);
        save_checkpoint(cp, result.scene, result.state);
        std::ofstream field(*out_dir / "field.txt", std::ios::binary);
        write_field_snapshot(field, result.state.field);
    }
    return result;
}

const std::vector<AblationVariant>& ablation_variants() {
    static const std::vector<AblationVariant> variants = {
        {"full", [](TrainConfig&) {}},
        {"no_p2g_g2p", [](TrainConfig& c) { c.use_field = false; }},
        {"no_densify_criterion", [](TrainConfig& c) { c.use_cosine_criterion = false; }},
        {"no_scale_loss", [](TrainConfig& c) { c.omega_s = 0.0; }},
        {"no_confidence_loss", [](TrainConfig& c) { c.omega_t = 0.0; }},
    };
    return variants;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg) {
    std::vector<AblationRow> rows;
    for (const AblationVariant& variant : ablation_variants()) {
        for (int k = 0; k < cfg.ablate_seeds; ++k) {
            ExperimentConfig run = cfg;
            run.train.seed = cfg.train.seed + static_cast<std::uint64_t>(k);
            variant.apply(run.train);
            const TrainResult r = run_fit(run, std::nullopt);
            rows.push_back({variant.name, run.train.seed, r.final_psnr, r.final_ssim, r.scene.size(),
                            r.final_holdout_psnr});
        }
    }
    return rows;
}

std::optional<Attribute> attribute_from_string(const std::string& text) {
    for (const Attribute a :
         {Attribute::position, Attribute::color, Attribute::opacity, Attribute::scale, Attribute::rotation}) {
        if (text == to_string(a)) return a;
    }
    return std::nullopt;
}

namespace {

std::ostream& log_of(const CommandContext& ctx) { return ctx.log ? *ctx.log : std::cout; }
std::ostream& err_of(const CommandContext& ctx) { return ctx.err ? *ctx.err : std::cerr; }

ExperimentConfig resolve_config(const CommandContext& ctx, ExperimentConfig base) {
    ExperimentConfig cfg = ctx.config ? load_config(*ctx.config, std::move(base)) : std::move(base);
    if (ctx.seed) cfg.train.seed = *ctx.seed;
    if (ctx.deterministic) cfg.train.deterministic = true;
    return cfg;
}

/// Runs `body`, mapping library exceptions onto exit codes.
template <typename F>
int guarded(const CommandContext& ctx, F&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err_of(ctx) << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const UsageError& e) {
        err_of(ctx) << "usage error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DivergenceError& e) {
        err_of(ctx) << "diverged: " << e.what() << '\n';
        return kExitDiverged;
    } catch (const DomainError& e) {
        err_of(ctx) << "numerical error: " << e.what() << '\n';
        return kExitDiverged;
    }
}

std::ofstream open_csv(const std::filesystem::path& dir, const std::string& name) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw UsageError("cannot write '" + (dir / name).string() + "'");
    return out;
}

}  // namespace

int cmd_fit(Mode mode, const CommandContext& ctx) {
    return guarded(ctx, [&] {
        ExperimentConfig base;
        base.train.mode = mode;
        ExperimentConfig cfg = resolve_config(ctx, base);
        if (cfg.train.mode != mode) {
            throw ConfigError(std::string("mode = ") + to_string(cfg.train.mode) + " does not match fit" +
                              (mode == Mode::image2d ? "2d" : "3d"));
        }
        const TrainResult r = run_fit(cfg, ctx.out);
        char line[160];
        std::snprintf(line, sizeof line, "final psnr %.4f ssim %.4f gaussians %zu", r.final_psnr, r.final_ssim,
                      r.scene.size());
        log_of(ctx) << line;
        if (r.final_holdout_psnr) {
            std::snprintf(line, sizeof line, " holdout psnr %.4f", *r.final_holdout_psnr);
            log_of(ctx) << line;
        }
        log_of(ctx) << '\n';
        return kExitOk;
    });
}

int cmd_gradcheck(const CommandContext& ctx, const GradcheckCommand& opts) {
    return guarded(ctx, [&] {
        GradcheckOptions go;
        go.configs = opts.configs;
        if (ctx.seed) go.seed = *ctx.seed;
        if (opts.flip_sign) {
            const Attribute attr = *opts.flip_sign;
            go.mutate = [attr](GradientSet& g) {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    switch (attr) {
                        case Attribute::position: g.d_mu[i] = -g.d_mu[i]; break;
                        case Attribute::color: g.d_color[i] = -g.d_color[i]; break;
                        case Attribute::opacity: g.d_opacity[i] = -g.d_opacity[i]; break;
                        case Attribute::scale: g.d_log_scale[i] = -g.d_log_scale[i]; break;
                        case Attribute::rotation: g.d_angle[i] = -g.d_angle[i]; break;
                    }
                }
            };
        }
        std::ofstream csv_file = open_csv(ctx.out, "gradcheck.csv");
        CsvWriter csv(csv_file);
        csv.header({"check", "mode", "attribute", "max_rel_error", "evaluations", "tolerance", "passed"});
        bool ok = true;
        std::size_t printed = 0;
        for (const Mode mode : {Mode::image2d, Mode::ortho3d}) {
            const GradcheckReport rep = run_gradient_check(mode, go);
            for (const AttributeError& a : rep.per_attribute) {
                const bool attr_ok = a.max_rel_error < go.tolerance;
                char line[160];
                std::snprintf(line, sizeof line, "gradient %-8s %-4s max rel error %.3e over %zu evaluations%s\n",
                              to_string(mode), to_string(a.attribute), a.max_rel_error, a.checked,
                              attr_ok ? "" : "  FAIL");
                log_of(ctx) << line;
                csv.cell(std::string("gradient")).cell(std::string(to_string(mode)));
                csv.cell(std::string(to_string(a.attribute))).cell(a.max_rel_error).cell(a.checked);
                csv.cell(go.tolerance).cell(std::string(attr_ok ? "true" : "false"));
                csv.end_row();
            }
            for (const GradcheckFailure& f : rep.failures) {
                if (printed++ >= 20) break;
                char line[200];
                std::snprintf(line, sizeof line,
                              "FAIL %s config %d gaussian %zu attribute %s[%d]: analytic %.9g numeric %.9g rel %.3e\n",
                              to_string(mode), f.config, f.gaussian, to_string(f.attribute), f.component, f.analytic,
                              f.numeric, f.rel_error);
                err_of(ctx) << line;
            }
            ok = ok && rep.passed();
        }
        if (opts.quadrature_cases > 0) {
            const QuadratureReport q = run_quadrature_check(opts.quadrature_cases, go.seed);
            const bool q_ok = q.max_rel_error < 1e-6 && q.axis_aligned_error < 1e-12;
            char line[160];
            std::snprintf(line, sizeof line, "quadrature %d cases max rel error %.3e, axis-aligned error %.3e%s\n",
                          q.cases, q.max_rel_error, q.axis_aligned_error, q_ok ? "" : "  FAIL");
            log_of(ctx) << line;
            csv.cell(std::string("quadrature")).cell(std::string("ortho3d")).cell(std::string("splat"));
            csv.cell(q.max_rel_error).cell(q.cases).cell(1e-6).cell(std::string(q_ok ? "true" : "false"));
            csv.end_row();
            ok = ok && q_ok;
        }
        return ok ? kExitOk : kExitCheckFailed;
    });
}

int cmd_probe(const std::string& kind, const CommandContext& ctx) {
    return guarded(ctx, [&] {
        const ExperimentConfig cfg = resolve_config(ctx, ExperimentConfig{});
        const double lambda_g = cfg.train.lambda_g;
        if (kind == "scaling") {
            const std::vector<double> multipliers = geometric_sweep(1.0, 100.0, 9);
            const ScalingReport rep = gradient_scaling_probe(default_scaling_probe(), multipliers);
            std::ofstream f = open_csv(ctx.out, "probe_scaling.csv");
            CsvWriter csv(f);
            csv.header({"row", "scale", "grad_mu", "grad_color", "grad_opacity", "grad_scale", "ratio",
                        "footprint_pixels", "slope", "slope_ci_low", "slope_ci_high"});
            for (const ScalingRow& r : rep.rows) {
                csv.cell(std::string("point")).cell(r.scale).cell(r.grad_mu).cell(r.grad_color);
                csv.cell(r.grad_opacity).cell(r.grad_scale).cell(r.ratio).cell(r.footprint_pixels);
                csv.empty().empty().empty();
                csv.end_row();
            }
            csv.cell(std::string("slope"));
            for (int k = 0; k < 7; ++k) csv.empty();
            csv.cell(rep.slope).cell(rep.slope_ci_low).cell(rep.slope_ci_high);
            csv.end_row();
            for (const auto& w : rep.warnings) err_of(ctx) << "warning: " << w << '\n';
            char line[120];
            std::snprintf(line, sizeof line, "slope %.4f, 95%% interval [%.4f, %.4f]\n", rep.slope, rep.slope_ci_low,
                          rep.slope_ci_high);
            log_of(ctx) << line;
            return kExitOk;
        }
        if (kind == "impact") {
            const int horizon = 50;
            const std::vector<Vec3> trace = impact_trace(Vec3::UnitX(), lambda_g, 0, horizon);
            std::ofstream f = open_csv(ctx.out, "probe_impact.csv");
            CsvWriter csv(f);
            csv.header({"step", "share", "cumulative", "closed_form"});
            double sum = 0.0;
            for (int k = 0; k < horizon; ++k) {
                sum += trace[static_cast<std::size_t>(k)][0];
                csv.cell(k).cell(trace[static_cast<std::size_t>(k)][0]).cell(sum);
                csv.cell(total_impact_partial(Vec3::UnitX(), lambda_g, k + 1)[0]);
                csv.end_row();
            }
            log_of(ctx) << "impact total after " << horizon << " steps " << format_real(sum) << '\n';
            return kExitOk;
        }
        if (kind == "decay") {
            Aabb box;
            VelocityField field = VelocityField::covering(box, 3, 8, lambda_g);
            Rng rng(cfg.train.seed);
            for (auto& v : field.velocities_mut()) v = Vec3(rng.normal(), rng.normal(), rng.normal());
            const double peak = field.max_norm();
            for (auto& v : field.velocities_mut()) v /= peak;
            const std::vector<double> series = energy_decay_probe(field, 50);
            std::ofstream f = open_csv(ctx.out, "probe_decay.csv");
            CsvWriter csv(f);
            csv.header({"step", "max_norm"});
            for (std::size_t k = 0; k < series.size(); ++k) csv.cell(k).cell(series[k]).end_row();
            log_of(ctx) << "max norm after 50 steps " << format_real(series.back()) << '\n';
            return kExitOk;
        }
        if (kind == "fixedpoint") {
            const std::vector<double> diffs = run_fixed_point_check(50, cfg.train.seed, lambda_g, cfg.train.lambda_p);
            std::ofstream f = open_csv(ctx.out, "probe_fixedpoint.csv");
            CsvWriter csv(f);
            csv.header({"set", "max_abs_difference"});
            double worst = 0.0;
            for (std::size_t k = 0; k < diffs.size(); ++k) {
                csv.cell(k).cell(diffs[k]).end_row();
                worst = std::max(worst, diffs[k]);
            }
            log_of(ctx) << "largest difference " << format_real(worst) << '\n';
            return kExitOk;
        }
        throw UsageError("unknown probe kind '" + kind + "' (expected scaling, impact, decay or fixedpoint)");
    });
}

int cmd_ablate(const CommandContext& ctx) {
    return guarded(ctx, [&] {
        const ExperimentConfig cfg = resolve_config(ctx, ExperimentConfig{});
        const std::vector<AblationRow> rows = run_ablation(cfg);
        const bool holdout = cfg.train.mode == Mode::ortho3d && cfg.holdout_views > 0;
        std::ofstream f = open_csv(ctx.out, "ablation.csv");
        CsvWriter csv(f);
        if (holdout) {
            csv.header({"variant", "seed", "psnr", "ssim", "gaussian_count", "psnr_holdout"});
        } else {
            csv.header({"variant", "seed", "psnr", "ssim", "gaussian_count"});
        }
        for (const AblationRow& r : rows) {
            csv.cell(r.variant).cell(static_cast<long long>(r.seed)).cell(r.psnr).cell(r.ssim).cell(r.gaussian_count);
            if (holdout) csv.cell(r.psnr_holdout.value_or(0.0));
            csv.end_row();
            char line[160];
            std::snprintf(line, sizeof line, "%-22s seed %llu psnr %.4f ssim %.4f gaussians %zu\n", r.variant.c_str(),
                          static_cast<unsigned long long>(r.seed), r.psnr, r.ssim, r.gaussian_count);
            log_of(ctx) << line;
        }
        return kExitOk;
    });
}

}  // namespace pdeo
