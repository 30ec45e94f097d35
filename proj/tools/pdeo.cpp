#include "pdeo/experiments.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Gaussian splatting fits with a viscous position optimizer"};
    app.require_subcommand(1);

    pdeo::CommandContext ctx;
    std::string config;
    std::string out = "run";
    std::uint64_t seed = 0;
    auto add_common = [&](CLI::App* sub, bool with_config) {
        if (with_config) sub->add_option("--config", config, "flat key = value config file")->check(CLI::ExistingFile);
        sub->add_option("--out", out, "output directory");
        sub->add_option("--seed", seed, "seed, overrides the config");
        sub->add_flag("--deterministic", ctx.deterministic, "zero wall-clock timings for byte-identical output");
    };

    auto* fit2d = app.add_subcommand("fit2d", "fit a 2D image");
    add_common(fit2d, true);
    auto* fit3d = app.add_subcommand("fit3d", "fit a synthetic 3D cloud from orthographic views");
    add_common(fit3d, true);

    auto* gradcheck = app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
    add_common(gradcheck, false);
    pdeo::GradcheckCommand gc;
    std::string flip;
    gradcheck->add_option("--configs", gc.configs, "random configurations per mode")->check(CLI::PositiveNumber);
    gradcheck->add_option("--quadrature-cases", gc.quadrature_cases, "closed form vs quadrature cases")
        ->check(CLI::NonNegativeNumber);
    gradcheck->add_option("--flip-sign", flip, "negate one attribute's gradient (mu, c, o, s, rot)");

    auto* probe = app.add_subcommand("probe", "run an analysis probe and write probe_<kind>.csv");
    add_common(probe, true);
    std::string kind;
    probe->add_option("kind", kind, "scaling, impact, decay or fixedpoint")->required();

    auto* ablate = app.add_subcommand("ablate", "run every ablation variant over several seeds");
    add_common(ablate, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : pdeo::kExitConfig;
    }

    if (!config.empty()) ctx.config = config;
    ctx.out = out;
    auto seed_given = [&](CLI::App* sub) {
        if (sub->count("--seed") > 0) ctx.seed = seed;
    };

    if (fit2d->parsed()) {
        seed_given(fit2d);
        return pdeo::cmd_fit(pdeo::Mode::image2d, ctx);
    }
    if (fit3d->parsed()) {
        seed_given(fit3d);
        return pdeo::cmd_fit(pdeo::Mode::ortho3d, ctx);
    }
    if (gradcheck->parsed()) {
        seed_given(gradcheck);
        if (!flip.empty()) {
            gc.flip_sign = pdeo::attribute_from_string(flip);
            if (!gc.flip_sign) {
                std::cerr << "unknown attribute '" << flip << "'\n";
                return pdeo::kExitConfig;
            }
        }
        return pdeo::cmd_gradcheck(ctx, gc);
    }
    if (probe->parsed()) {
        seed_given(probe);
        return pdeo::cmd_probe(kind, ctx);
    }
    seed_given(ablate);
    return pdeo::cmd_ablate(ctx);
}
