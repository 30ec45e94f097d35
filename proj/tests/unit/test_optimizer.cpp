#include "pdeo/checkpoint.hpp"
#include "pdeo/config.hpp"
#include "pdeo/optimizer.hpp"

#include "../support/gen.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

using namespace pdeo;

namespace {

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.iterations = 60;
    cfg.densify_start = 10;
    cfg.densify_stop = 50;
    cfg.densify_interval = 10;
    cfg.initial_count = 48;
    cfg.max_gaussians = 200;
    cfg.deterministic = true;
    cfg.seed = 4;
    return cfg;
}

std::vector<TrainView> small_views(const Scene& scene, int size = 20) {
    Rng rng(1234);
    const Image coarse = testgen::image(rng, 4, 4);
    Image target(size, size);
    for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) target.at(r, c) = coarse.at(r * 4 / size, c * 4 / size);
    }
    return {{make_grid(scene.bbox, size, size), target}};
}

GradientSet filled_grads(std::size_t n, double value) {
    GradientSet g(n, Mode::image2d);
    for (std::size_t i = 0; i < n; ++i) {
        g.d_mu[i] = Vec3(value, -value, 0.0);
        g.d_color[i] = Vec3::Constant(value);
        g.d_opacity[i] = value;
        g.d_log_scale[i] = Vec3(value, value, 0.0);
        g.d_angle[i] = value;
    }
    return g;
}

bool same_metrics(const std::vector<Metrics>& a, const std::vector<Metrics>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const Metrics &x = a[k], &y = b[k];
        if (x.iteration != y.iteration || x.loss_total != y.loss_total || x.psnr != y.psnr || x.ssim != y.ssim ||
            x.gaussian_count != y.gaussian_count || x.step_median != y.step_median || x.wall_ms != y.wall_ms) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("base_step plain SGD examples") {
    TrainConfig cfg;
    cfg.base_optimizer = BaseOptimizer::plain_sgd;
    OptimizerState st(2, VelocityField{});
    const AttributeUpdates zero = base_step(filled_grads(2, 0.0), st, cfg, cfg.lr_position);
    CHECK(zero.d_mu[0].isZero(0.0));
    CHECK(zero.d_opacity[1] == 0.0);

    cfg.lr_color = 0.01;
    const AttributeUpdates two = base_step(filled_grads(2, 2.0), st, cfg, 0.01);
    CHECK(two.d_color[0][0] == doctest::Approx(-0.02).epsilon(1e-15));
    CHECK(two.d_mu[0][0] == doctest::Approx(-0.02).epsilon(1e-15));
    CHECK(two.d_mu[0][1] == doctest::Approx(0.02).epsilon(1e-15));
}

TEST_CASE("adaptive moment first step has magnitude lr") {
    TrainConfig cfg;
    // step 1: m = (1-b1) g, v = (1-b2) g^2, bias corrected m/sqrt(v) = sign(g)
    for (const double g : {1e-6, 3.0, -250.0}) {
        OptimizerState st(1, VelocityField{});
        const AttributeUpdates up = base_step(filled_grads(1, g), st, cfg, cfg.lr_position);
        CHECK(std::abs(up.d_mu[0][0]) == doctest::Approx(cfg.lr_position).epsilon(1e-9));
        CHECK(std::abs(up.d_color[0][0]) == doctest::Approx(cfg.lr_color).epsilon(1e-9));
        CHECK(std::abs(up.d_opacity[0]) == doctest::Approx(cfg.lr_opacity).epsilon(1e-9));
        CHECK(std::abs(up.d_log_scale[0][0]) == doctest::Approx(cfg.lr_scale).epsilon(1e-9));
        CHECK(std::abs(up.d_angle[0]) == doctest::Approx(cfg.lr_rotation).epsilon(1e-9));
        CHECK((up.d_mu[0][0] < 0) == (g > 0));
        CHECK(st.step == 1);
    }
}

TEST_CASE("non-finite gradients poison the step") {
    TrainConfig cfg;
    OptimizerState st(3, VelocityField{});
    GradientSet g = filled_grads(3, 0.1);
    g.d_opacity[2] = std::numeric_limits<double>::quiet_NaN();
    try {
        base_step(g, st, cfg, cfg.lr_position);
        FAIL("expected PoisonedStepError");
    } catch (const PoisonedStepError& e) {
        CHECK(e.gaussian == 2);
        CHECK(e.attribute == Attribute::opacity);
        CHECK(std::string(e.what()).find("attribute o") != std::string::npos);
    }
}

TEST_CASE("pdeo_position_step examples") {
    SUBCASE("disabled limit equals the plain update") {
        Rng rng(2);
        Scene a = testgen::scene(rng, Mode::image2d, 20);
        Scene b = a;
        VelocityField f = VelocityField::covering(a.bbox, 2, 8, 1.0);
        std::vector<Vec3> raw(20);
        for (auto& r : raw) r = Vec3(rng.normal(), rng.normal(), 0.0) * 1e-3;
        pdeo_position_step(a, f, raw, 1.0);
        for (std::size_t i = 0; i < 20; ++i) b.gaussians[i].mu += raw[i];
        for (std::size_t i = 0; i < 20; ++i) CHECK(a.gaussians[i].mu == b.gaussians[i].mu);
        CHECK(f.max_norm() == 0.0);
    }
    SUBCASE("one particle alone in its voxel") {
        Scene s;
        RawGaussian g;
        g.mu = Vec3(0.5, 0.5, 0.0);
        s.gaussians = {g};
        VelocityField f = VelocityField::covering(s.bbox, 2, 8, 0.8);
        const std::vector<Vec3> raw{Vec3(1.0, 0.0, 0.0)};
        const std::vector<Vec3> applied = pdeo_position_step(s, f, raw, 0.8);
        CHECK((f.velocity_at(g.mu) - Vec3(0.2, 0.0, 0.0)).norm() < 1e-15);
        CHECK((applied[0] - Vec3(0.84, 0.0, 0.0)).norm() < 1e-15);
        CHECK((s.gaussians[0].mu - Vec3(1.34, 0.5, 0.0)).norm() < 1e-15);
    }
}

TEST_CASE("densify_decide examples") {
    TrainConfig cfg;
    const double small_stat = 0.0;
    CHECK(densify_decide(Vec3(1, 0, 0), Vec3(2, 0, 0), small_stat, 0.1, 0.2, cfg) == DensifyAction::none);
    CHECK(densify_decide(Vec3(1, 0, 0), Vec3(-2, 0, 0), small_stat, 0.1, 0.2, cfg) == DensifyAction::clone);
    CHECK(densify_decide(Vec3(1, 0, 0), Vec3(-2, 0, 0), small_stat, 0.3, 0.2, cfg) == DensifyAction::split);
    // zero voxel velocity leaves only the gradient trigger
    CHECK(densify_decide(Vec3(1, 0, 0), Vec3::Zero(), small_stat, 0.1, 0.2, cfg) == DensifyAction::none);
    CHECK(densify_decide(Vec3(1, 0, 0), Vec3::Zero(), 1.0, 0.1, 0.2, cfg) == DensifyAction::clone);
    // 120 degrees is the boundary: 130 triggers, 110 does not
    const double r130 = 130.0 * std::numbers::pi / 180.0, r110 = 110.0 * std::numbers::pi / 180.0;
    CHECK(densify_decide(Vec3(1, 0, 0), Vec3(std::cos(r130), std::sin(r130), 0), 0, 0.1, 0.2, cfg) == DensifyAction::clone);
    CHECK(densify_decide(Vec3(1, 0, 0), Vec3(std::cos(r110), std::sin(r110), 0), 0, 0.1, 0.2, cfg) == DensifyAction::none);
    cfg.cosine_mode = CosineMode::agree;
    CHECK(densify_decide(Vec3(1, 0, 0), Vec3(2, 0, 0), small_stat, 0.1, 0.2, cfg) == DensifyAction::clone);
    cfg.use_cosine_criterion = false;
    CHECK(densify_decide(Vec3(1, 0, 0), Vec3(2, 0, 0), small_stat, 0.1, 0.2, cfg) == DensifyAction::none);
}

TEST_CASE("angle_between_deg") {
    CHECK(*angle_between_deg(Vec3(1, 0, 0), Vec3(0, 3, 0)) == doctest::Approx(90.0));
    CHECK(*angle_between_deg(Vec3(1, 0, 0), Vec3(-1, 0, 0)) == doctest::Approx(180.0));
    CHECK_FALSE(angle_between_deg(Vec3(1, 0, 0), Vec3(1e-13, 0, 0)).has_value());
}

TEST_CASE("clone and split") {
    Rng rng(6);
    RawGaussian g = testgen::gaussian(rng, Mode::image2d);
    SUBCASE("zero-offset clone doubles alpha at the footprint") {
        auto [a, b] = clone(g, Vec3::Zero(), rng);
        CHECK(a.mu == g.mu);
        CHECK(b.mu == g.mu);
        CHECK(std::abs(b.depth_key - g.depth_key) <= 1e-6);
        CHECK(b.depth_key != g.depth_key);
        Scene one, two;
        one.gaussians = {g};
        two.gaussians = {a, b};
        const ImageGrid grid = make_grid(one.bbox, 16, 16);
        const Image i1 = render_image(one, grid), i2 = render_image(two, grid);
        for (std::size_t p = 0; p < i1.size(); ++p) {
            // a single layer gives c*alpha; two identical layers give c*alpha*(2 - alpha)
            for (int ch = 0; ch < 3; ++ch) {
                if (g.color[ch] == 0.0) continue;
                const double alpha = i1.pixels[p][ch] / g.color[ch];
                CHECK(i2.pixels[p][ch] == doctest::Approx(g.color[ch] * alpha * (2.0 - alpha)).epsilon(1e-12));
            }
        }
    }
    SUBCASE("clone offset") {
        auto [a, b] = clone(g, Vec3(0.01, -0.02, 0.0), rng);
        CHECK((b.mu - g.mu - Vec3(0.01, -0.02, 0.0)).norm() < 1e-15);
    }
    SUBCASE("split children shrink by 1.6") {
        for (const Mode mode : {Mode::image2d, Mode::ortho3d}) {
            const RawGaussian p = testgen::gaussian(rng, mode);
            auto [c1, c2] = split(p, mode, rng);
            const int dim = dims_of(mode);
            for (int a = 0; a < dim; ++a) {
                CHECK(std::exp(c1.log_scale[a]) == doctest::Approx(std::exp(p.log_scale[a]) / 1.6).epsilon(1e-14));
                CHECK(std::exp(c2.log_scale[a]) == doctest::Approx(std::exp(p.log_scale[a]) / 1.6).epsilon(1e-14));
            }
            CHECK(c1.mu != c2.mu);
            if (mode == Mode::image2d) CHECK(c1.mu[2] == 0.0);
        }
    }
    SUBCASE("split samples follow the parent density") {
        RawGaussian p;
        p.log_scale = Vec3(std::log(0.2), std::log(0.05), 0.0);
        p.angle = 0.0;
        double sx = 0, sy = 0;
        const int n = 4000;
        for (int k = 0; k < n; ++k) {
            auto [c1, c2] = split(p, Mode::image2d, rng);
            sx += c1.mu[0] * c1.mu[0] + c2.mu[0] * c2.mu[0];
            sy += c1.mu[1] * c1.mu[1] + c2.mu[1] * c2.mu[1];
        }
        CHECK(std::sqrt(sx / (2 * n)) == doctest::Approx(0.2).epsilon(0.05));
        CHECK(std::sqrt(sy / (2 * n)) == doctest::Approx(0.05).epsilon(0.05));
    }
}

TEST_CASE("prune examples") {
    TrainConfig cfg;
    SUBCASE("initial opacities survive") {
        cfg.initial_count = 30;
        Scene s = init_scene(cfg, 1);
        CHECK(prune(s, cfg).size() == 30);
        CHECK(s.size() == 30);
    }
    SUBCASE("near-transparent Gaussian is removed") {
        cfg.initial_count = 5;
        Scene s = init_scene(cfg, 1);
        s.gaussians[3].opacity_logit = opacity_logit(1e-4);
        const auto kept = prune(s, cfg);
        CHECK(kept == std::vector<std::size_t>{0, 1, 2, 4});
        CHECK(s.size() == 4);
    }
    SUBCASE("oversized Gaussian is removed") {
        cfg.initial_count = 3;
        Scene s = init_scene(cfg, 1);
        s.gaussians[0].log_scale[1] = std::log(1.5);
        CHECK(prune(s, cfg) == std::vector<std::size_t>{1, 2});
    }
    SUBCASE("empty scene") {
        Scene s;
        CHECK(prune(s, cfg).empty());
        CHECK(s.size() == 0);
    }
}

TEST_CASE("optimizer state remaps in lockstep") {
    OptimizerState st(4, VelocityField{});
    for (std::size_t i = 0; i < 4; ++i) {
        st.first_moment[i][0] = static_cast<double>(i + 1);
        st.grad_accum[i] = 10.0 * (i + 1);
        st.grad_count[i] = static_cast<std::uint32_t>(i);
    }
    const std::vector<std::size_t> kept{3, 1};
    st.remap(kept, 2);
    REQUIRE(st.size() == 4);
    CHECK(st.first_moment.size() == 4);
    CHECK(st.second_moment.size() == 4);
    CHECK(st.last_applied.size() == 4);
    CHECK(st.first_moment[0][0] == 4.0);
    CHECK(st.grad_accum[1] == 20.0);
    CHECK(st.first_moment[2][0] == 0.0);
    CHECK(st.grad_count[3] == 0u);
}

TEST_CASE("training with zero iterations leaves the scene untouched") {
    TrainConfig cfg = small_config();
    cfg.iterations = 0;
    const Scene scene = init_scene(cfg, 1);
    const TrainResult r = train(scene, small_views(scene), cfg);
    CHECK(r.metrics.empty());
    CHECK(checksum(r.scene) == checksum(scene));
}

TEST_CASE("training is deterministic") {
    for (const Mode mode : {Mode::image2d, Mode::ortho3d}) {
        TrainConfig cfg = small_config();
        cfg.mode = mode;
        cfg.iterations = 30;
        cfg.densify_stop = 30;
        const Scene scene = init_scene(cfg, cfg.seed);
        std::vector<TrainView> views;
        if (mode == Mode::image2d) {
            views = small_views(scene);
        } else {
            Rng rng(8);
            Scene truth = testgen::scene(rng, Mode::ortho3d, 10);
            const CameraOrtho cam = make_camera(Vec3(1, 1, 0.3).normalized(), Vec3::UnitZ(), Vec3::Constant(0.5), 12, 12, 0.1);
            views.push_back({cam, render_image(truth, cam)});
        }
        const TrainResult a = train(scene, views, cfg);
        const TrainResult b = train(scene, views, cfg);
        CHECK(same_metrics(a.metrics, b.metrics));
        CHECK(checksum(a.scene) == checksum(b.scene));
        CHECK(a.state == b.state);
        for (const Metrics& m : a.metrics) CHECK(m.wall_ms == 0.0);
    }
}

TEST_CASE("disabled field reproduces the baseline bit for bit") {
    TrainConfig base = small_config();
    base.iterations = 100;
    base.densify_stop = 90;
    base.use_field = false;
    TrainConfig limit = base;
    limit.use_field = true;
    limit.lambda_g = 1.0;
    limit.lambda_p = 1.0;
    const Scene scene = init_scene(base, base.seed);
    const auto views = small_views(scene);
    const TrainResult a = train(scene, views, base);
    const TrainResult b = train(scene, views, limit);
    CHECK(same_metrics(a.metrics, b.metrics));
    CHECK(checksum(a.scene) == checksum(b.scene));
}

TEST_CASE("population respects the cap and the densification window") {
    TrainConfig cfg = small_config();
    cfg.max_gaussians = 60;
    cfg.grad_threshold = 0.0;  // every visible Gaussian is a candidate
    const Scene scene = init_scene(cfg, cfg.seed);
    std::vector<std::size_t> counts;
    TrainHooks hooks;
    hooks.after_iteration = [&](int, const Scene& s) { counts.push_back(s.size()); };
    const TrainResult r = train(scene, small_views(scene), cfg, {}, hooks);
    REQUIRE(counts.size() == 60);
    for (std::size_t k = 0; k < counts.size(); ++k) {
        CHECK(counts[k] <= 60u);
        const int it = static_cast<int>(k);
        const bool densify_step = it >= cfg.densify_start && it < cfg.densify_stop &&
                                  (it - cfg.densify_start) % cfg.densify_interval == 0;
        if (k > 0 && !densify_step) CHECK(counts[k] == counts[k - 1]);
    }
    CHECK(counts[9] == 48u);
    CHECK(counts[10] > 48u);
    CHECK(r.state.size() == r.scene.size());
}

TEST_CASE("the field only affects positions") {
    TrainConfig cfg = small_config();
    Rng rng(12);
    Scene scene = init_scene(cfg, 3);
    const auto views = small_views(scene);
    const ForwardState fs = render_forward(scene, views[0].view);
    const PhotometricLoss loss = photometric_l2(fs.image, views[0].target);
    const GradientSet grads = backward_image(scene, fs, loss.residual);

    OptimizerState zero(scene.size(), VelocityField::covering(scene.bbox, 2, 16, 0.8));
    OptimizerState busy = zero;
    for (auto& v : busy.field.velocities_mut()) v = Vec3(rng.normal(), rng.normal(), 0.0) * 1e-2;
    const AttributeUpdates u0 = base_step(grads, zero, cfg, cfg.lr_position);
    const AttributeUpdates u1 = base_step(grads, busy, cfg, cfg.lr_position);
    Scene s0 = scene, s1 = scene;
    pdeo_position_step(s0, zero.field, u0.d_mu, cfg.lambda_p);
    pdeo_position_step(s1, busy.field, u1.d_mu, cfg.lambda_p);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        CHECK(u0.d_color[i] == u1.d_color[i]);
        CHECK(u0.d_opacity[i] == u1.d_opacity[i]);
        CHECK(u0.d_log_scale[i] == u1.d_log_scale[i]);
        CHECK(u0.d_angle[i] == u1.d_angle[i]);
        CHECK(u0.d_mu[i] == u1.d_mu[i]);
    }
    bool moved_differently = false;
    for (std::size_t i = 0; i < scene.size(); ++i) moved_differently |= s0.gaussians[i].mu != s1.gaussians[i].mu;
    CHECK(moved_differently);
}

TEST_CASE("training rejects bad inputs") {
    TrainConfig cfg = small_config();
    const Scene scene = init_scene(cfg, 1);
    CHECK_THROWS_AS(train(scene, {}, cfg), ConfigError);
    Scene wrong = scene;
    wrong.mode = Mode::ortho3d;
    CHECK_THROWS_AS(train(wrong, small_views(scene), cfg), ConfigError);
    auto views = small_views(scene);
    views[0].target.pixels[0] = Vec3(std::nan(""), 0, 0);
    CHECK_THROWS_AS(train(scene, views, cfg), DivergenceError);
}

TEST_CASE("position learning rate schedule") {
    TrainConfig cfg;
    CHECK(position_lr(cfg, 0) == cfg.lr_position);
    cfg.lr_position_final = cfg.lr_position / 100.0;
    CHECK(position_lr(cfg, 0) == doctest::Approx(cfg.lr_position));
    CHECK(position_lr(cfg, cfg.iterations - 1) == doctest::Approx(cfg.lr_position_final));
    CHECK(position_lr(cfg, (cfg.iterations - 1) / 2) < cfg.lr_position);
}

TEST_CASE("checkpoint round trip is bit exact") {
    TrainConfig cfg = small_config();
    cfg.iterations = 25;
    cfg.densify_stop = 25;
    const Scene scene = init_scene(cfg, 2);
    const TrainResult r = train(scene, small_views(scene), cfg);
    std::stringstream buf;
    save_checkpoint(buf, r.scene, r.state);
    const Checkpoint cp = load_checkpoint(buf);
    CHECK(checksum(cp.scene) == checksum(r.scene));
    CHECK(cp.state == r.state);
    std::stringstream again;
    save_checkpoint(again, cp.scene, cp.state);
    std::stringstream first;
    save_checkpoint(first, r.scene, r.state);
    CHECK(again.str() == first.str());

    std::stringstream bad("pdeo-checkpoint 2\n");
    CHECK_THROWS_AS(load_checkpoint(bad), ConfigError);
    std::stringstream truncated(first.str().substr(0, first.str().size() / 2));
    CHECK_THROWS_AS(load_checkpoint(truncated), ConfigError);
}
