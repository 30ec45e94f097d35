#include "pdeo/analysis.hpp"
#include "pdeo/field.hpp"

#include "../support/gen.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace pdeo;

namespace {

VelocityField unit_grid(int cells, double lambda_g, int dim = 2) {
    const VoxelIndex dims{cells, cells, dim == 2 ? 1 : cells};
    return VelocityField(Vec3::Zero(), 1.0 / cells, dims, lambda_g, dim);
}

}  // namespace

TEST_CASE("voxel_index examples") {
    const VelocityField f(Vec3(1.0, -2.0, 0.0), 0.5, {4, 4, 1}, 0.8, 2);
    CHECK(f.voxel_index(Vec3(1.0, -2.0, 0.0)) == VoxelIndex{0, 0, 0});
    CHECK(f.voxel_index(Vec3(1.0, -2.0, 0.0) + 0.5 * Vec3(1.5, 0.5, 0.0)) == VoxelIndex{1, 0, 0});
    CHECK(f.voxel_index(Vec3(100.0, -100.0, 0.0)) == VoxelIndex{3, 0, 0});
    CHECK(f.voxel_index(Vec3(-1e9, 1e9, 0.0)) == VoxelIndex{0, 3, 0});
}

TEST_CASE("flat index round trip") {
    const VelocityField f(Vec3::Zero(), 1.0, {3, 4, 5}, 0.8, 3);
    for (std::size_t k = 0; k < f.voxel_count(); ++k) CHECK(f.flat_index(f.unflatten(k)) == k);
}

TEST_CASE("field construction is validated") {
    CHECK_THROWS_AS(VelocityField(Vec3::Zero(), 0.0, {1, 1, 1}, 0.8), ConfigError);
    CHECK_THROWS_AS(VelocityField(Vec3::Zero(), 1.0, {0, 1, 1}, 0.8), ConfigError);
    CHECK_THROWS_AS(VelocityField(Vec3::Zero(), 1.0, {1, 1, 1}, 1.2), ConfigError);
    CHECK_THROWS_AS(VelocityField(Vec3::Zero(), 1.0, {2, 2, 2}, 0.8, 2), ConfigError);
}

TEST_CASE("covering grid spans the expanded bbox") {
    Aabb box;
    const VelocityField f2 = VelocityField::covering(box, 2, 64, 0.8);
    CHECK(f2.cell_size() == doctest::Approx(std::sqrt(2.0) / 64));
    CHECK(f2.dims()[2] == 1);
    const Vec3 far_corner = f2.origin() + f2.cell_size() * Vec3(f2.dims()[0], f2.dims()[1], 0);
    CHECK(far_corner[0] >= 1.1 - 1e-12);
    CHECK(f2.origin()[0] == doctest::Approx(-0.1));
    const VelocityField f3 = VelocityField::covering(box, 3, 16, 0.8);
    CHECK(f3.cell_size() == doctest::Approx(std::sqrt(3.0) / 16));
    CHECK(f3.dims()[2] > 1);
}

TEST_CASE("p2g_update examples") {
    SUBCASE("two particles in one voxel") {
        const VelocityField f = unit_grid(2, 0.8);
        const std::vector<Vec3> pos{Vec3(0.1, 0.1, 0), Vec3(0.2, 0.3, 0)};
        const std::vector<Vec3> upd{Vec3(1, 0, 0), Vec3(0, 1, 0)};
        const VelocityField out = p2g_update(f, pos, upd);
        CHECK((out.velocity({0, 0, 0}) - Vec3(0.1, 0.1, 0)).norm() < 1e-15);
        CHECK(out.velocity({1, 1, 0}) == Vec3::Zero());
    }
    SUBCASE("lambda_g = 1 freezes the field") {
        VelocityField f = unit_grid(2, 1.0);
        f.set_velocity({1, 0, 0}, Vec3(0.3, -0.2, 0));
        const std::vector<Vec3> pos{Vec3(0.6, 0.1, 0), Vec3(0.1, 0.9, 0)};
        const std::vector<Vec3> upd{Vec3(5, 5, 0), Vec3(-1, 2, 0)};
        CHECK(p2g_update(f, pos, upd) == f);
    }
    SUBCASE("empty voxel decays") {
        VelocityField f = unit_grid(2, 0.8);
        f.set_velocity({1, 1, 0}, Vec3(1, 0, 0));
        const VelocityField out = p2g_update(f, {}, {});
        CHECK(out.velocity({1, 1, 0}) == Vec3(0.8, 0, 0));
    }
    SUBCASE("length mismatch") {
        const std::vector<Vec3> pos{Vec3::Zero()};
        CHECK_THROWS_AS(p2g_update(unit_grid(2, 0.8), pos, {}), UsageError);
    }
}

TEST_CASE("p2g is linear in the mean term") {
    Rng rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        VelocityField f = unit_grid(3, 0.7);
        for (auto& v : f.velocities_mut()) v = Vec3(rng.normal(), rng.normal(), 0.0);
        std::vector<Vec3> pos(12), a(12), b(12), sum(12);
        for (std::size_t i = 0; i < pos.size(); ++i) {
            pos[i] = Vec3(rng.uniform(), rng.uniform(), 0.0);
            a[i] = Vec3(rng.normal(), rng.normal(), 0.0);
            b[i] = Vec3(rng.normal(), rng.normal(), 0.0);
            sum[i] = a[i] + b[i];
        }
        const VelocityField zero_field = unit_grid(3, 0.7);
        const VelocityField fa = p2g_update(zero_field, pos, a);
        const VelocityField fb = p2g_update(zero_field, pos, b);
        const VelocityField fs = p2g_update(f, pos, sum);
        for (std::size_t v = 0; v < f.voxel_count(); ++v) {
            const Vec3 expected = 0.7 * f.velocities()[v] + fa.velocities()[v] + fb.velocities()[v];
            CHECK((fs.velocities()[v] - expected).norm() < 1e-14);
        }
    }
}

TEST_CASE("zero-gradient steps scale every voxel by lambda_g") {
    Rng rng(43);
    VelocityField f(Vec3::Zero(), 0.25, {4, 4, 4}, 0.8, 3);
    for (auto& v : f.velocities_mut()) v = Vec3(rng.normal(), rng.normal(), rng.normal());
    const VelocityField next = p2g_update(f, {}, {});
    for (std::size_t v = 0; v < f.voxel_count(); ++v) {
        CHECK(std::abs(next.velocities()[v].norm() - 0.8 * f.velocities()[v].norm()) <= 1e-15 * f.velocities()[v].norm());
    }
}

TEST_CASE("empty-scene field decays below epsilon on schedule") {
    VelocityField f = unit_grid(2, 0.8);
    f.set_velocity({0, 1, 0}, Vec3(3.0, 4.0, 0.0));
    const double v0 = 5.0;
    for (const double eps : {1e-1, 1e-3, 1e-8}) {
        const int steps = static_cast<int>(std::ceil(std::log(eps / v0) / std::log(0.8)));
        VelocityField g = f;
        for (int k = 0; k < steps; ++k) g = p2g_update(g, {}, {});
        CHECK(g.max_norm() < eps * (1 + 1e-12));
        VelocityField early = f;
        for (int k = 0; k < steps - 1; ++k) early = p2g_update(early, {}, {});
        CHECK(early.max_norm() >= eps);
    }
}

TEST_CASE("g2p_blend examples") {
    CHECK((g2p_blend(Vec3(1, 0, 0), Vec3(0, 1, 0), 0.8) - Vec3(0.8, 0.2, 0)).norm() < 1e-15);
    CHECK(g2p_blend(Vec3(0.3, -2, 1), Vec3(7, 1, 1), 1.0) == Vec3(0.3, -2, 1));
    CHECK(g2p_blend(Vec3(0.3, -2, 1), Vec3(7, 1, 1), 0.0) == Vec3(7, 1, 1));
}

TEST_CASE("g2p_blend lies on the segment") {
    Rng rng(47);
    for (int k = 0; k < 200; ++k) {
        const Vec3 a = testgen::uniform3(rng, -1, 1);
        const Vec3 b = testgen::uniform3(rng, -1, 1);
        const double lp = rng.uniform();
        const Vec3 out = g2p_blend(a, b, lp);
        // collinear with the segment and between its ends
        CHECK(((out - a).cross(b - a)).norm() < 1e-14);
        CHECK((out - a).norm() + (out - b).norm() == doctest::Approx((a - b).norm()).epsilon(1e-12));
    }
}

TEST_CASE("total_impact_partial examples") {
    const Vec3 dv(1.0, -2.0, 0.5);
    CHECK((total_impact_partial(dv, 0.5, 3) - 0.875 * dv).norm() < 1e-15);
    CHECK((total_impact_partial(dv, 0.8, 200) - dv).norm() < 1e-12);
    CHECK(total_impact_partial(dv, 0.8, 0) == Vec3::Zero());
    CHECK_THROWS_AS(total_impact_partial(dv, 0.8, -1), UsageError);
}

TEST_CASE("impact_trace examples") {
    const Vec3 dv(1.0, 0.0, 0.0);
    const std::vector<Vec3> t = impact_trace(dv, 0.8, 3, 3);
    REQUIRE(t.size() == 3);
    CHECK(t[0][0] == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(t[1][0] == doctest::Approx(0.16).epsilon(1e-15));
    CHECK(t[2][0] == doctest::Approx(0.128).epsilon(1e-15));

    for (const double lg : {0.5, 0.8, 0.9}) {
        const std::vector<Vec3> trace = impact_trace(dv, lg, 0, 500);
        Vec3 sum = Vec3::Zero();
        for (int l = 0; l < 500; ++l) {
            sum += trace[static_cast<std::size_t>(l)];
            CHECK((sum - total_impact_partial(dv, lg, l + 1)).norm() <= 1e-12);
        }
    }
    Vec3 totals[2];
    int k = 0;
    for (const double lg : {0.5, 0.9}) {
        Vec3 sum = Vec3::Zero();
        for (const Vec3& v : impact_trace(dv, lg, 0, 500)) sum += v;
        totals[k++] = sum;
    }
    CHECK((totals[0] - totals[1]).norm() < 1e-10);
    CHECK((totals[0] - dv).norm() < 1e-10);
}

TEST_CASE("field snapshot format") {
    VelocityField f2 = unit_grid(2, 0.8);
    f2.set_velocity({1, 0, 0}, Vec3(0.5, -0.25, 0));
    std::ostringstream o2;
    write_field_snapshot(o2, f2);
    CHECK(o2.str() == "1 0 0.5 -0.25\n");

    VelocityField f3(Vec3::Zero(), 1.0, {2, 2, 2}, 0.8, 3);
    f3.set_velocity({0, 1, 1}, Vec3(1, 2, 3));
    std::ostringstream o3;
    write_field_snapshot(o3, f3);
    CHECK(o3.str() == "0 1 1 1 2 3\n");
}

TEST_CASE("fixed point of repeated P2G matches the neighbour-averaged update") {
    const std::vector<double> diffs = run_fixed_point_check(10, 9, 0.8, 0.8);
    REQUIRE(diffs.size() == 10);
    for (const double d : diffs) CHECK(d <= 1e-12);
}
