#include "pdeo/field.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace pdeo {

VelocityField::VelocityField(const Vec3& origin, double cell_size, VoxelIndex dims, double lambda_g, int dim)
    : origin_(origin), cell_size_(cell_size), dims_(dims), dim_(dim), lambda_g_(lambda_g) {
    if (!(cell_size > 0.0) || !std::isfinite(cell_size)) throw ConfigError("cell_size must be positive");
    if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) throw ConfigError("field dims must be at least 1");
    if (dim == 2 && dims[2] != 1) throw ConfigError("2D field must have a single layer");
    if (!(lambda_g >= 0.0 && lambda_g <= 1.0)) throw ConfigError("lambda_g must lie in [0, 1]");
    velocities_.assign(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], Vec3::Zero());
}

VelocityField VelocityField::covering(const Aabb& bbox, int dim, int cells_per_axis, double lambda_g) {
    const Aabb box = bbox.expanded(0.1);
    const Vec3 extent = box.extent();
    const double cell = bbox.extent().head(dim).norm() / cells_per_axis;
    VoxelIndex dims{1, 1, 1};
    for (int a = 0; a < dim; ++a) dims[a] = std::max(1, static_cast<int>(std::ceil(extent[a] / cell)));
    Vec3 origin = box.lo;
    if (dim == 2) origin[2] = 0.0;
    return VelocityField(origin, cell, dims, lambda_g, dim);
}

VoxelIndex VelocityField::voxel_index(const Vec3& pos) const {
    VoxelIndex v{0, 0, 0};
    for (int a = 0; a < dim_; ++a) {
        const double f = std::floor((pos[a] - origin_[a]) / cell_size_);
        const double clamped = std::clamp(f, 0.0, static_cast<double>(dims_[a] - 1));
        v[a] = std::isfinite(clamped) ? static_cast<int>(clamped) : 0;
    }
    return v;
}

std::size_t VelocityField::flat_index(const VoxelIndex& v) const {
    return (static_cast<std::size_t>(v[2]) * dims_[1] + v[1]) * dims_[0] + v[0];
}

VoxelIndex VelocityField::unflatten(std::size_t flat) const {
    VoxelIndex v;
    v[0] = static_cast<int>(flat % dims_[0]);
    flat /= dims_[0];
    v[1] = static_cast<int>(flat % dims_[1]);
    v[2] = static_cast<int>(flat / dims_[1]);
    return v;
}

void VelocityField::set_velocity(const VoxelIndex& v, const Vec3& value) {
    if (!value.allFinite()) throw DomainError("voxel velocity must be finite");
    velocities_[flat_index(v)] = value;
}

double VelocityField::max_norm() const {
    double m = 0.0;
    for (const auto& v : velocities_) m = std::max(m, v.norm());
    return m;
}

VelocityField p2g_update(const VelocityField& field, std::span<const Vec3> positions, std::span<const Vec3> updates) {
    if (positions.size() != updates.size()) throw UsageError("p2g_update: positions and updates differ in length");
    const std::size_t n_vox = field.voxel_count();
    std::vector<Vec3> sums(n_vox, Vec3::Zero());
    std::vector<std::size_t> counts(n_vox, 0);
    for (std::size_t i = 0; i < positions.size(); ++i) {
        if (!updates[i].allFinite()) throw DomainError("p2g_update: particle update is not finite");
        const std::size_t v = field.flat_index(field.voxel_index(positions[i]));
        sums[v] += updates[i];
        ++counts[v];
    }
    VelocityField out = field;
    const double lg = field.lambda_g();
    auto vel = out.velocities_mut();
    for (std::size_t v = 0; v < n_vox; ++v) {
        if (counts[v] == 0) {
            vel[v] = lg * vel[v];
        } else {
            vel[v] = lg * vel[v] + (1.0 - lg) * (sums[v] / static_cast<double>(counts[v]));
        }
    }
    return out;
}

Vec3 g2p_blend(const Vec3& update, const Vec3& voxel_velocity, double lambda_p) {
    return lambda_p * update + (1.0 - lambda_p) * voxel_velocity;
}

Vec3 total_impact_partial(const Vec3& dv, double lambda_g, int steps) {
    if (steps < 0) throw UsageError("total_impact_partial: step count must be non-negative");
    return dv * (1.0 - std::pow(lambda_g, steps));
}

std::vector<Vec3> impact_trace(const Vec3& dv, double lambda_g, int inject_step, int horizon) {
    if (inject_step < 0 || horizon < 0) throw UsageError("impact_trace: negative step");
    VelocityField field(Vec3::Zero(), 1.0, {1, 1, 1}, lambda_g, 3);
    const std::vector<Vec3> here{Vec3::Zero()};
    std::vector<Vec3> trace;
    trace.reserve(static_cast<std::size_t>(horizon));
    const int last = inject_step + horizon;
    for (int step = 0; step < last; ++step) {
        if (step == inject_step) {
            const std::vector<Vec3> upd{dv};
            field = p2g_update(field, here, upd);
        } else {
            field = p2g_update(field, {}, {});
        }
        if (step >= inject_step) trace.push_back(field.velocities()[0]);
    }
    return trace;
}

void write_field_snapshot(std::ostream& out, const VelocityField& field) {
    char buf[64];
    const int dim = field.dim();
    for (std::size_t flat = 0; flat < field.voxel_count(); ++flat) {
        const Vec3& v = field.velocities()[flat];
        if (v.isZero(0.0)) continue;
        const VoxelIndex idx = field.unflatten(flat);
        out << idx[0] << ' ' << idx[1];
        if (dim == 3) out << ' ' << idx[2];
        for (int a = 0; a < dim; ++a) {
            std::snprintf(buf, sizeof buf, " %.9g", v[a]);
            out << buf;
        }
        out << '\n';
    }
}

}  // namespace pdeo
