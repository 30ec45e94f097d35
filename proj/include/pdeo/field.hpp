#pragma once

#include "pdeo/core.hpp"

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace pdeo {

using VoxelIndex = std::array<int, 3>;

/// Regular voxel grid of velocity vectors with decay coefficient lambda_g.
/// In image2d mode dims[2] == 1 and the third velocity component stays zero.
class VelocityField {
public:
    VelocityField() = default;
    VelocityField(const Vec3& origin, double cell_size, VoxelIndex dims, double lambda_g, int dim = 3);

    /// Grid covering `bbox` grown by 10%, with cell size diagonal / cells_per_axis.
    static VelocityField covering(const Aabb& bbox, int dim, int cells_per_axis, double lambda_g);

    const Vec3& origin() const { return origin_; }
    double cell_size() const { return cell_size_; }
    const VoxelIndex& dims() const { return dims_; }
    int dim() const { return dim_; }
    double lambda_g() const { return lambda_g_; }
    std::size_t voxel_count() const { return velocities_.size(); }

    /// floor((pos - origin) / cell_size) per axis, clamped into the grid.
    VoxelIndex voxel_index(const Vec3& pos) const;
    std::size_t flat_index(const VoxelIndex& v) const;
    VoxelIndex unflatten(std::size_t flat) const;

    const Vec3& velocity(const VoxelIndex& v) const { return velocities_[flat_index(v)]; }
    const Vec3& velocity_at(const Vec3& pos) const { return velocities_[flat_index(voxel_index(pos))]; }
    void set_velocity(const VoxelIndex& v, const Vec3& value);
    std::span<const Vec3> velocities() const { return velocities_; }
    std::span<Vec3> velocities_mut() { return velocities_; }

    double max_norm() const;
    bool operator==(const VelocityField& other) const = default;

private:
    Vec3 origin_ = Vec3::Zero();
    double cell_size_ = 1.0;
    VoxelIndex dims_{1, 1, 1};
    int dim_ = 3;
    double lambda_g_ = 0.8;
    std::vector<Vec3> velocities_ = std::vector<Vec3>(1, Vec3::Zero());
};

/// Particle-to-grid transfer:
///   v_n' = lambda_g v_n + (1 - lambda_g) mean_{i in R_n} du_i,
/// and v_n' = lambda_g v_n for voxels with no particles.
VelocityField p2g_update(const VelocityField& field, std::span<const Vec3> positions, std::span<const Vec3> updates);

/// Grid-to-particle blend: lambda_p du + (1 - lambda_p) v_n.
Vec3 g2p_blend(const Vec3& update, const Vec3& voxel_velocity, double lambda_p);

/// Accumulated contribution of one injected mean update after L steps:
///   dv (1 - lambda_g) sum_{k=1..L} lambda_g^{k-1} = dv (1 - lambda_g^L).
Vec3 total_impact_partial(const Vec3& dv, double lambda_g, int steps);

/// Per-step share of an update injected at step `inject_step`, obtained by
/// running the field recursion on a one-voxel grid. Entry k holds the share
/// added to the field at step inject_step + k, for k in [0, horizon).
std::vector<Vec3> impact_trace(const Vec3& dv, double lambda_g, int inject_step, int horizon);

/// Text snapshot: one line per voxel with a nonzero velocity,
/// `ix iy [iz] vx vy [vz]`.
void write_field_snapshot(std::ostream& out, const VelocityField& field);

}  // namespace pdeo
