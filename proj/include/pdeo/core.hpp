#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pdeo {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Error taxonomy shared by every module.
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};
struct OverflowError : std::overflow_error {
    using std::overflow_error::overflow_error;
};
struct SingularityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct UsageError : std::logic_error {
    using std::logic_error::logic_error;
};

/// Scene dimensionality. image2d fits a flat image with 2D Gaussians;
/// ortho3d renders 3D Gaussians through orthographic line integrals.
enum class Mode { image2d, ortho3d };

constexpr int dims_of(Mode mode) { return mode == Mode::image2d ? 2 : 3; }
const char* to_string(Mode mode);
Mode mode_from_string(const std::string& text);

/// Smallest activated scale accepted by density evaluation.
inline constexpr double kMinScale = 1e-12;

/// One primitive's raw (pre-activation) learnable attributes.
///
/// Vectors are always 3-wide; in image2d mode the third component of
/// `mu` and `log_scale` is unused and kept at zero. `angle` is the
/// learnable in-plane rotation for image2d; `rot` is the fixed orthonormal
/// frame used in ortho3d. `depth_key` orders image2d blending and is never
/// touched by optimization.
struct RawGaussian {
    Vec3 mu = Vec3::Zero();
    Vec3 color = Vec3::Zero();
    double opacity_logit = 0.0;
    Vec3 log_scale = Vec3::Zero();
    double angle = 0.0;
    Mat3 rot = Mat3::Identity();
    double depth_key = 0.0;
};

struct Aabb {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Ones();

    Vec3 extent() const { return hi - lo; }
    Vec3 center() const { return 0.5 * (lo + hi); }
    /// Box grown by `fraction` of its extent on every side.
    Aabb expanded(double fraction) const;
    bool contains(const Vec3& p, int dim) const;
};

struct Scene {
    Mode mode = Mode::image2d;
    Aabb bbox;
    std::vector<RawGaussian> gaussians;

    int dim() const { return dims_of(mode); }
    std::size_t size() const { return gaussians.size(); }
    /// Diagonal length of the bounding box over the active axes.
    double diagonal() const;
    /// Largest bounding-box side over the active axes.
    double extent() const;
};

/// Orthographic camera. Pixel (row, col) shoots a ray along `view_dir`
/// from `center + ((col + 0.5) - width/2) * pixel_scale * basis_u
///              + ((row + 0.5) - height/2) * pixel_scale * basis_v`.
struct CameraOrtho {
    Vec3 view_dir = Vec3::UnitZ();
    Vec3 basis_u = Vec3::UnitX();
    Vec3 basis_v = Vec3::UnitY();
    Vec3 center = Vec3::Zero();
    int width = 0;
    int height = 0;
    double pixel_scale = 1.0;

    Vec3 ray_origin(int row, int col) const;
};

/// Builds an orthonormal camera looking along `view_dir` with `up` as the
/// approximate vertical axis.
CameraOrtho make_camera(const Vec3& view_dir, const Vec3& up, const Vec3& center, int width, int height,
                        double pixel_scale);

/// Throws DomainError when the camera frame is not orthonormal to 1e-12.
void validate_camera(const CameraOrtho& cam);

double activate_opacity(double logit);
/// Inverse of activate_opacity; argument must lie in (0, 1).
double opacity_logit(double opacity);
/// Componentwise exp over the first `dim` components; the rest are zero.
Vec3 activate_scale(const Vec3& log_scale, int dim);
/// Largest activated scale component.
double max_scale(const RawGaussian& g, int dim);

/// Rotation taking local coordinates to world coordinates.
Mat3 rotation_of(const RawGaussian& g, Mode mode);
Mat3 rotation_2d(double angle);

/// exp(-1/2 (x - mu)^T Sigma^-1 (x - mu)) with Sigma = R S S^T R^T.
double eval_gaussian(const RawGaussian& g, Mode mode, const Vec3& x);

/// Stable 64-bit FNV-1a hash over every stored bit of the scene.
std::uint64_t checksum(const Scene& scene);

}  // namespace pdeo
