#ifndef BP_GEOMETRY_HPP_
#define BP_GEOMETRY_HPP_

#include <Eigen/Dense>

namespace bp {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat63 = Eigen::Matrix<double, 6, 3>;

namespace geometry {

/// Norms at or below this are treated as zero-length (meters).
inline constexpr double kEpsNorm = 1e-9;
/// Pseudo-inverse eigenvalue cutoff, relative to the largest eigenvalue.
inline constexpr double kEpsPinv = 1e-9;
/// Relative asymmetry tolerated by pinv_psd.
inline constexpr double kSymmetryTol = 1e-9;

/**
 * @brief Orthogonal projector onto the plane perpendicular to @p g.
 *
 * P_g = I - (g/|g|)(g/|g|)^T. Symmetric, idempotent, and P_g g = 0.
 * Throws DegenerateVector when |g| <= kEpsNorm.
 */
Mat3 project(const Vec3& g);

/// Unit vector pointing from @p from to @p to. Throws DegenerateVector on coincident points.
Vec3 bearing(const Vec3& from, const Vec3& to);

/// Planar rotation taking body-frame vectors to the inertial frame.
Mat2 rotation2d(double theta);

/// Wraps an angle to (-pi, pi].
double wrap_angle(double theta);

/**
 * @brief Moore-Penrose pseudo-inverse of a symmetric positive semidefinite 3x3 matrix.
 *
 * Eigenvalues below kEpsPinv times the largest are treated as zero. Throws
 * NotSymmetric when |M - M^T| exceeds kSymmetryTol relative to |M|.
 */
Mat3 pinv_psd(const Mat3& m);

/// Lifts a planar vector into 3D with z = 0.
inline Vec3 lift(const Vec2& v) { return {v.x(), v.y(), 0.0}; }

inline bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m) { return m.allFinite(); }

}  // namespace geometry
}  // namespace bp

#endif  // BP_GEOMETRY_HPP_
