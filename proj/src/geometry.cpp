#include "bp/geometry.hpp"

#include <cmath>
#include <numbers>

#include "bp/errors.hpp"

namespace bp::geometry {

Mat3 project(const Vec3& g) {
    const double n = g.norm();
    if (!(n > kEpsNorm)) {
        throw DegenerateVector("project: vector norm below threshold");
    }
    const Vec3 u = g / n;
    return Mat3::Identity() - u * u.transpose();
}

Vec3 bearing(const Vec3& from, const Vec3& to) {
    const Vec3 d = to - from;
    const double n = d.norm();
    if (!(n > kEpsNorm)) {
        throw DegenerateVector("bearing: coincident points");
    }
    return d / n;
}

Mat2 rotation2d(double theta) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    Mat2 r;
    r << c, -s,
         s,  c;
    return r;
}

double wrap_angle(double theta) {
    constexpr double pi = std::numbers::pi;
    double w = std::remainder(theta, 2.0 * pi);  // [-pi, pi]
    if (w <= -pi) {
        w += 2.0 * pi;
    }
    return w;
}

Mat3 pinv_psd(const Mat3& m) {
    const double scale = m.cwiseAbs().maxCoeff();
    if (scale == 0.0) {
        return Mat3::Zero();
    }
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol * scale) {
        throw NotSymmetric("pinv_psd: matrix is not symmetric");
    }
    const Eigen::SelfAdjointEigenSolver<Mat3> eig(0.5 * (m + m.transpose()));
    const Vec3& lambda = eig.eigenvalues();
    const double cutoff = kEpsPinv * lambda.cwiseAbs().maxCoeff();
    Vec3 inv = Vec3::Zero();
    for (int i = 0; i < 3; ++i) {
        if (lambda(i) > cutoff) {
            inv(i) = 1.0 / lambda(i);
        }
    }
    const Mat3& v = eig.eigenvectors();
    return v * inv.asDiagonal() * v.transpose();
}

}  // namespace bp::geometry
