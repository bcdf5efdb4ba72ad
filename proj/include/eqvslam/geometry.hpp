#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>

#include <Eigen/Dense>

#include "errors.hpp"

namespace eqvslam {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Tolerance for rotation orthonormality and antisymmetry checks.
inline constexpr double kOrthoTol = 1e-9;
/// Tolerance for unit-norm checks on bearings.
inline constexpr double kUnitTol = 1e-9;
/// Below this rotation angle the exponential switches to its Taylor branch.
inline constexpr double kSmallAngle = 1e-6;

inline bool is_finite(const Vec3& v) { return v.allFinite(); }

/// Matrix of the cross product: skew(w) * v == w.cross(v).
inline Mat3 skew(const Vec3& w)
{
    Mat3 m;
    m << 0.0, -w.z(), w.y(),
         w.z(), 0.0, -w.x(),
         -w.y(), w.x(), 0.0;
    return m;
}

/// Inverse of skew. Throws DomainError if `m` is not antisymmetric within kOrthoTol.
inline Vec3 unskew(const Mat3& m)
{
    if ((m + m.transpose()).norm() > kOrthoTol)
        throw DomainError("unskew: matrix is not antisymmetric");
    return Vec3(0.5 * (m(2, 1) - m(1, 2)), 0.5 * (m(0, 2) - m(2, 0)), 0.5 * (m(1, 0) - m(0, 1)));
}

/// Closest rotation in Frobenius norm (orthogonal polar factor with det +1).
inline Mat3 nearest_rotation(const Mat3& m)
{
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 u = svd.matrixU();
    const Mat3 v = svd.matrixV();
    if ((u * v.transpose()).determinant() < 0.0)
        u.col(2) *= -1.0;
    return u * v.transpose();
}

/// nearest_rotation for matrices already close to SO(3): Newton polar iteration
/// m <- (m + m^-T) / 2, falling back to the SVD when the input is far off.
inline Mat3 polish_rotation(const Mat3& m)
{
    if ((m.transpose() * m - Mat3::Identity()).norm() > 1e-2 || !(m.determinant() > 0.0))
        return nearest_rotation(m);
    Mat3 r = m;
    for (int it = 0; it < 6; ++it) {
        const Mat3 next = 0.5 * (r + r.inverse().transpose());
        const double change = (next - r).norm();
        r = next;
        if (change < 1e-15)
            break;
    }
    return r;
}

inline bool is_rotation(const Mat3& m, double tol = kOrthoTol)
{
    return m.allFinite() && (m * m.transpose() - Mat3::Identity()).norm() <= tol
           && std::abs(m.determinant() - 1.0) <= tol;
}

/// Element of SO(3) stored as a 3x3 matrix.
class Rotation
{
public:
    Rotation()
        : m_(Mat3::Identity())
    {
    }

    /// Wraps `m` without runtime validation (asserted in debug builds).
    explicit Rotation(const Mat3& m)
        : m_(m)
    {
        assert(is_rotation(m_, 1e-6));
    }

    /// Validating constructor for untrusted input.
    static Rotation checked(const Mat3& m)
    {
        if (!is_rotation(m))
            throw DomainError("matrix is not a rotation");
        return Rotation(m);
    }

    /// Re-projects `m` onto SO(3).
    static Rotation orthonormalized(const Mat3& m) { return Rotation(nearest_rotation(m)); }

    static Rotation identity() { return Rotation(); }

    const Mat3& matrix() const { return m_; }
    Rotation transpose() const { return Rotation(m_.transpose()); }
    Rotation inverse() const { return transpose(); }
    Rotation normalized() const { return Rotation(polish_rotation(m_)); }

    Rotation operator*(const Rotation& o) const { return Rotation(m_ * o.m_); }
    Vec3 operator*(const Vec3& v) const { return m_ * v; }

private:
    Mat3 m_;
};

/// Rigid-body velocity in the body frame: angular rate (rad/s) and linear velocity (m/s).
struct RigidVelocity
{
    Vec3 omega = Vec3::Zero();
    Vec3 velocity = Vec3::Zero();

    static RigidVelocity zero() { return {}; }

    Vec6 vector() const
    {
        Vec6 v;
        v << omega, velocity;
        return v;
    }
    static RigidVelocity from_vector(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }

    RigidVelocity operator+(const RigidVelocity& o) const { return {omega + o.omega, velocity + o.velocity}; }
    RigidVelocity operator-(const RigidVelocity& o) const { return {omega - o.omega, velocity - o.velocity}; }
    RigidVelocity operator*(double s) const { return {s * omega, s * velocity}; }
    bool is_finite() const { return omega.allFinite() && velocity.allFinite(); }
};

/// SO(3) exponential of dt * skew(omega) via Rodrigues' formula.
inline Rotation so3_exp(const Vec3& omega, double dt = 1.0)
{
    const Vec3 phi = omega * dt;
    const double theta2 = phi.squaredNorm();
    const double theta = std::sqrt(theta2);
    const Mat3 k = skew(phi);
    double a, b;
    if (theta < kSmallAngle) {
        a = 1.0 - theta2 / 6.0;
        b = 0.5 - theta2 / 24.0;
    } else {
        a = std::sin(theta) / theta;
        b = (1.0 - std::cos(theta)) / theta2;
    }
    return Rotation(Mat3::Identity() + a * k + b * k * k);
}

/// Rotation vector of `r` (inverse of so3_exp with dt = 1), angle in [0, pi].
inline Vec3 so3_log(const Rotation& r)
{
    const Mat3& m = r.matrix();
    const Vec3 axis_sin(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)); // 2 sin(theta) * axis
    const double c = 0.5 * (m.trace() - 1.0);
    const double theta = std::atan2(0.5 * axis_sin.norm(), c);
    if (theta < kSmallAngle)
        return 0.5 * (1.0 + theta * theta / 6.0) * axis_sin;
    if (M_PI - theta > 1e-3)
        return theta * axis_sin.normalized();

    // Near pi: axis a from the symmetric part c I + (1 - c) a a^T, sign from the antisymmetric part.
    const Mat3 aat = (0.5 * (m + m.transpose()) - c * Mat3::Identity()) / (1.0 - c);
    int col;
    aat.diagonal().maxCoeff(&col);
    Vec3 axis = aat.col(col).normalized();
    if (axis.dot(axis_sin) < 0.0)
        axis = -axis;
    return theta * axis;
}

/// Element of SE(3): x_world = R * x_body + translation.
struct Pose
{
    Rotation R;
    Vec3 x = Vec3::Zero();

    static Pose identity() { return {}; }

    Pose operator*(const Pose& o) const { return {R * o.R, R * o.x + x}; }
    Pose inverse() const { return {R.transpose(), -(R.matrix().transpose() * x)}; }
    /// Maps a point from this pose's frame into the parent frame.
    Vec3 transform(const Vec3& p) const { return R * p + x; }
    /// Expresses a parent-frame point in this pose's frame.
    Vec3 inverse_transform(const Vec3& p) const { return R.matrix().transpose() * (p - x); }
    Pose normalized() const { return {R.normalized(), x}; }

    Eigen::Matrix4d matrix() const
    {
        Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
        m.topLeftCorner<3, 3>() = R.matrix();
        m.topRightCorner<3, 1>() = x;
        return m;
    }
};

/// SE(3) exponential of dt * U, with U = (skew(omega), velocity).
inline Pose se3_exp(const RigidVelocity& u, double dt = 1.0)
{
    const Vec3 phi = u.omega * dt;
    const Vec3 rho = u.velocity * dt;
    const double theta2 = phi.squaredNorm();
    const double theta = std::sqrt(theta2);
    const Mat3 k = skew(phi);
    double b, c;
    if (theta < kSmallAngle) {
        b = 0.5 - theta2 / 24.0;
        c = 1.0 / 6.0 - theta2 / 120.0;
    } else {
        b = (1.0 - std::cos(theta)) / theta2;
        c = (theta - std::sin(theta)) / (theta2 * theta);
    }
    const Mat3 jac = Mat3::Identity() + b * k + c * k * k;
    return {so3_exp(u.omega, dt), jac * rho};
}

/// Ad_Q(W) = Q W Q^T on so(3) in matrix form.
inline Mat3 adjoint_rot(const Rotation& q, const Mat3& w)
{
    return q.matrix() * w * q.matrix().transpose();
}

/// Ad_A on se(3): (R omega, R v + x cross R omega).
inline RigidVelocity adjoint_pose(const Pose& a, const RigidVelocity& u)
{
    const Vec3 w = a.R * u.omega;
    return {w, a.R * u.velocity + a.x.cross(w)};
}

/// Direction in S^2.
class Bearing
{
public:
    Bearing()
        : y_(Vec3::UnitZ())
    {
    }

    /// Wraps an already-unit vector (asserted in debug builds).
    explicit Bearing(const Vec3& unit)
        : y_(unit)
    {
        assert(std::abs(y_.norm() - 1.0) <= 1e-6);
    }

    /// Throws DomainError unless |v| = 1 within kUnitTol.
    static Bearing checked(const Vec3& v)
    {
        if (!v.allFinite() || std::abs(v.norm() - 1.0) > kUnitTol)
            throw DomainError("bearing is not unit norm");
        return Bearing(v);
    }

    /// Normalizes a non-zero vector.
    static Bearing normalize(const Vec3& v)
    {
        const double n = v.norm();
        if (!(n > 0.0) || !std::isfinite(n))
            throw DomainError("cannot normalize a zero or non-finite vector");
        return Bearing(v / n);
    }

    const Vec3& vector() const { return y_; }
    double dot(const Bearing& o) const { return y_.dot(o.y_); }
    Bearing operator-() const { return Bearing(-y_); }

private:
    Vec3 y_;
};

inline Bearing operator*(const Rotation& r, const Bearing& b) { return Bearing(r.matrix() * b.vector()); }

/// Orthogonal projector I - y y^T onto the tangent plane at y.
inline Mat3 projector(const Bearing& y)
{
    return Mat3::Identity() - y.vector() * y.vector().transpose();
}

/// Angle between two bearings in [0, pi], accurate near 0.
inline double angle_between(const Bearing& a, const Bearing& b)
{
    return std::atan2(a.vector().cross(b.vector()).norm(), a.dot(b));
}

} // namespace eqvslam
