#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "geometry.hpp"

namespace eqvslam {

/// Floor on |q_i| guarding the divisions of the lift.
inline constexpr double kMinRange = 1e-6;

/// Per-landmark factor (Q_i, a_i) of SO(3) x MR(1).
struct LandmarkFactor
{
    Rotation Q;
    double a = 1.0;
};

/// Element of VSLAM_n(3) = SE(3) x (SO(3) x MR(1))^n.
struct GroupElement
{
    Pose A;
    std::vector<LandmarkFactor> landmarks;

    std::size_t size() const { return landmarks.size(); }
};

/// Per-landmark component (W_i, w_i) of the Lie algebra; W_i is kept in vector form.
struct LandmarkRate
{
    Vec3 W = Vec3::Zero();
    double w = 0.0;

    Mat3 W_matrix() const { return skew(W); }
};

/// Element of vslam_n(3).
struct AlgebraElement
{
    RigidVelocity U;
    std::vector<LandmarkRate> landmarks;

    std::size_t size() const { return landmarks.size(); }
};

/// Configuration (P, p_1..p_n) on the total space.
struct TotalState
{
    Pose P;
    std::vector<Vec3> landmarks;

    std::size_t size() const { return landmarks.size(); }

    /// q_i = R_P^T (p_i - x_P).
    Vec3 ego_centric(std::size_t i) const { return P.inverse_transform(landmarks[i]); }
    double range(std::size_t i) const { return (landmarks[i] - P.x).norm(); }
};

using OutputVector = std::vector<Bearing>;

namespace detail {
inline void require_same_size(std::size_t a, std::size_t b, const char* what)
{
    if (a != b)
        throw DomainError(std::string(what) + ": landmark count mismatch");
}
} // namespace detail

inline GroupElement group_identity(std::size_t n)
{
    return {Pose::identity(), std::vector<LandmarkFactor>(n)};
}

/// Componentwise product (A1 A2, (Q1_i Q2_i, a1_i a2_i)).
inline GroupElement multiply(const GroupElement& x1, const GroupElement& x2)
{
    detail::require_same_size(x1.size(), x2.size(), "multiply");
    GroupElement out{x1.A * x2.A, {}};
    out.landmarks.reserve(x1.size());
    for (std::size_t i = 0; i < x1.size(); ++i)
        out.landmarks.push_back({x1.landmarks[i].Q * x2.landmarks[i].Q, x1.landmarks[i].a * x2.landmarks[i].a});
    return out;
}

inline GroupElement operator*(const GroupElement& x1, const GroupElement& x2) { return multiply(x1, x2); }

inline GroupElement inverse(const GroupElement& x)
{
    GroupElement out{x.A.inverse(), {}};
    out.landmarks.reserve(x.size());
    for (const auto& f : x.landmarks)
        out.landmarks.push_back({f.Q.transpose(), 1.0 / f.a});
    return out;
}

/// Componentwise exponential of dt * v: SE(3), SO(3) and scalar exponentials.
inline GroupElement group_exp(const AlgebraElement& v, double dt = 1.0)
{
    GroupElement out{se3_exp(v.U, dt), {}};
    out.landmarks.reserve(v.size());
    for (const auto& r : v.landmarks)
        out.landmarks.push_back({so3_exp(r.W, dt), std::exp(r.w * dt)});
    return out;
}

/// Projects every rotation factor back onto SO(3).
inline GroupElement normalized(const GroupElement& x)
{
    GroupElement out{x.A.normalized(), {}};
    out.landmarks.reserve(x.size());
    for (const auto& f : x.landmarks)
        out.landmarks.push_back({f.Q.normalized(), f.a});
    return out;
}

/// Right action on the total space:
/// (P A, a_i^-1 R_{PA} Q_i^T R_P^T (p_i - x_P) + x_{PA}).
inline TotalState action_state(const GroupElement& x, const TotalState& xi)
{
    detail::require_same_size(x.size(), xi.size(), "action_state");
    TotalState out{xi.P * x.A, {}};
    out.landmarks.reserve(xi.size());
    for (std::size_t i = 0; i < xi.size(); ++i) {
        const auto& f = x.landmarks[i];
        const Vec3 q = f.Q.matrix().transpose() * xi.ego_centric(i) / f.a;
        out.landmarks.push_back(out.P.transform(q));
    }
    return out;
}

/// Right action on outputs: y_i -> Q_i^T y_i.
inline OutputVector action_output(const GroupElement& x, const OutputVector& y)
{
    detail::require_same_size(x.size(), y.size(), "action_output");
    OutputVector out;
    out.reserve(y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
        out.push_back(x.landmarks[i].Q.transpose() * y[i]);
    return out;
}

/// Body-frame bearing of landmark i. Throws DomainError on co-location.
inline Bearing output_bearing(const TotalState& xi, std::size_t i)
{
    const Vec3 q = xi.ego_centric(i);
    if (!(q.norm() > kMinRange))
        throw DomainError("output: landmark " + std::to_string(i) + " co-located with the robot");
    return Bearing::normalize(q);
}

/// Output map h: body-frame bearings to every landmark.
inline OutputVector output(const TotalState& xi)
{
    OutputVector y;
    y.reserve(xi.size());
    for (std::size_t i = 0; i < xi.size(); ++i)
        y.push_back(output_bearing(xi, i));
    return y;
}

/// Lift components for one ego-centric landmark q:
/// W = Omega + q x V / |q|^2, w = q^T V / |q|^2.
inline LandmarkRate lift_landmark(const Vec3& q, const RigidVelocity& u)
{
    const double q2 = q.squaredNorm();
    if (!(q2 >= kMinRange * kMinRange))
        throw DomainError("lift: landmark closer than the minimum range");
    return {u.omega + q.cross(u.velocity) / q2, q.dot(u.velocity) / q2};
}

/// Kinematic lift Lambda(xi, U) into vslam_n(3).
inline AlgebraElement lift(const TotalState& xi, const RigidVelocity& u)
{
    AlgebraElement out{u, {}};
    out.landmarks.reserve(xi.size());
    for (std::size_t i = 0; i < xi.size(); ++i)
        out.landmarks.push_back(lift_landmark(xi.ego_centric(i), u));
    return out;
}

/// Max componentwise defect between the central finite difference of
/// s -> action_state(exp(s Lambda), xi) at s = 0 and the system vector field (P U, 0).
inline double lift_condition_check(const TotalState& xi, const RigidVelocity& u, double h)
{
    if (!(h > 0.0))
        throw DomainError("lift_condition_check: step must be positive");
    const AlgebraElement lam = lift(xi, u);
    const TotalState plus = action_state(group_exp(lam, h), xi);
    const TotalState minus = action_state(group_exp(lam, -h), xi);

    const Mat3 dR = (plus.P.R.matrix() - minus.P.R.matrix()) / (2.0 * h);
    const Vec3 dx = (plus.P.x - minus.P.x) / (2.0 * h);
    double defect = (dR - xi.P.R.matrix() * skew(u.omega)).cwiseAbs().maxCoeff();
    defect = std::max(defect, (dx - xi.P.R * u.velocity).cwiseAbs().maxCoeff());
    for (std::size_t i = 0; i < xi.size(); ++i) {
        const Vec3 dp = (plus.landmarks[i] - minus.landmarks[i]) / (2.0 * h);
        defect = std::max(defect, dp.cwiseAbs().maxCoeff());
    }
    return defect;
}

} // namespace eqvslam
