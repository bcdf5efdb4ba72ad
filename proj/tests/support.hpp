#pragma once

#include <random>

#include "eqvslam/vslam_group.hpp"

namespace eqvslam::test {

using Rng = std::mt19937_64;

inline Vec3 random_vec(Rng& rng, double scale = 1.0)
{
    std::normal_distribution<double> n(0.0, scale);
    return Vec3(n(rng), n(rng), n(rng));
}

inline Bearing random_bearing(Rng& rng)
{
    Vec3 v;
    do {
        v = random_vec(rng);
    } while (v.norm() < 1e-3);
    return Bearing::normalize(v);
}

/// Uniform rotation from a normalised Gaussian quaternion; independent of so3_exp.
inline Rotation random_rotation(Rng& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    return Rotation::orthonormalized(q.toRotationMatrix());
}

inline Pose random_pose(Rng& rng, double spread = 3.0) { return {random_rotation(rng), random_vec(rng, spread)}; }

inline RigidVelocity random_velocity(Rng& rng, double scale = 1.0)
{
    return {random_vec(rng, scale), random_vec(rng, scale)};
}

inline GroupElement random_group(Rng& rng, std::size_t n)
{
    std::uniform_real_distribution<double> la(-1.0, 1.0);
    GroupElement x{random_pose(rng), {}};
    for (std::size_t i = 0; i < n; ++i)
        x.landmarks.push_back({random_rotation(rng), std::exp(la(rng))});
    return x;
}

/// Random configuration with every landmark at least `min_range` from the pose.
inline TotalState random_state(Rng& rng, std::size_t n, double min_range = 0.5)
{
    TotalState xi{random_pose(rng), {}};
    while (xi.landmarks.size() < n) {
        const Vec3 p = random_vec(rng, 5.0);
        if ((p - xi.P.x).norm() > min_range)
            xi.landmarks.push_back(p);
    }
    return xi;
}

inline double max_diff(const TotalState& a, const TotalState& b)
{
    double d = std::max((a.P.R.matrix() - b.P.R.matrix()).cwiseAbs().maxCoeff(), (a.P.x - b.P.x).cwiseAbs().maxCoeff());
    for (std::size_t i = 0; i < a.size(); ++i)
        d = std::max(d, (a.landmarks[i] - b.landmarks[i]).cwiseAbs().maxCoeff());
    return d;
}

inline double max_diff(const GroupElement& a, const GroupElement& b)
{
    double d = std::max((a.A.R.matrix() - b.A.R.matrix()).cwiseAbs().maxCoeff(), (a.A.x - b.A.x).cwiseAbs().maxCoeff());
    for (std::size_t i = 0; i < a.size(); ++i) {
        d = std::max(d, (a.landmarks[i].Q.matrix() - b.landmarks[i].Q.matrix()).cwiseAbs().maxCoeff());
        d = std::max(d, std::abs(a.landmarks[i].a - b.landmarks[i].a));
    }
    return d;
}

inline double max_diff(const OutputVector& a, const OutputVector& b)
{
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        d = std::max(d, (a[i].vector() - b[i].vector()).cwiseAbs().maxCoeff());
    return d;
}

} // namespace eqvslam::test
