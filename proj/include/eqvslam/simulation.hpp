#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "vslam_group.hpp"

namespace eqvslam {

enum class TrajectoryKind
{
    Circle,   ///< constant body velocity
    Schedule, ///< piecewise-constant body velocity
};

enum class LandmarkPlacement
{
    GroundPlane, ///< (N(0, sigma^2), N(0, sigma^2), 0)
    Explicit,
};

struct VelocitySegment
{
    double t_start = 0.0;
    RigidVelocity U;
};

struct ScenarioConfig
{
    TrajectoryKind trajectory = TrajectoryKind::Circle;
    RigidVelocity velocity;                 ///< circle velocity
    std::vector<VelocitySegment> schedule;  ///< sorted by t_start
    Pose initial_pose;
    LandmarkPlacement placement = LandmarkPlacement::GroundPlane;
    std::size_t landmark_count = 5;
    double landmark_sigma = 5.0;
    std::vector<Vec3> landmarks;            ///< explicit placement
    double noise_sigma = 0.0;               ///< bearing noise (rad)
    double duration = 60.0;
    std::uint64_t seed = 1;

    void validate() const
    {
        if (!(duration >= 0.0) || !std::isfinite(duration))
            throw DomainError("scenario: duration must be non-negative");
        if (!(noise_sigma >= 0.0))
            throw DomainError("scenario: noise_sigma must be non-negative");
        if (trajectory == TrajectoryKind::Schedule && schedule.empty())
            throw DomainError("scenario: velocity schedule is empty");
        for (std::size_t i = 1; i < schedule.size(); ++i)
            if (!(schedule[i].t_start > schedule[i - 1].t_start))
                throw DomainError("scenario: schedule start times must be strictly increasing");
        if (placement == LandmarkPlacement::Explicit && landmarks.empty())
            throw DomainError("scenario: explicit placement without landmarks");
    }

    /// Body velocity at time t.
    RigidVelocity velocity_at(double t) const
    {
        if (trajectory == TrajectoryKind::Circle)
            return velocity;
        RigidVelocity u = schedule.front().U;
        for (const auto& seg : schedule)
            if (seg.t_start <= t)
                u = seg.U;
        return u;
    }
};

/// Circle flight over five ground-plane landmarks: the vehicle starts at (3, 3, 5) m
/// aligned with the inertial frame and flies at Omega = (0, 0, 0.5) rad/s, V = (1.5, 0, 0) m/s.
inline ScenarioConfig scenario_paper_sim(std::uint64_t seed = 1)
{
    ScenarioConfig c;
    c.trajectory = TrajectoryKind::Circle;
    c.velocity = {Vec3(0.0, 0.0, 0.5), Vec3(1.5, 0.0, 0.0)};
    c.initial_pose = {Rotation::identity(), Vec3(3.0, 3.0, 5.0)};
    c.placement = LandmarkPlacement::GroundPlane;
    c.landmark_count = 5;
    c.landmark_sigma = 5.0;
    c.noise_sigma = 0.0;
    c.duration = 60.0;
    c.seed = seed;
    return c;
}

/// Independent random streams derived from the scenario seed.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    return std::mt19937_64(seq);
}

inline std::vector<Vec3> sample_landmarks(const ScenarioConfig& c)
{
    if (c.placement == LandmarkPlacement::Explicit)
        return c.landmarks;
    auto rng = make_rng(c.seed, 0);
    std::normal_distribution<double> n(0.0, c.landmark_sigma);
    std::vector<Vec3> out;
    out.reserve(c.landmark_count);
    for (std::size_t i = 0; i < c.landmark_count; ++i) {
        const double px = n(rng);
        const double py = n(rng);
        out.emplace_back(px, py, 0.0);
    }
    return out;
}

inline TotalState initial_world(const ScenarioConfig& c) { return {c.initial_pose, sample_landmarks(c)}; }

/// Exact flow of dP/dt = P U over dt for constant U; landmarks are static.
inline TotalState true_step(const TotalState& xi, const RigidVelocity& u, double dt)
{
    return {(xi.P * se3_exp(u, dt)).normalized(), xi.landmarks};
}

/// Rotates `y` by an angle ~ N(0, sigma^2) about a uniformly random axis orthogonal to it.
template <typename Rng>
Bearing perturb_bearing(const Bearing& y, double sigma, Rng& rng)
{
    if (sigma == 0.0)
        return y;
    std::normal_distribution<double> n(0.0, 1.0);
    Vec3 axis;
    do {
        axis = y.vector().cross(Vec3(n(rng), n(rng), n(rng)));
    } while (axis.norm() < 1e-8);
    axis.normalize();
    const double angle = sigma * n(rng);
    return Bearing::normalize(so3_exp(axis, angle) * y.vector());
}

template <typename Rng>
OutputVector measure(const TotalState& xi, double sigma, Rng& rng)
{
    OutputVector y = output(xi);
    for (auto& b : y)
        b = perturb_bearing(b, sigma, rng);
    return y;
}

struct WorldState
{
    TotalState xi;
    double t = 0.0;
};

} // namespace eqvslam
