#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "lie_integrators.hpp"
#include "vslam_group.hpp"

namespace eqvslam {

using LandmarkId = std::int64_t;

/// Guard on 1 + delta^T origin_bearing below which a landmark is in the exception set.
inline constexpr double kAntipodeTol = 1e-9;

struct LandmarkGains
{
    double k = 5.0;     ///< bearing gain
    double alpha = 500.0; ///< depth gain
    double kappa = 1.0; ///< weight in the pose least-squares problem
};

struct ObserverConfig
{
    LandmarkGains gains;
    double r_lower = 0.1; ///< assumed lower bound on true landmark range (m)
    double k0 = 0.5;
    double dt = 0.033;
    Integrator integrator = Integrator::Euler;
    double condition_limit = 1e8; ///< largest accepted condition number of the pose normal matrix
    double initial_depth = 10.0;
    bool pose_innovation = true;
    bool landmark_innovation = true;
    int max_retries = 8;
    double local_tolerance = 0.0; ///< step-doubling error bound per (sub)step; 0 disables error control

    /// Barrier floor: min(k0, 1/2) * r_lower.
    double epsilon() const { return std::min(k0, 0.5) * r_lower; }

    void validate() const
    {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v))
                throw DomainError(std::string("observer config: ") + name + " must be positive");
        };
        positive(gains.k, "k");
        positive(gains.alpha, "alpha");
        positive(gains.kappa, "kappa");
        positive(r_lower, "r_lower");
        positive(k0, "k0");
        positive(dt, "dt");
        positive(condition_limit, "condition_limit");
        positive(initial_depth, "initial_depth");
        if (!(local_tolerance >= 0.0))
            throw DomainError("observer config: local_tolerance must be non-negative");
        if (max_retries < 0)
            throw DomainError("observer config: max_retries must be non-negative");
    }
};

struct LandmarkSlot
{
    LandmarkId id = 0;
    LandmarkGains gains;
};

/// Observer state: group estimate, origin configuration and the id registry.
struct ObserverState
{
    GroupElement X;
    TotalState origin;
    std::vector<LandmarkSlot> slots;
    bool wls_degenerate = false;

    std::size_t size() const { return slots.size(); }

    std::optional<std::size_t> index_of(LandmarkId id) const
    {
        for (std::size_t i = 0; i < slots.size(); ++i)
            if (slots[i].id == id)
                return i;
        return std::nullopt;
    }
};

/// Empty observer (n = 0) with the given origin pose.
inline ObserverState make_observer(const Pose& origin_pose = Pose::identity())
{
    return {group_identity(0), {origin_pose, {}}, {}, false};
}

/// Observer at X = id over an explicit origin configuration.
inline ObserverState make_observer(const TotalState& origin, std::span<const LandmarkId> ids, const ObserverConfig& cfg)
{
    detail::require_same_size(origin.size(), ids.size(), "make_observer");
    ObserverState s{group_identity(origin.size()), origin, {}, false};
    for (LandmarkId id : ids) {
        if (s.index_of(id))
            throw DomainError("make_observer: duplicate landmark id " + std::to_string(id));
        s.slots.push_back({id, cfg.gains});
    }
    for (std::size_t i = 0; i < origin.size(); ++i)
        if (!(origin.range(i) > kMinRange))
            throw DomainError("make_observer: origin landmark co-located with origin pose");
    return s;
}

/// Estimated configuration Upsilon(X, origin).
inline TotalState state_estimate(const ObserverState& s) { return action_state(s.X, s.origin); }

/// delta_i = rho(X^-1, y)_i = Q_i y_i.
inline std::vector<Bearing> output_error(const GroupElement& x, const OutputVector& y)
{
    detail::require_same_size(x.size(), y.size(), "output_error");
    std::vector<Bearing> delta;
    delta.reserve(y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
        delta.push_back(x.landmarks[i].Q * y[i]);
    return delta;
}

/// r_hat_i = |origin p_i - origin x_P| / a_i.
inline std::vector<double> estimated_ranges(const GroupElement& x, const TotalState& origin)
{
    detail::require_same_size(x.size(), origin.size(), "estimated_ranges");
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < r.size(); ++i)
        r[i] = origin.range(i) / x.landmarks[i].a;
    return r;
}

/// Barrier on the estimated range: (r - r_lower)^2 / ((r_lower - eps)^2 (r - eps)) below r_lower, else 0.
inline double barrier(double r_hat, double r_lower, double eps)
{
    if (!(r_hat > eps))
        throw BarrierViolation("estimated range " + std::to_string(r_hat) + " at or below barrier floor "
                               + std::to_string(eps));
    if (r_hat >= r_lower)
        return 0.0;
    const double d = r_lower - eps;
    return (r_hat - r_lower) * (r_hat - r_lower) / (d * d * (r_hat - eps));
}

inline double barrier(double r_hat, const ObserverConfig& cfg) { return barrier(r_hat, cfg.r_lower, cfg.epsilon()); }

/// Landmark innovation (Gamma_i, gamma_i); Gamma in vector form (Gamma_matrix = skew(Gamma)).
struct LandmarkInnovation
{
    Vec3 Gamma = Vec3::Zero();
    double gamma = 0.0;
};

/// Bearing and depth innovation of one landmark.
///
/// With c = delta^T y0 and v = Q_hat V_U:
///   Gamma = (delta^T v / (2 r) - (delta + y0)^T v / (r (1 + c)) - k) (delta x y0)
///   gamma = alpha / r^2 ((1 - c) / (2 (1 + c)) delta^T v - y0^T Pi_delta v / (1 + c)^2)
///         + (y0 - delta)^T v / r + alpha / r * barrier(r)
/// Throws ExceptionSetError when 1 + c <= kAntipodeTol.
inline LandmarkInnovation landmark_innovation(const Bearing& delta, const Bearing& origin_bearing, double r_hat,
                                              const Rotation& Q_hat, const Vec3& V, const LandmarkGains& g,
                                              double r_lower, double eps, std::size_t index = 0)
{
    const double beta = barrier(r_hat, r_lower, eps);
    const Vec3& d = delta.vector();
    const Vec3& y0 = origin_bearing.vector();
    const double c = d.dot(y0);
    const double one_plus_c = 1.0 + c;
    if (!(one_plus_c > kAntipodeTol))
        throw ExceptionSetError("landmark " + std::to_string(index) + " output error is antipodal", index);

    const Vec3 v = Q_hat * V;
    const double dv = d.dot(v);
    const double scale = dv / (2.0 * r_hat) - (d + y0).dot(v) / (r_hat * one_plus_c) - g.k;

    LandmarkInnovation out;
    out.Gamma = scale * d.cross(y0);
    const double tangential = y0.dot(projector(delta) * v);
    out.gamma = g.alpha / (r_hat * r_hat)
                    * ((1.0 - c) / (2.0 * one_plus_c) * dv - tangential / (one_plus_c * one_plus_c))
                + (y0 - d).dot(v) / r_hat + g.alpha / r_hat * beta;
    return out;
}

/// Result of the weighted least-squares pose innovation.
struct PoseInnovation
{
    RigidVelocity Delta;      ///< Ad_A(Omega_Delta, V_Delta), the se(3) innovation
    RigidVelocity body;       ///< (Omega_Delta, V_Delta)
    double condition = std::numeric_limits<double>::infinity();
    bool degenerate = true;
};

/// Minimises sum kappa_i |d/dt p_hat_i|^2 over Delta in se(3).
///
/// Per landmark the estimated point velocity is -Omega x q - V + b with
/// b = gamma q + Ad_{Q^T}(Gamma) q and q = a^-1 Q^T R_origin^T (p_origin - x_origin),
/// which gives the normal equations
///   sum kappa [[-q^x q^x, q^x], [-q^x, I]] (Omega, V) = sum kappa (q^x b, b).
/// When the normal matrix condition number exceeds the limit (halved while `was_degenerate`),
/// Delta = 0 is returned and flagged degenerate.
inline PoseInnovation pose_innovation(const GroupElement& X, const TotalState& origin,
                                      std::span<const LandmarkSlot> slots,
                                      std::span<const LandmarkInnovation> innov, const ObserverConfig& cfg,
                                      bool was_degenerate = false)
{
    detail::require_same_size(X.size(), innov.size(), "pose_innovation");
    detail::require_same_size(X.size(), slots.size(), "pose_innovation");
    PoseInnovation out;
    if (X.size() == 0)
        return out;

    Mat6 normal = Mat6::Zero();
    Vec6 rhs = Vec6::Zero();
    for (std::size_t i = 0; i < X.size(); ++i) {
        const auto& f = X.landmarks[i];
        const Vec3 q = f.Q.matrix().transpose() * origin.ego_centric(i) / f.a;
        const Mat3 qx = skew(q);
        const Vec3 b = innov[i].gamma * q + f.Q.matrix().transpose() * innov[i].Gamma.cross(f.Q.matrix() * q);
        const double kappa = slots[i].gains.kappa;
        normal.topLeftCorner<3, 3>() -= kappa * qx * qx;
        normal.topRightCorner<3, 3>() += kappa * qx;
        normal.bottomLeftCorner<3, 3>() -= kappa * qx;
        normal.bottomRightCorner<3, 3>() += kappa * Mat3::Identity();
        rhs.head<3>() += kappa * qx * b;
        rhs.tail<3>() += kappa * b;
    }

    const Mat6 sym = 0.5 * (normal + normal.transpose());
    const Eigen::SelfAdjointEigenSolver<Mat6> eig(sym, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    out.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    const double limit = was_degenerate ? 0.5 * cfg.condition_limit : cfg.condition_limit;
    if (!(out.condition <= limit))
        return out;

    out.degenerate = false;
    out.body = RigidVelocity::from_vector(sym.ldlt().solve(rhs));
    out.Delta = adjoint_pose(X.A, out.body);
    return out;
}

inline PoseInnovation pose_innovation(const ObserverState& s, std::span<const LandmarkInnovation> innov,
                                      const ObserverConfig& cfg, bool was_degenerate = false)
{
    return pose_innovation(s.X, s.origin, s.slots, innov, cfg, was_degenerate);
}

/// Pose and landmark innovations evaluated at one state.
struct Innovation
{
    RigidVelocity Delta;
    RigidVelocity Delta_body;
    std::vector<LandmarkInnovation> landmarks;
    double wls_condition = std::numeric_limits<double>::infinity();
    bool wls_degenerate = true;
};

/// Measurements for one instant; a missing bearing contributes no landmark innovation.
struct StepSample
{
    RigidVelocity U;
    std::vector<std::optional<Bearing>> y;
};

inline StepSample make_sample(const RigidVelocity& u, const OutputVector& y)
{
    StepSample s{u, {}};
    s.y.assign(y.begin(), y.end());
    return s;
}

/// Per-landmark diagnostics; truth-dependent fields are empty without ground truth.
struct LandmarkDiagnostics
{
    LandmarkId id = 0;
    Bearing delta;
    Bearing origin_bearing;
    double r_hat = 0.0;
    double bearing_error = 0.0; ///< angle between delta and the origin bearing (rad)
    bool measured = false;
    std::optional<double> storage;
    std::optional<double> storage_rate; ///< predicted dl/dt of the continuous error dynamics
    std::optional<double> range_ratio;  ///< r_hat / r
};

/// Origin bearings y0_i = h(origin)_i.
inline OutputVector origin_bearings(const ObserverState& s) { return output(s.origin); }

namespace detail {

struct FieldEval
{
    AlgebraElement body;
    Innovation innovation;
};

/// Right-trivialised observer velocity X^-1 dX/dt = Lambda(Upsilon(X, origin), U) - Ad_{X^-1} Delta_X.
inline FieldEval observer_field(const ObserverState& s, const GroupElement& x, const StepSample& m,
                                const OutputVector& y0, const ObserverConfig& cfg, bool was_degenerate)
{
    const double eps = cfg.epsilon();
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double r_hat = s.origin.range(i) / x.landmarks[i].a;
        if (!(r_hat > eps) || !std::isfinite(r_hat))
            throw BarrierViolation("landmark " + std::to_string(s.slots[i].id) + " estimated range at barrier floor");
    }
    const TotalState est = action_state(x, s.origin);
    FieldEval out{lift(est, m.U), {}};
    out.innovation.landmarks.resize(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto& f = x.landmarks[i];
        const double r_hat = s.origin.range(i) / f.a;
        if (!cfg.landmark_innovation || !m.y[i])
            continue;
        const Bearing delta = f.Q * *m.y[i];
        out.innovation.landmarks[i] = landmark_innovation(delta, y0[i], r_hat, f.Q, m.U.velocity, s.slots[i].gains,
                                                          cfg.r_lower, eps, i);
    }
    if (cfg.pose_innovation) {
        const PoseInnovation p = pose_innovation(x, s.origin, s.slots, out.innovation.landmarks, cfg, was_degenerate);
        out.innovation.Delta = p.Delta;
        out.innovation.Delta_body = p.body;
        out.innovation.wls_condition = p.condition;
        out.innovation.wls_degenerate = p.degenerate;
    }
    out.body.U = out.body.U - out.innovation.Delta_body;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto& f = x.landmarks[i];
        out.body.landmarks[i].W -= f.Q.matrix().transpose() * out.innovation.landmarks[i].Gamma;
        out.body.landmarks[i].w -= out.innovation.landmarks[i].gamma;
    }
    return out;
}

/// Componentwise distance used for step-doubling error control: rotation angles,
/// translation and log-ratios of the scale factors.
inline double group_distance(const GroupElement& x1, const GroupElement& x2)
{
    double d = std::max(so3_log(x1.A.R.transpose() * x2.A.R).norm(), (x1.A.x - x2.A.x).norm());
    for (std::size_t i = 0; i < x1.size(); ++i) {
        d = std::max(d, so3_log(x1.landmarks[i].Q.transpose() * x2.landmarks[i].Q).norm());
        d = std::max(d, std::abs(std::log(x1.landmarks[i].a / x2.landmarks[i].a)));
    }
    return d;
}

inline bool ranges_above(const GroupElement& x, const TotalState& origin, double eps)
{
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = origin.range(i) / x.landmarks[i].a;
        if (!(r > eps) || !std::isfinite(r))
            return false;
    }
    return x.A.x.allFinite() && x.A.R.matrix().allFinite();
}

inline void require_finite(const StepSample& m, std::size_t n)
{
    if (!m.U.is_finite())
        throw NumericalError("observer_step: non-finite velocity input");
    if (m.y.size() != n)
        throw DomainError("observer_step: measurement count does not match landmark count");
    for (const auto& y : m.y)
        if (y && !y->vector().allFinite())
            throw NumericalError("observer_step: non-finite bearing");
}

} // namespace detail

struct StepResult
{
    ObserverState state;
    Innovation innovation;                       ///< evaluated at the start of the step
    std::vector<LandmarkDiagnostics> diagnostics; ///< evaluated at the start of the step
    int rejections = 0;                          ///< sub-steps rejected for barrier violation or overflow
};

/// Storage value l_i = (r/2)(1 - y0^T delta)/(1 + y0^T delta) + (r - r_hat)^2 / (2 alpha).
/// Returns +inf on the exception set.
inline double storage(const Bearing& delta, const Bearing& origin_bearing, double r_hat, double r_true, double alpha)
{
    const double c = origin_bearing.dot(delta);
    if (!(1.0 + c > 0.0))
        return std::numeric_limits<double>::infinity();
    return 0.5 * r_true * (1.0 - c) / (1.0 + c) + (r_true - r_hat) * (r_true - r_hat) / (2.0 * alpha);
}

/// Chordal form of the storage function, (r/2)|y0 - delta|^2 / (4 - |y0 - delta|^2) + r^2 (1 - r_hat/r)^2 / (2 alpha).
inline double storage_chordal(const Bearing& delta, const Bearing& origin_bearing, double r_hat, double r_true,
                              double alpha)
{
    const double chord2 = (origin_bearing.vector() - delta.vector()).squaredNorm();
    if (!(4.0 - chord2 > 0.0))
        return std::numeric_limits<double>::infinity();
    const double ratio = r_hat / r_true;
    return 0.5 * r_true * chord2 / (4.0 - chord2) + r_true * r_true * (1.0 - ratio) * (1.0 - ratio) / (2.0 * alpha);
}

/// Rate of the storage function along the continuous error dynamics:
/// -k r (1 - c)/(1 + c) + (r_hat - r) barrier(r_hat). Never positive while r >= r_lower.
inline double storage_rate(const Bearing& delta, const Bearing& origin_bearing, double r_hat, double r_true,
                           double k, double r_lower, double eps)
{
    const double c = origin_bearing.dot(delta);
    return -k * r_true * (1.0 - c) / (1.0 + c) + (r_hat - r_true) * barrier(r_hat, r_lower, eps);
}

/// Diagnostics for the current state; `truth` enables storage and range-ratio fields.
inline std::vector<LandmarkDiagnostics> diagnose(const ObserverState& s, const StepSample& m, const ObserverConfig& cfg,
                                                 const TotalState* truth = nullptr)
{
    const OutputVector y0 = origin_bearings(s);
    const auto r_hat = estimated_ranges(s.X, s.origin);
    std::optional<TotalState> est;
    if (truth) {
        detail::require_same_size(truth->size(), s.size(), "diagnose");
        est = state_estimate(s);
    }
    std::vector<LandmarkDiagnostics> out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        auto& d = out[i];
        d.id = s.slots[i].id;
        d.origin_bearing = y0[i];
        d.r_hat = r_hat[i];
        d.measured = m.y[i].has_value();
        if (d.measured) {
            d.delta = s.X.landmarks[i].Q * *m.y[i];
        } else {
            // Without a measurement delta is taken from the truth when available.
            d.delta = truth ? s.X.landmarks[i].Q * output_bearing(*truth, i) : y0[i];
        }
        d.bearing_error = angle_between(d.delta, d.origin_bearing);
        if (truth) {
            const double r = truth->range(i);
            d.storage = storage(d.delta, d.origin_bearing, d.r_hat, r, s.slots[i].gains.alpha);
            if (d.r_hat > cfg.epsilon() && 1.0 + d.delta.dot(d.origin_bearing) > 0.0)
                d.storage_rate = storage_rate(d.delta, d.origin_bearing, d.r_hat, r, s.slots[i].gains.k, cfg.r_lower,
                                              cfg.epsilon());
            d.range_ratio = d.r_hat / r;
        }
    }
    return out;
}

/// Advances the observer by `dt`.
///
/// `source(tau)` returns the measurements at time offset tau in [0, dt]; Euler only samples
/// tau = 0 of each (sub)step. A step whose result has some r_hat <= epsilon, overflows, or
/// (with cfg.local_tolerance > 0) disagrees with two half steps by more than the tolerance is
/// replaced by two half steps, recursively up to cfg.max_retries halvings.
template <typename Source>
StepResult observer_step(const ObserverState& s, double dt, const ObserverConfig& cfg, Source&& source,
                         const TotalState* truth = nullptr)
{
    if (!(dt >= 0.0) || !std::isfinite(dt))
        throw NumericalError("observer_step: invalid time step");
    const double eps = cfg.epsilon();
    if (!detail::ranges_above(s.X, s.origin, eps))
        throw BarrierViolation("observer_step: estimated range at or below barrier floor before step");

    const OutputVector y0 = origin_bearings(s);
    const StepSample m0 = source(0.0);
    detail::require_finite(m0, s.size());

    StepResult result;
    const detail::FieldEval start = detail::observer_field(s, s.X, m0, y0, cfg, s.wls_degenerate);
    result.innovation = start.innovation;
    result.diagnostics = diagnose(s, m0, cfg, truth);
    const bool degenerate = cfg.pose_innovation ? start.innovation.wls_degenerate : s.wls_degenerate;

    auto try_step = [&](const GroupElement& x, double t0, double h) -> std::optional<GroupElement> {
        try {
            GroupElement next = lie_step(x, h, cfg.integrator, [&](const GroupElement& xs, double tau) {
                const StepSample m = (t0 + tau == 0.0) ? m0 : source(t0 + tau);
                detail::require_finite(m, s.size());
                return detail::observer_field(s, xs, m, y0, cfg, degenerate).body;
            });
            if (detail::ranges_above(next, s.origin, eps))
                return next;
        } catch (const BarrierViolation&) {
        }
        return std::nullopt;
    };

    auto advance = [&](auto&& self, const GroupElement& x, double t0, double h, int depth) -> GroupElement {
        std::optional<GroupElement> next = try_step(x, t0, h);
        if (next && cfg.local_tolerance > 0.0) {
            // Step doubling: keep the two half steps when they agree with the full step.
            std::optional<GroupElement> half = try_step(x, t0, 0.5 * h);
            if (half)
                half = try_step(*half, t0 + 0.5 * h, 0.5 * h);
            if (half && detail::group_distance(*next, *half) <= cfg.local_tolerance)
                next = half;
            else
                next.reset();
        }
        if (next)
            return *next;
        if (depth >= cfg.max_retries)
            throw NumericalError("observer_step: step rejected after " + std::to_string(depth) + " halvings");
        ++result.rejections;
        const GroupElement mid = self(self, x, t0, 0.5 * h, depth + 1);
        return self(self, mid, t0 + 0.5 * h, 0.5 * h, depth + 1);
    };

    result.state = s;
    result.state.wls_degenerate = degenerate;
    if (dt > 0.0)
        result.state.X = advance(advance, s.X, 0.0, dt, 0);
    return result;
}

/// Step with inputs held constant over the interval.
inline StepResult observer_step(const ObserverState& s, const RigidVelocity& u, const OutputVector& y,
                                const ObserverConfig& cfg, std::optional<double> dt = std::nullopt)
{
    const StepSample m = make_sample(u, y);
    return observer_step(s, dt.value_or(cfg.dt), cfg, [&](double) { return m; });
}

/// Appends a landmark whose estimate has bearing `y` and range `depth` from the current pose
/// estimate: Q = I, a = 1 and origin point x_origin + depth * R_origin y.
inline ObserverState add_landmark(const ObserverState& s, const Bearing& y, double depth, LandmarkId id,
                                  const ObserverConfig& cfg)
{
    if (s.index_of(id))
        throw DomainError("add_landmark: duplicate landmark id " + std::to_string(id));
    if (!(depth >= cfg.r_lower) || !std::isfinite(depth))
        throw DomainError("add_landmark: depth below r_lower");
    ObserverState out = s;
    out.X.landmarks.push_back({Rotation::identity(), 1.0});
    out.origin.landmarks.push_back(s.origin.P.transform(depth * y.vector()));
    out.slots.push_back({id, cfg.gains});
    return out;
}

inline ObserverState remove_landmark(const ObserverState& s, LandmarkId id)
{
    const auto idx = s.index_of(id);
    if (!idx)
        throw DomainError("remove_landmark: unknown landmark id " + std::to_string(id));
    ObserverState out = s;
    out.X.landmarks.erase(out.X.landmarks.begin() + static_cast<std::ptrdiff_t>(*idx));
    out.origin.landmarks.erase(out.origin.landmarks.begin() + static_cast<std::ptrdiff_t>(*idx));
    out.slots.erase(out.slots.begin() + static_cast<std::ptrdiff_t>(*idx));
    return out;
}

/// One sample of the excitation signal for a landmark.
struct PeSample
{
    double t = 0.0;
    Bearing y;
    Vec3 V = Vec3::Zero();
};

/// Trapezoidal estimate of (1/T) * integral over [t_0, t_0 + T] of |y^x y^x V|.
inline double pe_metric(std::span<const PeSample> window, double T)
{
    if (window.empty())
        throw DomainError("pe_metric: empty window");
    if (!(T > 0.0))
        throw DomainError("pe_metric: window length must be positive");
    const double t_end = window.front().t + T;
    if (window.back().t < t_end - 1e-12)
        throw DomainError("pe_metric: window shorter than T");
    auto integrand = [](const PeSample& s) {
        const Mat3 yx = skew(s.y.vector());
        return (yx * yx * s.V).norm();
    };
    double acc = 0.0;
    for (std::size_t j = 1; j < window.size() && window[j - 1].t < t_end; ++j) {
        const double t0 = window[j - 1].t;
        const double f0 = integrand(window[j - 1]);
        double t1 = window[j].t;
        double f1 = integrand(window[j]);
        if (t1 > t_end) {
            f1 = f0 + (f1 - f0) * (t_end - t0) / (t1 - t0);
            t1 = t_end;
        }
        acc += 0.5 * (f0 + f1) * (t1 - t0);
    }
    return acc / T;
}

} // namespace eqvslam
