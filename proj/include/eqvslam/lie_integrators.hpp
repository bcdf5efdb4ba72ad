#pragma once

#include <initializer_list>
#include <utility>

#include "vslam_group.hpp"

namespace eqvslam {

enum class Integrator
{
    Euler,
    RK4,
};

namespace detail {
inline AlgebraElement combine(std::initializer_list<std::pair<double, const AlgebraElement*>> terms)
{
    const AlgebraElement& first = *terms.begin()->second;
    AlgebraElement out{RigidVelocity::zero(), std::vector<LandmarkRate>(first.size())};
    for (const auto& [c, v] : terms) {
        out.U = out.U + v->U * c;
        for (std::size_t i = 0; i < out.size(); ++i) {
            out.landmarks[i].W += c * v->landmarks[i].W;
            out.landmarks[i].w += c * v->landmarks[i].w;
        }
    }
    return out;
}
} // namespace detail

/// One step of dX/dt = X * field(X, tau) with the exponential retraction.
///
/// `field(X, tau)` returns the body-frame (right-trivialised) velocity at time offset tau.
/// Euler: X exp(h F(X, 0)). RK4: the fourth-order commutator-free Lie group method
/// (Celledoni, Marthinsen, Owren) written for right trivialisation; its exponentials are
/// the componentwise group exponential, so no dexp inverse is needed.
template <typename Field>
GroupElement lie_step(const GroupElement& x, double h, Integrator method, Field&& field)
{
    if (method == Integrator::Euler)
        return normalized(x * group_exp(field(x, 0.0), h));

    const AlgebraElement f1 = field(x, 0.0);
    const GroupElement x2 = x * group_exp(f1, 0.5 * h);
    const AlgebraElement f2 = field(x2, 0.5 * h);
    const GroupElement x3 = x * group_exp(f2, 0.5 * h);
    const AlgebraElement f3 = field(x3, 0.5 * h);
    const GroupElement x4 = x * group_exp(f1, 0.5 * h) * group_exp(detail::combine({{1.0, &f3}, {-0.5, &f1}}), h);
    const AlgebraElement f4 = field(x4, h);

    const AlgebraElement early = detail::combine({{0.25, &f1}, {1.0 / 6.0, &f2}, {1.0 / 6.0, &f3}, {-1.0 / 12.0, &f4}});
    const AlgebraElement late = detail::combine({{-1.0 / 12.0, &f1}, {1.0 / 6.0, &f2}, {1.0 / 6.0, &f3}, {0.25, &f4}});
    return normalized(x * group_exp(early, h) * group_exp(late, h));
}

} // namespace eqvslam
