#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "vslam_group.hpp"

namespace eqvslam {

struct AlignmentResult
{
    Pose S;             ///< maps estimate points onto reference points: ref ~ scale * R est + x
    double scale = 1.0;
    double rmse = 0.0;  ///< post-fit root-mean-square residual (m)

    Vec3 apply(const Vec3& p) const { return scale * (S.R * p) + S.x; }
};

/// Least-squares rigid (or similarity) fit of `est` onto `ref` after Umeyama (1991).
/// Throws DomainError for fewer than three points or collinear clouds.
inline AlignmentResult umeyama_align(std::span<const Vec3> est, std::span<const Vec3> ref, bool with_scale)
{
    if (est.size() != ref.size())
        throw DomainError("umeyama_align: point sequences differ in length");
    const std::size_t n = est.size();
    if (n < 3)
        throw DomainError("umeyama_align: need at least 3 point pairs, got " + std::to_string(n));

    Vec3 mu_e = Vec3::Zero(), mu_r = Vec3::Zero();
    for (std::size_t j = 0; j < n; ++j) {
        mu_e += est[j];
        mu_r += ref[j];
    }
    mu_e /= static_cast<double>(n);
    mu_r /= static_cast<double>(n);

    Mat3 cov = Mat3::Zero(), spread_e = Mat3::Zero(), spread_r = Mat3::Zero();
    double var_e = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const Vec3 de = est[j] - mu_e;
        const Vec3 dr = ref[j] - mu_r;
        cov += dr * de.transpose();
        spread_e += de * de.transpose();
        spread_r += dr * dr.transpose();
        var_e += de.squaredNorm();
    }
    cov /= static_cast<double>(n);
    var_e /= static_cast<double>(n);

    auto collinear = [](const Mat3& spread) {
        const Eigen::Vector3d sv = Eigen::JacobiSVD<Mat3>(spread).singularValues();
        return !(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0);
    };
    if (collinear(spread_e))
        throw DomainError("umeyama_align: estimate points are coincident or collinear");
    if (collinear(spread_r))
        throw DomainError("umeyama_align: reference points are coincident or collinear");

    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 sign = Mat3::Identity();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0)
        sign(2, 2) = -1.0;
    const Mat3 R = svd.matrixU() * sign * svd.matrixV().transpose();

    AlignmentResult out;
    out.scale = with_scale ? (svd.singularValues().asDiagonal() * sign).trace() / var_e : 1.0;
    out.S = {Rotation::orthonormalized(R), mu_r - out.scale * (R * mu_e)};
    double sse = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        sse += (ref[j] - out.apply(est[j])).squaredNorm();
    out.rmse = std::sqrt(sse / static_cast<double>(n));
    return out;
}

/// max_i |R_P^T (p_i - x_P) - R_Phat^T (phat_i - x_Phat)|; zero iff the configurations
/// agree up to a rigid change of reference frame.
inline double equivalence_residual(const TotalState& est, const TotalState& truth)
{
    detail::require_same_size(est.size(), truth.size(), "equivalence_residual");
    double worst = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i)
        worst = std::max(worst, (truth.ego_centric(i) - est.ego_centric(i)).norm());
    return worst;
}

/// Error summary of an estimate against ground truth.
struct ErrorReport
{
    std::vector<double> bearing_error; ///< angle between estimated and true bearing (rad)
    std::vector<double> range_ratio;   ///< r_hat / r
    std::vector<double> storage;       ///< storage value l_i
    double trajectory_rmse = 0.0;      ///< after rigid alignment of the estimated trajectory (m)
    double equivalence = 0.0;          ///< equivalence_residual (m)

    double max_bearing_error() const
    {
        return bearing_error.empty() ? 0.0 : *std::max_element(bearing_error.begin(), bearing_error.end());
    }
    double max_range_ratio_error() const
    {
        double worst = 0.0;
        for (double r : range_ratio)
            worst = std::max(worst, std::abs(r - 1.0));
        return worst;
    }
};

} // namespace eqvslam
