#include <catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>

#include "eqvslam/evaluation.hpp"
#include "eqvslam/pipeline.hpp"
#include "support.hpp"

using namespace eqvslam;
using namespace eqvslam::test;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Horn's closed-form quaternion solution; the optimal scale for that rotation is then linear.
AlignmentResult horn_oracle(const std::vector<Vec3>& est, const std::vector<Vec3>& ref, bool with_scale)
{
    const double n = static_cast<double>(est.size());
    Vec3 me = Vec3::Zero(), mr = Vec3::Zero();
    for (std::size_t j = 0; j < est.size(); ++j) {
        me += est[j] / n;
        mr += ref[j] / n;
    }
    Mat3 S = Mat3::Zero();
    for (std::size_t j = 0; j < est.size(); ++j)
        S += (est[j] - me) * (ref[j] - mr).transpose();
    Eigen::Matrix4d N;
    N << S(0, 0) + S(1, 1) + S(2, 2), S(1, 2) - S(2, 1), S(2, 0) - S(0, 2), S(0, 1) - S(1, 0),
        S(1, 2) - S(2, 1), S(0, 0) - S(1, 1) - S(2, 2), S(0, 1) + S(1, 0), S(2, 0) + S(0, 2),
        S(2, 0) - S(0, 2), S(0, 1) + S(1, 0), -S(0, 0) + S(1, 1) - S(2, 2), S(1, 2) + S(2, 1),
        S(0, 1) - S(1, 0), S(2, 0) + S(0, 2), S(1, 2) + S(2, 1), -S(0, 0) - S(1, 1) + S(2, 2);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(N);
    const Eigen::Vector4d v = es.eigenvectors().col(3);
    const Mat3 R = Eigen::Quaterniond(v(0), v(1), v(2), v(3)).normalized().toRotationMatrix();
    double s = 1.0;
    if (with_scale) {
        double num = 0.0, den = 0.0;
        for (std::size_t j = 0; j < est.size(); ++j) {
            num += (ref[j] - mr).dot(R * (est[j] - me));
            den += (est[j] - me).squaredNorm();
        }
        s = num / den;
    }
    AlignmentResult out;
    out.S = {Rotation(R), mr - s * R * me};
    out.scale = s;
    return out;
}

double sse(const AlignmentResult& a, const std::vector<Vec3>& est, const std::vector<Vec3>& ref)
{
    double acc = 0.0;
    for (std::size_t j = 0; j < est.size(); ++j)
        acc += (a.apply(est[j]) - ref[j]).squaredNorm();
    return acc;
}

std::vector<Vec3> cloud(Rng& rng, std::size_t n)
{
    std::vector<Vec3> p;
    for (std::size_t j = 0; j < n; ++j)
        p.push_back(random_vec(rng, 4.0));
    return p;
}

} // namespace

TEST_CASE("umeyama recovers an exact rigid motion")
{
    Rng rng(81);
    for (int t = 0; t < 100; ++t) {
        const auto est = cloud(rng, 10);
        const Pose S = random_pose(rng);
        std::vector<Vec3> ref;
        for (const auto& p : est)
            ref.push_back(S.transform(p));
        const AlignmentResult a = umeyama_align(est, ref, false);
        CHECK((a.S.R.matrix() - S.R.matrix()).norm() < 1e-9);
        CHECK((a.S.x - S.x).norm() < 1e-9);
        CHECK(a.scale == 1.0);
        CHECK(a.rmse < 1e-9);
    }
}

TEST_CASE("umeyama recovers an exact similarity")
{
    Rng rng(82);
    std::uniform_real_distribution<double> us(0.2, 5.0);
    for (int t = 0; t < 100; ++t) {
        const auto est = cloud(rng, 8);
        const Pose S = random_pose(rng);
        const double s = us(rng);
        std::vector<Vec3> ref;
        for (const auto& p : est)
            ref.push_back(s * (S.R * p) + S.x);
        const AlignmentResult a = umeyama_align(est, ref, true);
        CHECK((a.S.R.matrix() - S.R.matrix()).norm() < 1e-9);
        CHECK((a.S.x - S.x).norm() < 1e-9);
        CHECK_THAT(a.scale, WithinRel(s, 1e-9));
        CHECK(a.rmse < 1e-9);
    }
}

TEST_CASE("umeyama on noisy clouds matches the quaternion solution")
{
    Rng rng(83);
    for (bool with_scale : {false, true}) {
        for (int t = 0; t < 100; ++t) {
            const auto est = cloud(rng, 12);
            const Pose S = random_pose(rng);
            std::vector<Vec3> ref;
            for (const auto& p : est)
                ref.push_back(1.3 * (S.R * p) + S.x + random_vec(rng, 0.3));
            const AlignmentResult a = umeyama_align(est, ref, with_scale);
            const AlignmentResult h = horn_oracle(est, ref, with_scale);
            CHECK((a.S.R.matrix() - h.S.R.matrix()).norm() < 1e-6);
            CHECK((a.S.x - h.S.x).norm() < 1e-6);
            CHECK_THAT(a.scale, WithinAbs(h.scale, 1e-6));
            CHECK_THAT(a.rmse, WithinAbs(std::sqrt(sse(h, est, ref) / 12.0), 1e-6));

            // No nearby transform does better.
            for (int k = 0; k < 20; ++k) {
                AlignmentResult b = a;
                b.S = {so3_exp(random_vec(rng, 1e-3)) * a.S.R, a.S.x + random_vec(rng, 1e-3)};
                if (with_scale)
                    b.scale *= 1.0 + 1e-3 * std::normal_distribution<double>()(rng);
                CHECK(sse(b, est, ref) >= sse(a, est, ref) - 1e-12);
            }
        }
    }
}

TEST_CASE("umeyama is equivariant under a frame change of the reference")
{
    Rng rng(84);
    const auto est = cloud(rng, 9);
    std::vector<Vec3> ref;
    for (const auto& p : est)
        ref.push_back(p + random_vec(rng, 0.2));
    const AlignmentResult a = umeyama_align(est, ref, false);
    const Pose G = random_pose(rng);
    std::vector<Vec3> moved;
    for (const auto& p : ref)
        moved.push_back(G.transform(p));
    const AlignmentResult b = umeyama_align(est, moved, false);
    CHECK(((G * a.S).matrix() - b.S.matrix()).norm() < 1e-9);
    CHECK_THAT(b.rmse, WithinAbs(a.rmse, 1e-12));
}

TEST_CASE("umeyama rejects degenerate input")
{
    const std::vector<Vec3> two{Vec3(0, 0, 0), Vec3(1, 0, 0)};
    CHECK_THROWS_AS(umeyama_align(two, two, false), DomainError);
    const std::vector<Vec3> line{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(3, 0, 0)};
    CHECK_THROWS_AS(umeyama_align(line, line, true), DomainError);
    const std::vector<Vec3> tri{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
    CHECK_THROWS_AS(umeyama_align(tri, line, false), DomainError);
    CHECK_NOTHROW(umeyama_align(tri, tri, false));
}

TEST_CASE("equivalence residual vanishes under a change of frame")
{
    Rng rng(85);
    for (int t = 0; t < 100; ++t) {
        const TotalState xi = random_state(rng, 5);
        const Pose G = random_pose(rng);
        TotalState moved{G * xi.P, {}};
        for (const auto& p : xi.landmarks)
            moved.landmarks.push_back(G.transform(p));
        CHECK(equivalence_residual(moved, xi) < 1e-12);
        CHECK(equivalence_residual(xi, xi) == 0.0);
    }
}

TEST_CASE("equivalence residual measures a landmark perturbation")
{
    const TotalState truth{Pose::identity(), {Vec3(1, 2, 3), Vec3(-1, 0, 4)}};
    TotalState est = truth;
    est.landmarks[1] += Vec3(0.1, 0, 0);
    CHECK_THAT(equivalence_residual(est, truth), WithinAbs(0.1, 1e-15));
    Rng rng(86);
    const Pose G = random_pose(rng);
    TotalState moved{G * est.P, {}};
    for (const auto& p : est.landmarks)
        moved.landmarks.push_back(G.transform(p));
    CHECK_THAT(equivalence_residual(moved, truth), WithinAbs(0.1, 1e-12));
    CHECK_THROWS_AS(equivalence_residual(TotalState{Pose::identity(), {Vec3(1, 0, 0)}}, truth), DomainError);
}

TEST_CASE("error report of a perfect estimate")
{
    const ScenarioConfig sc = scenario_paper_sim();
    const TotalState truth = initial_world(sc);
    ObserverConfig cfg;
    InitialCondition ic;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ic.origin_bearings.push_back(output_bearing(truth, i).vector());
        ic.range_ratios.push_back(1.0);
    }
    const ObserverState s = initial_observer(truth, output(truth), cfg, ic);
    const ErrorReport r = error_report(s, truth);
    CHECK(r.max_bearing_error() < 1e-7);
    CHECK(r.max_range_ratio_error() < 1e-14);
    CHECK(r.equivalence < 1e-12);
    for (double l : r.storage)
        CHECK(l < 1e-12);
}

TEST_CASE("error report summaries")
{
    ErrorReport r;
    CHECK(r.max_bearing_error() == 0.0);
    CHECK(r.max_range_ratio_error() == 0.0);
    r.bearing_error = {0.1, 0.3, 0.2};
    r.range_ratio = {0.9, 1.05, 1.2};
    CHECK(r.max_bearing_error() == 0.3);
    CHECK_THAT(r.max_range_ratio_error(), WithinAbs(0.2, 1e-15));
}
