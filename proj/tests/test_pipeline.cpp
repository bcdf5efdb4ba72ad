#include <catch_amalgamated.hpp>

#include <sstream>

#include "eqvslam/io.hpp"
#include "eqvslam/pipeline.hpp"
#include "support.hpp"

using namespace eqvslam;
using namespace eqvslam::test;
using Catch::Matchers::ContainsSubstring;

namespace {

ObserverConfig paper_observer()
{
    ObserverConfig cfg;
    cfg.gains = {5.0, 500.0, 1.0};
    cfg.r_lower = 1.0;
    cfg.k0 = 0.5;
    cfg.dt = 0.033;
    cfg.integrator = Integrator::Euler;
    cfg.initial_depth = 10.0;
    return cfg;
}

// Static robot at the origin; `seen[k]` lists the landmark ids visible in record k.
std::vector<ReplayRecord> scripted(const std::vector<std::vector<LandmarkId>>& seen)
{
    const std::vector<Vec3> world{Vec3(4, 0, 1), Vec3(0, 5, -1), Vec3(-3, -3, 2), Vec3(1, 1, 6), Vec3(-2, 4, 0)};
    std::vector<ReplayRecord> out;
    for (std::size_t k = 0; k < seen.size(); ++k) {
        ReplayRecord r{0.1 * static_cast<double>(k), RigidVelocity::zero(), {}};
        for (LandmarkId id : seen[k])
            r.observations.push_back({id, Bearing::normalize(world[static_cast<std::size_t>(id)]), std::nullopt});
        out.push_back(std::move(r));
    }
    return out;
}

bool has_event(const ReplayRun& run, LandmarkId id, bool added, double t)
{
    for (const auto& e : run.events)
        if (e.id == id && e.added == added && std::abs(e.t - t) < 1e-12)
            return true;
    return false;
}

std::size_t event_count(const ReplayRun& run, LandmarkId id, bool added)
{
    std::size_t n = 0;
    for (const auto& e : run.events)
        n += e.id == id && e.added == added;
    return n;
}

} // namespace

TEST_CASE("replay of simulated records reproduces the simulated estimate")
{
    ScenarioConfig sc = scenario_paper_sim();
    sc.duration = 5.0;
    const ObserverConfig cfg = paper_observer();
    const SimulationRun sim = run_simulation(sc, cfg);
    REQUIRE(sim.rejections == 0);

    const auto records = assemble_records(sim.bearing_records, sim.velocity_records);
    const ReplayRun rep = run_replay(records, cfg, {1, 1});
    REQUIRE(rep.trajectory.size() == sim.poses.size());
    double worst = 0.0;
    for (std::size_t k = 0; k < rep.trajectory.size(); ++k) {
        worst = std::max(worst, (rep.trajectory[k].estimate.x - sim.poses[k].estimate.x).norm());
        worst = std::max(worst, (rep.trajectory[k].estimate.R.matrix() - sim.poses[k].estimate.R.matrix()).norm());
    }
    CHECK(worst < 1e-9);
    const TotalState est = state_estimate(sim.final_state);
    for (std::size_t i = 0; i < est.size(); ++i)
        CHECK((rep.final_map.at(static_cast<LandmarkId>(i)) - est.landmarks[i]).norm() < 1e-9);
    CHECK(rep.events.size() == 5);
}

TEST_CASE("replay through the CSV files reproduces the simulated estimate")
{
    ScenarioConfig sc = scenario_paper_sim();
    sc.duration = 3.0;
    const ObserverConfig cfg = paper_observer();
    const SimulationRun sim = run_simulation(sc, cfg);

    std::stringstream meas, vel;
    io::write_measurements(meas, sim.bearing_records);
    io::write_velocity(vel, sim.velocity_records);
    const auto rows = io::parse_measurements(io::read_table(meas, "measurements", "m"), "m");
    const auto vrows = io::parse_velocity(io::read_table(vel, "velocity", "v"), "v");
    const ReplayRun rep = run_replay(assemble_records(rows, vrows), cfg, {1, 1});
    const TotalState est = state_estimate(sim.final_state);
    for (std::size_t i = 0; i < est.size(); ++i)
        CHECK((rep.final_map.at(static_cast<LandmarkId>(i)) - est.landmarks[i]).norm() < 1e-9);
}

TEST_CASE("lifecycle on a scripted visibility schedule")
{
    // id 0 always visible; id 1 misses one record; id 2 absent from the last record;
    // id 3 has its sighting streak broken; id 4 disappears for two records.
    const auto records = scripted({
        {0, 1, 2, 3, 4},
        {0, 1, 2, 4},
        {0, 1, 2, 3},
        {0, 2, 3},
        {0, 1, 2, 3},
        {0, 1, 3},
    });
    ObserverConfig cfg = paper_observer();
    cfg.r_lower = 0.5;
    const ReplayRun run = run_replay(records, cfg, {2, 1});

    CHECK(has_event(run, 0, true, 0.1));
    CHECK(has_event(run, 1, true, 0.1));
    CHECK(event_count(run, 1, false) == 0);
    CHECK(has_event(run, 2, true, 0.1));
    CHECK(has_event(run, 2, false, 0.5));
    CHECK(has_event(run, 3, true, 0.3));
    CHECK(has_event(run, 4, true, 0.1));
    CHECK(has_event(run, 4, false, 0.3));
    CHECK(event_count(run, 4, true) == 1);

    CHECK(run.final_map.size() == 3);
    CHECK(run.final_map.count(0));
    CHECK(run.final_map.count(1));
    CHECK(run.final_map.count(3));

    // Missing landmarks are carried but flagged unmeasured.
    bool flagged = false;
    for (const auto& m : run.landmarks)
        if (m.id == 1 && std::abs(m.t - 0.3) < 1e-12)
            flagged = !m.measured;
    CHECK(flagged);
}

TEST_CASE("replay uses a supplied depth when adding a landmark")
{
    std::vector<ReplayRecord> records{{0.0, RigidVelocity::zero(), {{7, Bearing(Vec3::UnitZ()), 3.5}}},
                                      {0.1, RigidVelocity::zero(), {{7, Bearing(Vec3::UnitZ()), 3.5}}}};
    const ReplayRun run = run_replay(records, paper_observer(), {1, 1});
    CHECK((run.final_map.at(7) - Vec3(0, 0, 3.5)).norm() < 1e-12);
}

TEST_CASE("lifecycle configuration is validated")
{
    CHECK_THROWS_AS(run_replay(scripted({{0}}), paper_observer(), {0, 1}), DomainError);
    CHECK_THROWS_AS(run_replay(scripted({{0}}), paper_observer(), {1, -1}), DomainError);
    const ReplayRun empty = run_replay(std::vector<ReplayRecord>{}, paper_observer());
    CHECK(empty.trajectory.empty());
}

TEST_CASE("record assembly groups by timestamp and interpolates velocity")
{
    const std::vector<VelocityRecord> vel{{0.0, {Vec3::Zero(), Vec3(0, 0, 0)}}, {1.0, {Vec3::Zero(), Vec3(2, 0, 0)}}};
    const std::vector<BearingRecord> rows{{0.0, 1, Vec3(0, 0, 2), std::nullopt},
                                          {0.0, 2, Vec3(1, 0, 0), 4.0},
                                          {0.25, 1, Vec3(0, 0, 1), std::nullopt}};
    const auto recs = assemble_records(rows, vel);
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].observations.size() == 2);
    CHECK(recs[0].observations[0].y.vector() == Vec3(0, 0, 1));
    CHECK(*recs[0].observations[1].depth == 4.0);
    CHECK((recs[1].U.velocity - Vec3(0.5, 0, 0)).norm() < 1e-15);
    CHECK(interpolate_velocity(vel, -1.0).velocity == Vec3::Zero());
    CHECK(interpolate_velocity(vel, 3.0).velocity == Vec3(2, 0, 0));
}

TEST_CASE("record assembly errors name the record")
{
    const std::vector<VelocityRecord> vel{{0.0, RigidVelocity::zero()}, {1.0, RigidVelocity::zero()}};
    auto fails_with = [&](std::vector<BearingRecord> rows, const std::string& text) {
        CHECK_THROWS_WITH(assemble_records(rows, vel), ContainsSubstring(text));
        CHECK_THROWS_AS(assemble_records(rows, vel), DataError);
    };
    const Vec3 z = Vec3::UnitZ();
    fails_with({{0.0, 1, z, {}}, {0.5, 1, z, {}}, {0.2, 1, z, {}}}, "bearing record 3: timestamp decreases");
    fails_with({{0.0, 1, z, {}}, {0.0, 1, z, {}}}, "bearing record 2: duplicate landmark id 1");
    fails_with({{0.0, 1, Vec3::Zero(), {}}}, "bearing record 1: zero bearing");
    fails_with({{0.0, 1, z, {}}, {0.1, 2, Vec3(NAN, 0, 1), {}}}, "bearing record 2: non-finite");
    fails_with({{0.0, 1, z, -1.0}}, "bearing record 1: depth must be positive");

    const std::vector<VelocityRecord> bad{{0.0, RigidVelocity::zero()}, {0.0, RigidVelocity::zero()}};
    CHECK_THROWS_WITH(assemble_records(std::vector<BearingRecord>{}, bad), ContainsSubstring("velocity record 2"));
    CHECK_THROWS_AS(assemble_records(std::vector<BearingRecord>{{0.0, 1, z, {}}}, std::vector<VelocityRecord>{}),
                    DataError);
}

TEST_CASE("bearing renormalisation is a small correction")
{
    Rng rng(91);
    const std::vector<VelocityRecord> vel{{0.0, RigidVelocity::zero()}};
    for (int t = 0; t < 200; ++t) {
        const Bearing y = random_bearing(rng);
        const Vec3 rounded = y.vector() * (1.0 + 1e-7 * std::normal_distribution<double>()(rng));
        const std::vector<BearingRecord> rows{{0.0, 0, rounded, {}}};
        const auto recs = assemble_records(rows, vel);
        CHECK((recs[0].observations[0].y.vector() - y.vector()).norm() < 1e-6);
    }
}

TEST_CASE("observer errors carry the replay record")
{
    std::vector<ReplayRecord> records{
        {0.0, {Vec3::Zero(), Vec3(0, 0, 200.0)}, {{0, Bearing(Vec3::UnitZ()), 1.5}}},
        {0.2, {Vec3::Zero(), Vec3(0, 0, 200.0)}, {{0, Bearing(Vec3::UnitZ()), 1.5}}},
    };
    ObserverConfig cfg = paper_observer();
    cfg.max_retries = 0;
    CHECK_THROWS_WITH(run_replay(records, cfg, {1, 1}), ContainsSubstring("record 1: "));
}

TEST_CASE("sweep from the equilibrium converges for every gain")
{
    ScenarioConfig sc = scenario_paper_sim();
    sc.duration = 1.0;
    const TotalState truth = initial_world(sc);
    SweepGrid g;
    g.gains = {{1.0, 500.0, 1.0}, {5.0, 500.0, 1.0}, {25.0, 500.0, 1.0}};
    g.ic_count = 0;
    InitialCondition eq;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        eq.origin_bearings.push_back(output_bearing(truth, i).vector());
        eq.range_ratios.push_back(1.0);
    }
    g.explicit_ics = {eq};
    g.jobs = 1;
    ObserverConfig cfg = paper_observer();
    cfg.integrator = Integrator::RK4;
    const SweepResult res = run_sweep(sc, cfg, g);
    REQUIRE(res.runs.size() == 3);
    for (const auto& r : res.runs) {
        CHECK(r.converged);
        CHECK(r.failure.empty());
    }
    for (double f : res.converged_fraction)
        CHECK(f == 1.0);
}

TEST_CASE("sweep excludes initial conditions near the exception set")
{
    ScenarioConfig sc = scenario_paper_sim();
    sc.duration = 0.0;
    const TotalState truth = initial_world(sc);
    SweepGrid g;
    g.gains = {{5.0, 500.0, 1.0}};
    g.ic_count = 4;
    InitialCondition anti;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        anti.origin_bearings.push_back(-output_bearing(truth, i).vector());
        anti.range_ratios.push_back(1.0);
    }
    g.explicit_ics = {anti};
    const SweepResult res = run_sweep(sc, paper_observer(), g);
    CHECK(res.excluded == std::vector<std::size_t>{0});
    CHECK(res.ic_indices.size() == 4);
    CHECK(res.runs.size() == 4);

    for (const auto& ic : sample_initial_conditions(truth, g)) {
        CHECK(chi_distance(truth, ic) > g.min_separation);
        for (double r : ic.range_ratios)
            CHECK((r >= g.range_ratio_min && r <= g.range_ratio_max));
    }
    g.gains.clear();
    CHECK_THROWS_AS(run_sweep(sc, paper_observer(), g), DomainError);
}

TEST_CASE("sweep results do not depend on the worker count")
{
    ScenarioConfig sc = scenario_paper_sim();
    sc.duration = 0.5;
    SweepGrid g;
    g.gains = {{1.0, 500.0, 1.0}, {5.0, 500.0, 1.0}};
    g.ic_count = 3;
    ObserverConfig cfg = paper_observer();
    cfg.integrator = Integrator::RK4;
    cfg.local_tolerance = 1e-4;
    cfg.max_retries = 30;
    g.jobs = 1;
    const SweepResult a = run_sweep(sc, cfg, g);
    g.jobs = 3;
    const SweepResult b = run_sweep(sc, cfg, g);
    REQUIRE(a.runs.size() == b.runs.size());
    for (std::size_t j = 0; j < a.runs.size(); ++j) {
        CHECK(a.runs[j].bearing_error == b.runs[j].bearing_error);
        CHECK(a.runs[j].range_error == b.runs[j].range_error);
    }
}

TEST_CASE("trace output is byte-identical across runs")
{
    ScenarioConfig sc = scenario_paper_sim(4);
    sc.duration = 1.0;
    sc.noise_sigma = 0.002;
    auto render = [&] {
        const SimulationRun run = run_simulation(sc, paper_observer());
        std::ostringstream os;
        io::write_landmark_trace(os, run.landmarks);
        io::write_innovation_trace(os, run.innovations);
        io::write_measurements(os, run.bearing_records);
        return os.str();
    };
    const std::string a = render();
    CHECK(a == render());
    CHECK(a.size() > 1000);
}

TEST_CASE("trace stride thins the traces but keeps the final step")
{
    ScenarioConfig sc = scenario_paper_sim();
    sc.duration = 0.33;
    SimulationOptions opt;
    opt.trace_stride = 4;
    const SimulationRun run = run_simulation(sc, paper_observer(), opt);
    CHECK(run.steps == 10);
    CHECK(run.poses.size() == 4); // steps 0, 4, 8, 10
    CHECK(run.poses.back().t == Catch::Approx(0.33));
    CHECK(run.velocity_records.size() == 11);
}
