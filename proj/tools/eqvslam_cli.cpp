// eqvslam command line: simulate, replay and sweep.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "config.hpp"
#include "eqvslam/io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace eqvslam;

namespace {

enum Exit
{
    kOk = 0,
    kUsage = 1,
    kData = 2,
    kNumerical = 3,
};

struct CommonFlags
{
    std::string config;
    std::string out = ".";
    std::optional<std::uint64_t> seed;
    std::optional<std::string> integrator;
    std::optional<double> k, alpha, kappa, dt;
};

void add_common(CLI::App* sub, CommonFlags& f)
{
    sub->add_option("-c,--config", f.config, "YAML configuration file");
    sub->add_option("-o,--out", f.out, "output directory")->capture_default_str();
    sub->add_option("--seed", f.seed, "scenario seed override");
    sub->add_option("--integrator", f.integrator, "euler or rk4")->check(CLI::IsMember({"euler", "rk4"}));
    sub->add_option("--k", f.k, "bearing gain override")->check(CLI::PositiveNumber);
    sub->add_option("--alpha", f.alpha, "depth gain override")->check(CLI::PositiveNumber);
    sub->add_option("--kappa", f.kappa, "pose weight override")->check(CLI::PositiveNumber);
    sub->add_option("--dt", f.dt, "observer time step override (s)")->check(CLI::PositiveNumber);
}

cli::RunConfig resolve(const CommonFlags& f)
{
    cli::RunConfig c = f.config.empty() ? cli::default_config() : cli::load_config(f.config);
    if (f.seed)
        c.scenario.seed = *f.seed;
    if (f.integrator)
        c.observer.integrator = *f.integrator == "rk4" ? Integrator::RK4 : Integrator::Euler;
    if (f.k)
        c.observer.gains.k = *f.k;
    if (f.alpha)
        c.observer.gains.alpha = *f.alpha;
    if (f.kappa)
        c.observer.gains.kappa = *f.kappa;
    if (f.dt)
        c.observer.dt = *f.dt;
    return c;
}

std::ofstream open_out(const fs::path& dir, const std::string& name)
{
    std::ofstream f(dir / name);
    if (!f)
        throw DataError("cannot write " + (dir / name).string());
    return f;
}

void prepare_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json pose_json(const Pose& P)
{
    const auto q = io::quaternion(P.R);
    return {{"q", json::array({q.w(), q.x(), q.y(), q.z()})}, {"x", vec_json(P.x)}};
}

json observer_json(const ObserverConfig& o)
{
    return {{"k", o.gains.k},
            {"alpha", o.gains.alpha},
            {"kappa", o.gains.kappa},
            {"r_lower", o.r_lower},
            {"epsilon", o.epsilon()},
            {"dt", o.dt},
            {"integrator", o.integrator == Integrator::RK4 ? "rk4" : "euler"},
            {"initial_depth", o.initial_depth}};
}

void write_json(const fs::path& dir, const json& j)
{
    auto f = open_out(dir, "summary.json");
    f << j.dump(2) << '\n';
}

int cmd_simulate(const CommonFlags& f)
{
    const cli::RunConfig c = resolve(f);
    const fs::path dir(f.out);
    prepare_dir(dir);
    SimulationOptions opt;
    opt.trace_stride = c.trace_stride;
    const SimulationRun run = run_simulation(c.scenario, c.observer, opt);

    std::vector<double> t;
    std::vector<Pose> truth, est;
    for (const auto& p : run.poses) {
        t.push_back(p.t);
        truth.push_back(p.truth);
        est.push_back(p.estimate);
    }
    {
        auto o = open_out(dir, "truth.csv");
        io::write_trajectory(o, "truth", t, truth);
    }
    {
        auto o = open_out(dir, "estimate.csv");
        io::write_trajectory(o, "estimate", t, est);
    }
    {
        auto o = open_out(dir, "landmarks.csv");
        io::write_landmark_trace(o, run.landmarks);
    }
    {
        auto o = open_out(dir, "innovation.csv");
        io::write_innovation_trace(o, run.innovations);
    }
    {
        auto o = open_out(dir, "measurements.csv");
        io::write_measurements(o, run.bearing_records);
    }
    {
        auto o = open_out(dir, "velocity.csv");
        io::write_velocity(o, run.velocity_records);
    }

    json lm = json::array();
    for (std::size_t i = 0; i < run.final_state.size(); ++i)
        lm.push_back({{"id", run.final_state.slots[i].id},
                      {"bearing_error", run.report.bearing_error[i]},
                      {"range_ratio", run.report.range_ratio[i]},
                      {"storage", run.report.storage[i]},
                      {"initial_storage", run.initial_storage[i]},
                      {"excitation", run.pe[i]}});
    write_json(dir, {{"command", "simulate"},
                     {"seed", c.scenario.seed},
                     {"duration", c.scenario.duration},
                     {"steps", run.steps},
                     {"observer", observer_json(c.observer)},
                     {"equivalence_residual", run.report.equivalence},
                     {"trajectory_rmse", run.report.trajectory_rmse},
                     {"max_bearing_error", run.report.max_bearing_error()},
                     {"max_range_ratio_error", run.report.max_range_ratio_error()},
                     {"monotonic", run.monotonic},
                     {"max_storage_increase", run.max_storage_increase},
                     {"min_range_margin", run.min_range_margin},
                     {"rejections", run.rejections},
                     {"final_pose", pose_json(run.final_truth.P)},
                     {"final_estimate", pose_json(state_estimate(run.final_state).P)},
                     {"landmarks", lm}});
    std::printf("simulate: %zu steps, equivalence %.3g m, max bearing error %.3g rad, max |r~-1| %.3g, monotonic %s\n",
                run.steps, run.report.equivalence, run.report.max_bearing_error(), run.report.max_range_ratio_error(),
                run.monotonic ? "yes" : "no");
    return kOk;
}

struct ReplayFlags
{
    std::string records;
    std::string velocity;
    std::string reference;
};

int cmd_replay(const CommonFlags& f, const ReplayFlags& r)
{
    const cli::RunConfig c = resolve(f);
    const fs::path dir(f.out);
    const std::string vel_path =
        r.velocity.empty() ? (fs::path(r.records).parent_path() / "velocity.csv").string() : r.velocity;
    const auto rows = io::parse_measurements(io::read_table_file(r.records, "measurements"), r.records);
    const auto vel = io::parse_velocity(io::read_table_file(vel_path, "velocity"), vel_path);
    const auto records = assemble_records(rows, vel);
    std::optional<std::vector<io::TimedPose>> reference;
    if (!r.reference.empty()) {
        io::CsvTable table;
        try {
            table = io::read_table_file(r.reference, "truth");
        } catch (const DataError&) {
            table = io::read_table_file(r.reference, "estimate");
        }
        reference = io::parse_trajectory(table, r.reference);
    }
    prepare_dir(dir);
    const ReplayRun run = run_replay(records, c.observer, c.lifecycle);

    std::vector<double> t;
    std::vector<Pose> est;
    for (const auto& e : run.trajectory) {
        t.push_back(e.t);
        est.push_back(e.estimate);
    }
    {
        auto o = open_out(dir, "estimate.csv");
        io::write_trajectory(o, "estimate", t, est);
    }
    {
        auto o = open_out(dir, "map.csv");
        io::write_replay_map(o, run.landmarks);
    }
    {
        auto o = open_out(dir, "lifecycle.csv");
        io::write_lifecycle(o, run.events);
    }

    json map = json::array();
    for (const auto& [id, p] : run.final_map)
        map.push_back({{"id", id}, {"position", vec_json(p)}});
    json summary = {{"command", "replay"},
                    {"records", records.size()},
                    {"observer", observer_json(c.observer)},
                    {"min_sightings", c.lifecycle.min_sightings},
                    {"max_missed", c.lifecycle.max_missed},
                    {"rejections", run.rejections},
                    {"final_estimate", run.trajectory.empty() ? json() : pose_json(run.trajectory.back().estimate)},
                    {"final_map", map}};
    if (reference) {
        std::vector<Vec3> a, b;
        for (const auto& e : run.trajectory)
            if (const auto p = io::interpolate_position(*reference, e.t)) {
                a.push_back(e.estimate.x);
                b.push_back(*p);
            }
        const AlignmentResult al = umeyama_align(a, b, true);
        const auto q = io::quaternion(al.S.R);
        summary["alignment"] = {{"pairs", a.size()},
                                {"scale", al.scale},
                                {"rotation", json::array({q.w(), q.x(), q.y(), q.z()})},
                                {"translation", vec_json(al.S.x)},
                                {"rmse", al.rmse}};
        std::printf("replay: aligned %zu poses, rmse %.4g m, scale %.4g\n", a.size(), al.rmse, al.scale);
    }
    write_json(dir, summary);
    std::printf("replay: %zu records, %zu landmarks in final map\n", records.size(), run.final_map.size());
    return kOk;
}

int cmd_sweep(const CommonFlags& f, std::optional<unsigned> jobs, std::optional<std::size_t> ic_count)
{
    cli::RunConfig c = resolve(f);
    if (jobs)
        c.sweep.jobs = *jobs;
    if (ic_count)
        c.sweep.ic_count = *ic_count;
    const fs::path dir(f.out);
    prepare_dir(dir);
    const SweepResult res = run_sweep(c.scenario, c.observer, c.sweep);

    {
        auto o = open_out(dir, "sweep.csv");
        io::CsvWriter w(o, "sweep", {"gain", "k", "alpha", "kappa", "ic", "converged", "bearing_error", "range_error", "failure"});
        for (const auto& r : res.runs) {
            const auto& g = c.sweep.gains[r.gain_index];
            w << std::to_string(r.gain_index) << g.k << g.alpha << g.kappa << std::to_string(r.ic_index)
              << std::string(r.converged ? "1" : "0") << r.bearing_error << r.range_error;
            std::string why = r.failure;
            std::replace(why.begin(), why.end(), ',', ';');
            w << why;
            w.end_row();
        }
    }
    json gains = json::array();
    for (std::size_t gi = 0; gi < c.sweep.gains.size(); ++gi) {
        const auto& g = c.sweep.gains[gi];
        gains.push_back({{"k", g.k}, {"alpha", g.alpha}, {"kappa", g.kappa}, {"converged_fraction", res.converged_fraction[gi]}});
        std::printf("sweep: k=%g alpha=%g converged %.3f\n", g.k, g.alpha, res.converged_fraction[gi]);
    }
    write_json(dir, {{"command", "sweep"},
                     {"observer", observer_json(c.observer)},
                     {"initial_conditions", res.ic_indices.size()},
                     {"excluded", res.excluded},
                     {"bearing_tol", c.sweep.bearing_tol},
                     {"range_tol", c.sweep.range_tol},
                     {"gains", gains}});
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Equivariant visual SLAM observer: simulation, replay and gain sweeps"};
    app.require_subcommand(1);

    CommonFlags sim_f, rep_f, sw_f;
    ReplayFlags rep;
    std::optional<unsigned> jobs;
    std::optional<std::size_t> ic_count;

    auto* sim = app.add_subcommand("simulate", "run the synthetic scenario and the observer");
    add_common(sim, sim_f);

    auto* rp = app.add_subcommand("replay", "stream recorded bearings through the observer");
    add_common(rp, rep_f);
    rp->add_option("-r,--records", rep.records, "measurements CSV")->required();
    rp->add_option("--velocity", rep.velocity, "velocity CSV (default: velocity.csv beside the records)");
    rp->add_option("--reference", rep.reference, "reference trajectory CSV to align against");

    auto* sw = app.add_subcommand("sweep", "basin-of-attraction gain sweep");
    add_common(sw, sw_f);
    sw->add_option("-j,--jobs", jobs, "worker threads (0 = all cores)");
    sw->add_option("--ics", ic_count, "number of sampled initial conditions");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*sim)
            return cmd_simulate(sim_f);
        if (*rp)
            return cmd_replay(rep_f, rep);
        return cmd_sweep(sw_f, jobs, ic_count);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const Error& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumerical;
    }
}
