#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "evaluation.hpp"
#include "observer.hpp"
#include "simulation.hpp"

namespace eqvslam {

// ---------------------------------------------------------------------------
// Simulation runs
// ---------------------------------------------------------------------------

/// Observer initial condition relative to the true configuration at t = 0: landmark i starts
/// with origin bearing `origin_bearings[i]` (body frame) and range ratio `range_ratios[i]`.
struct InitialCondition
{
    std::vector<Vec3> origin_bearings;
    std::vector<double> range_ratios;
};

struct PoseRow
{
    double t = 0.0;
    Pose truth;
    Pose estimate;
};

struct LandmarkRow
{
    double t = 0.0;
    LandmarkId id = 0;
    Vec3 truth = Vec3::Zero();
    Vec3 estimate = Vec3::Zero();
    double r_hat = 0.0;
    double range_ratio = 1.0;
    double bearing_error = 0.0;
    double storage = 0.0;
};

struct InnovationRow
{
    double t = 0.0;
    RigidVelocity Delta;
    double condition = 0.0;
    bool degenerate = false;
};

/// Bearing sample as written to / read from replay record files.
struct BearingRecord
{
    double t = 0.0;
    LandmarkId id = 0;
    Vec3 y = Vec3::Zero();
    std::optional<double> depth;
};

struct VelocityRecord
{
    double t = 0.0;
    RigidVelocity U;
};

struct SimulationOptions
{
    bool record_traces = true;
    std::size_t trace_stride = 1;             ///< keep every n-th step in the traces
    std::optional<InitialCondition> initial;  ///< default: correct bearings, depth cfg.initial_depth
    double monotonic_slack = 1e-8;            ///< allowed per-step storage increase
};

struct SimulationRun
{
    std::vector<PoseRow> poses;
    std::vector<LandmarkRow> landmarks;
    std::vector<InnovationRow> innovations;
    std::vector<BearingRecord> bearing_records;
    std::vector<VelocityRecord> velocity_records;

    ObserverState final_state;
    TotalState final_truth;
    ErrorReport report;
    std::vector<double> initial_storage;
    double max_storage_increase = 0.0; ///< largest per-step increase of any l_i
    bool monotonic = true;             ///< max_storage_increase <= monotonic_slack
    double min_range_margin = 0.0;     ///< min over steps of r_hat - epsilon
    std::vector<double> pe;            ///< per-landmark excitation over the run
    int rejections = 0;
    std::size_t steps = 0;
};

namespace detail {
/// Re-throws numerical failures of `fn` with `where` prepended, keeping the error type.
template <typename Fn>
auto annotate(const std::string& where, Fn&& fn)
{
    try {
        return fn();
    } catch (const ExceptionSetError& e) {
        throw ExceptionSetError(where + ": " + e.what(), e.landmark_index());
    } catch (const BarrierViolation& e) {
        throw BarrierViolation(where + ": " + e.what());
    } catch (const NumericalError& e) {
        throw NumericalError(where + ": " + e.what());
    } catch (const DomainError& e) {
        throw DomainError(where + ": " + e.what());
    }
}
} // namespace detail

/// Per-landmark errors of the observer estimate against the truth.
inline ErrorReport error_report(const ObserverState& s, const TotalState& truth)
{
    ErrorReport r;
    const TotalState est = state_estimate(s);
    const OutputVector y0 = origin_bearings(s);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const Bearing delta = s.X.landmarks[i].Q * output_bearing(truth, i);
        const double r_true = truth.range(i);
        const double r_hat = est.range(i);
        r.bearing_error.push_back(angle_between(delta, y0[i]));
        r.range_ratio.push_back(r_hat / r_true);
        r.storage.push_back(storage(delta, y0[i], r_hat, r_true, s.slots[i].gains.alpha));
    }
    r.equivalence = equivalence_residual(est, truth);
    return r;
}

/// Observer initialised on the first measurement: P_origin = I, landmark i at depth * y_i.
inline ObserverState initial_observer(const TotalState& truth, const OutputVector& y, const ObserverConfig& cfg,
                                      const std::optional<InitialCondition>& ic)
{
    ObserverState s = make_observer();
    if (!ic) {
        for (std::size_t i = 0; i < y.size(); ++i)
            s = add_landmark(s, y[i], cfg.initial_depth, static_cast<LandmarkId>(i), cfg);
        return s;
    }
    if (ic->origin_bearings.size() != truth.size() || ic->range_ratios.size() != truth.size())
        throw DomainError("initial condition size does not match landmark count");
    TotalState origin{Pose::identity(), {}};
    std::vector<LandmarkId> ids;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        origin.landmarks.push_back(ic->range_ratios[i] * truth.range(i) * ic->origin_bearings[i].normalized());
        ids.push_back(static_cast<LandmarkId>(i));
    }
    return make_observer(origin, ids, cfg);
}

/// Runs the scenario and the observer side by side.
///
/// Noise-free runs feed the integrator exact intermediate measurements; noisy runs hold
/// the sampled measurement over each step.
inline SimulationRun run_simulation(const ScenarioConfig& sc, const ObserverConfig& cfg,
                                    const SimulationOptions& opt = {})
{
    sc.validate();
    cfg.validate();
    SimulationRun run;
    TotalState truth = initial_world(sc);
    auto noise_rng = make_rng(sc.seed, 1);
    const auto steps = static_cast<std::size_t>(std::llround(sc.duration / cfg.dt));
    run.steps = steps;

    OutputVector y = measure(truth, sc.noise_sigma, noise_rng);
    ObserverState s = initial_observer(truth, y, cfg, opt.initial);
    const double eps = cfg.epsilon();

    std::vector<std::vector<PeSample>> pe(s.size());
    std::vector<double> prev_storage;
    run.min_range_margin = std::numeric_limits<double>::infinity();

    auto record = [&](std::size_t k, double t, const RigidVelocity& u, const Innovation* innov) {
        const ErrorReport rep = error_report(s, truth);
        if (k == 0)
            run.initial_storage = rep.storage;
        else
            for (std::size_t i = 0; i < rep.storage.size(); ++i)
                run.max_storage_increase = std::max(run.max_storage_increase, rep.storage[i] - prev_storage[i]);
        prev_storage = rep.storage;
        for (double r : estimated_ranges(s.X, s.origin))
            run.min_range_margin = std::min(run.min_range_margin, r - eps);
        for (std::size_t i = 0; i < s.size(); ++i)
            pe[i].push_back({t, output_bearing(truth, i), u.velocity});

        if (!opt.record_traces)
            return;
        for (std::size_t i = 0; i < y.size(); ++i)
            run.bearing_records.push_back({t, static_cast<LandmarkId>(i), y[i].vector(), std::nullopt});
        run.velocity_records.push_back({t, u});

        if ((k % std::max<std::size_t>(opt.trace_stride, 1) != 0 && k != steps))
            return;
        const TotalState est = state_estimate(s);
        run.poses.push_back({t, truth.P, est.P});
        for (std::size_t i = 0; i < s.size(); ++i)
            run.landmarks.push_back({t, s.slots[i].id, truth.landmarks[i], est.landmarks[i], est.range(i),
                                     rep.range_ratio[i], rep.bearing_error[i], rep.storage[i]});
        if (innov)
            run.innovations.push_back({t, innov->Delta, innov->wls_condition, innov->wls_degenerate});
    };

    for (std::size_t k = 0; k <= steps; ++k) {
        const double t = static_cast<double>(k) * cfg.dt;
        const RigidVelocity u = sc.velocity_at(t);
        if (k == steps) {
            const StepSample m = make_sample(u, y);
            const detail::FieldEval f =
                detail::observer_field(s, s.X, m, origin_bearings(s), cfg, s.wls_degenerate);
            record(k, t, u, &f.innovation);
            break;
        }
        const TotalState here = truth;
        const StepSample held = make_sample(u, y);
        auto source = [&](double tau) -> StepSample {
            if (tau == 0.0 || sc.noise_sigma > 0.0)
                return held;
            return make_sample(u, output(true_step(here, u, tau)));
        };
        StepResult res =
            detail::annotate("step " + std::to_string(k), [&] { return observer_step(s, cfg.dt, cfg, source); });
        record(k, t, u, &res.innovation);
        run.rejections += res.rejections;
        s = std::move(res.state);
        truth = true_step(truth, u, cfg.dt);
        y = measure(truth, sc.noise_sigma, noise_rng);
    }

    run.monotonic = run.max_storage_increase <= opt.monotonic_slack;
    run.final_state = s;
    run.final_truth = truth;
    run.report = error_report(s, truth);
    if (run.poses.size() >= 3) {
        std::vector<Vec3> est, ref;
        for (const auto& p : run.poses) {
            est.push_back(p.estimate.x);
            ref.push_back(p.truth.x);
        }
        try {
            run.report.trajectory_rmse = umeyama_align(est, ref, false).rmse;
        } catch (const DomainError&) {
            run.report.trajectory_rmse = std::numeric_limits<double>::quiet_NaN();
        }
    }
    for (const auto& w : pe) {
        const double span = w.size() >= 2 ? w.back().t - w.front().t : 0.0;
        run.pe.push_back(span > 0.0 ? pe_metric(w, span) : 0.0);
    }
    return run;
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

struct ReplayObservation
{
    LandmarkId id = 0;
    Bearing y;
    std::optional<double> depth;
};

/// All observations sharing one timestamp, with the velocity interpolated to it.
struct ReplayRecord
{
    double t = 0.0;
    RigidVelocity U;
    std::vector<ReplayObservation> observations;
};

/// Linear interpolation of the velocity log; clamps outside its span.
inline RigidVelocity interpolate_velocity(std::span<const VelocityRecord> v, double t)
{
    if (v.empty())
        throw DataError("velocity log is empty");
    if (t <= v.front().t)
        return v.front().U;
    if (t >= v.back().t)
        return v.back().U;
    const auto it = std::upper_bound(v.begin(), v.end(), t, [](double tt, const VelocityRecord& r) { return tt < r.t; });
    const VelocityRecord& b = *it;
    const VelocityRecord& a = *(it - 1);
    if (a.t == t)
        return a.U;
    const double w = (t - a.t) / (b.t - a.t);
    return a.U * (1.0 - w) + b.U * w;
}

/// Groups bearing rows by timestamp (rows must be time-ordered; equal times are contiguous),
/// renormalises bearings and attaches the interpolated velocity. Row numbers in errors are 1-based.
inline std::vector<ReplayRecord> assemble_records(std::span<const BearingRecord> rows,
                                                  std::span<const VelocityRecord> velocity)
{
    for (std::size_t j = 1; j < velocity.size(); ++j)
        if (!(velocity[j].t > velocity[j - 1].t))
            throw DataError("velocity record " + std::to_string(j + 1) + ": timestamps not strictly increasing");
    std::vector<ReplayRecord> out;
    for (std::size_t j = 0; j < rows.size(); ++j) {
        const auto& r = rows[j];
        if (!std::isfinite(r.t) || !r.y.allFinite())
            throw DataError("bearing record " + std::to_string(j + 1) + ": non-finite value");
        if (out.empty() || r.t > out.back().t) {
            out.push_back({r.t, interpolate_velocity(velocity, r.t), {}});
        } else if (r.t < out.back().t) {
            throw DataError("bearing record " + std::to_string(j + 1) + ": timestamp decreases");
        }
        for (const auto& o : out.back().observations)
            if (o.id == r.id)
                throw DataError("bearing record " + std::to_string(j + 1) + ": duplicate landmark id "
                                + std::to_string(r.id) + " at one timestamp");
        if (r.depth && !(*r.depth > 0.0))
            throw DataError("bearing record " + std::to_string(j + 1) + ": depth must be positive");
        Bearing y;
        try {
            y = Bearing::normalize(r.y);
        } catch (const DomainError&) {
            throw DataError("bearing record " + std::to_string(j + 1) + ": zero bearing");
        }
        out.back().observations.push_back({r.id, y, r.depth});
    }
    return out;
}

struct LifecycleConfig
{
    int min_sightings = 2; ///< consecutive records before a landmark is added
    int max_missed = 1;    ///< consecutive missing records tolerated before removal
};

struct LifecycleEvent
{
    double t = 0.0;
    LandmarkId id = 0;
    bool added = true;
};

struct EstimateRow
{
    double t = 0.0;
    Pose estimate;
    std::size_t landmark_count = 0;
};

struct MapRow
{
    double t = 0.0;
    LandmarkId id = 0;
    Vec3 estimate = Vec3::Zero();
    double r_hat = 0.0;
    bool measured = false;
};

struct ReplayRun
{
    std::vector<EstimateRow> trajectory;
    std::vector<MapRow> landmarks;
    std::vector<LifecycleEvent> events;
    std::map<LandmarkId, Vec3> final_map;
    ObserverState final_state;
    int rejections = 0;
};

/// Streams records through the observer with the add-after-N-sightings and
/// remove-on-disappearance lifecycle. Steps between consecutive record times.
inline ReplayRun run_replay(std::span<const ReplayRecord> records, const ObserverConfig& cfg,
                            const LifecycleConfig& life = {})
{
    cfg.validate();
    if (life.min_sightings < 1 || life.max_missed < 0)
        throw DomainError("lifecycle: min_sightings must be >= 1 and max_missed >= 0");
    ReplayRun run;
    ObserverState s = make_observer();
    std::map<LandmarkId, int> sightings; // consecutive sightings of not-yet-added ids
    std::map<LandmarkId, int> missed;    // consecutive misses of tracked ids

    for (std::size_t k = 0; k < records.size(); ++k) {
        const ReplayRecord& rec = records[k];
        std::map<LandmarkId, const ReplayObservation*> seen;
        for (const auto& o : rec.observations)
            seen[o.id] = &o;

        for (std::size_t i = s.size(); i-- > 0;) {
            const LandmarkId id = s.slots[i].id;
            if (seen.count(id)) {
                missed[id] = 0;
            } else if (++missed[id] > life.max_missed) {
                s = remove_landmark(s, id);
                missed.erase(id);
                run.events.push_back({rec.t, id, false});
            }
        }
        for (auto it = sightings.begin(); it != sightings.end();)
            it = seen.count(it->first) ? std::next(it) : sightings.erase(it);
        for (const auto& o : rec.observations) {
            if (s.index_of(o.id))
                continue;
            if (++sightings[o.id] >= life.min_sightings) {
                s = add_landmark(s, o.y, o.depth.value_or(cfg.initial_depth), o.id, cfg);
                sightings.erase(o.id);
                missed[o.id] = 0;
                run.events.push_back({rec.t, o.id, true});
            }
        }

        StepSample m{rec.U, std::vector<std::optional<Bearing>>(s.size())};
        for (std::size_t i = 0; i < s.size(); ++i)
            if (auto it = seen.find(s.slots[i].id); it != seen.end())
                m.y[i] = it->second->y;

        const TotalState est = state_estimate(s);
        run.trajectory.push_back({rec.t, est.P, s.size()});
        for (std::size_t i = 0; i < s.size(); ++i)
            run.landmarks.push_back({rec.t, s.slots[i].id, est.landmarks[i], est.range(i), m.y[i].has_value()});

        if (k + 1 == records.size())
            break;
        const ReplayRecord& next = records[k + 1];
        const double dt = next.t - rec.t;
        auto source = [&](double tau) {
            StepSample mt = m;
            if (tau > 0.0) {
                const double w = tau / dt;
                mt.U = rec.U * (1.0 - w) + next.U * w;
            }
            return mt;
        };
        StepResult res =
            detail::annotate("record " + std::to_string(k + 1), [&] { return observer_step(s, dt, cfg, source); });
        run.rejections += res.rejections;
        s = std::move(res.state);
    }

    if (!records.empty()) {
        std::set<LandmarkId> last;
        for (const auto& o : records.back().observations)
            last.insert(o.id);
        for (std::size_t i = s.size(); i-- > 0;) {
            const LandmarkId id = s.slots[i].id;
            if (!last.count(id)) {
                s = remove_landmark(s, id);
                run.events.push_back({records.back().t, id, false});
            }
        }
    }
    const TotalState est = state_estimate(s);
    for (std::size_t i = 0; i < s.size(); ++i)
        run.final_map[s.slots[i].id] = est.landmarks[i];
    run.final_state = std::move(s);
    return run;
}

// ---------------------------------------------------------------------------
// Gain sweeps
// ---------------------------------------------------------------------------

struct SweepGrid
{
    std::vector<LandmarkGains> gains;
    std::size_t ic_count = 200;
    std::uint64_t ic_seed = 7;
    double min_separation = 0.05;  ///< sampled ICs satisfy 1 + y^T y0 > min_separation
    double range_ratio_min = 0.25;
    double range_ratio_max = 4.0;
    std::vector<InitialCondition> explicit_ics;
    double chi_exclusion = 1e-6;   ///< ICs with 1 + y^T y0 <= this are excluded
    double bearing_tol = 0.01;     ///< converged: final bearing error below (rad)
    double range_tol = 0.02;       ///< converged: final |r_tilde - 1| below
    unsigned jobs = 0;             ///< worker threads, 0 = hardware concurrency
};

struct SweepRun
{
    std::size_t gain_index = 0;
    std::size_t ic_index = 0;
    bool converged = false;
    double bearing_error = 0.0;
    double range_error = 0.0;
    std::string failure;
};

struct SweepResult
{
    std::vector<std::size_t> ic_indices;      ///< ICs that were run (exception-set samples removed)
    std::vector<std::size_t> excluded;        ///< ICs inside the chi-neighbourhood
    std::vector<SweepRun> runs;
    std::vector<double> converged_fraction;   ///< per gain entry
};

/// Smallest 1 + y_i(0)^T y0_i over the landmarks of an IC.
inline double chi_distance(const TotalState& truth, const InitialCondition& ic)
{
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < truth.size(); ++i)
        worst = std::min(worst, 1.0 + output_bearing(truth, i).dot(Bearing::normalize(ic.origin_bearings[i])));
    return worst;
}

/// Random ICs: origin bearings uniform on the sphere subject to the separation bound,
/// range ratios log-uniform.
inline std::vector<InitialCondition> sample_initial_conditions(const TotalState& truth, const SweepGrid& g)
{
    auto rng = make_rng(g.ic_seed, 2);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(std::log(g.range_ratio_min), std::log(g.range_ratio_max));
    std::vector<InitialCondition> out;
    for (std::size_t c = 0; c < g.ic_count; ++c) {
        InitialCondition ic;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            const Vec3 y = output_bearing(truth, i).vector();
            Vec3 b;
            do {
                b = Vec3(n(rng), n(rng), n(rng)).normalized();
            } while (!(1.0 + y.dot(b) > g.min_separation));
            ic.origin_bearings.push_back(b);
            ic.range_ratios.push_back(std::exp(u(rng)));
        }
        out.push_back(std::move(ic));
    }
    return out;
}

/// Runs every (gain, IC) pair; runs are independent and distributed over worker threads.
inline SweepResult run_sweep(const ScenarioConfig& sc, const ObserverConfig& base, const SweepGrid& g)
{
    if (g.gains.empty())
        throw DomainError("sweep: no gains in grid");
    const TotalState truth = initial_world(sc);
    std::vector<InitialCondition> ics = g.explicit_ics;
    const auto sampled = sample_initial_conditions(truth, g);
    ics.insert(ics.end(), sampled.begin(), sampled.end());

    SweepResult res;
    for (std::size_t c = 0; c < ics.size(); ++c) {
        if (ics[c].origin_bearings.size() != truth.size())
            throw DomainError("sweep: initial condition " + std::to_string(c) + " has wrong landmark count");
        (chi_distance(truth, ics[c]) <= g.chi_exclusion ? res.excluded : res.ic_indices).push_back(c);
    }
    for (std::size_t gi = 0; gi < g.gains.size(); ++gi)
        for (std::size_t c : res.ic_indices)
            res.runs.push_back({gi, c, false, 0.0, 0.0, {}});

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t j = next++; j < res.runs.size(); j = next++) {
            SweepRun& r = res.runs[j];
            ObserverConfig cfg = base;
            cfg.gains = g.gains[r.gain_index];
            SimulationOptions opt;
            opt.record_traces = false;
            opt.initial = ics[r.ic_index];
            try {
                const SimulationRun sim = run_simulation(sc, cfg, opt);
                r.bearing_error = sim.report.max_bearing_error();
                r.range_error = sim.report.max_range_ratio_error();
                r.converged = r.bearing_error < g.bearing_tol && r.range_error < g.range_tol;
            } catch (const Error& e) {
                r.failure = e.what();
            }
        }
    };
    const unsigned jobs = g.jobs ? g.jobs : std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < jobs; ++w)
        pool.emplace_back(worker);
    worker();
    for (auto& t : pool)
        t.join();

    res.converged_fraction.assign(g.gains.size(), 0.0);
    for (const auto& r : res.runs)
        if (r.converged)
            res.converged_fraction[r.gain_index] += 1.0;
    for (auto& f : res.converged_fraction)
        f = res.ic_indices.empty() ? 0.0 : f / static_cast<double>(res.ic_indices.size());
    return res;
}

} // namespace eqvslam
