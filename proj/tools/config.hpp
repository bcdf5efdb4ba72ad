#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <yaml-cpp/yaml.h>

#include "eqvslam/pipeline.hpp"

namespace eqvslam::cli {

struct RunConfig
{
    ScenarioConfig scenario = scenario_paper_sim();
    ObserverConfig observer;
    LifecycleConfig lifecycle;
    SweepGrid sweep;
    std::size_t trace_stride = 1;
};

/// Observer settings of the circle-flight preset: Euler at 33 ms, barrier floor 0.5 m.
inline ObserverConfig observer_paper_sim()
{
    ObserverConfig c;
    c.gains = {5.0, 500.0, 1.0};
    c.r_lower = 1.0;
    c.k0 = 0.5;
    c.dt = 0.033;
    c.integrator = Integrator::Euler;
    c.initial_depth = 10.0;
    return c;
}

inline RunConfig default_config()
{
    RunConfig c;
    c.observer = observer_paper_sim();
    c.sweep.gains = {{1.0, 500.0, 1.0}, {5.0, 500.0, 1.0}, {25.0, 500.0, 1.0}};
    return c;
}

namespace detail {

inline int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

inline void allow_keys(const YAML::Node& n, std::initializer_list<const char*> keys, const std::string& section)
{
    if (!n.IsMap())
        throw ConfigError(section + ": expected a mapping", line_of(n));
    const std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& kv : n) {
        const auto key = kv.first.as<std::string>();
        if (!ok.count(key))
            throw ConfigError(section + ": unknown key '" + key + "'", line_of(kv.first));
    }
}

template <typename T>
T get(const YAML::Node& n, const std::string& what)
{
    try {
        return n.as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError(what + ": invalid value", line_of(n));
    }
}

inline double get_positive(const YAML::Node& n, const std::string& what)
{
    const double v = get<double>(n, what);
    if (!(v > 0.0) || !std::isfinite(v))
        throw ConfigError(what + ": must be positive", line_of(n));
    return v;
}

inline Vec3 get_vec3(const YAML::Node& n, const std::string& what)
{
    if (!n.IsSequence() || n.size() != 3)
        throw ConfigError(what + ": expected a list of three numbers", line_of(n));
    return Vec3(get<double>(n[0], what), get<double>(n[1], what), get<double>(n[2], what));
}

inline Integrator get_integrator(const YAML::Node& n)
{
    const auto s = get<std::string>(n, "observer.integrator");
    if (s == "euler")
        return Integrator::Euler;
    if (s == "rk4")
        return Integrator::RK4;
    throw ConfigError("observer.integrator: expected 'euler' or 'rk4', got '" + s + "'", line_of(n));
}

inline LandmarkGains get_gains(const YAML::Node& n, LandmarkGains g, const std::string& section)
{
    allow_keys(n, {"k", "alpha", "kappa"}, section);
    if (n["k"])
        g.k = get_positive(n["k"], section + ".k");
    if (n["alpha"])
        g.alpha = get_positive(n["alpha"], section + ".alpha");
    if (n["kappa"])
        g.kappa = get_positive(n["kappa"], section + ".kappa");
    return g;
}

inline void read_scenario(const YAML::Node& n, ScenarioConfig& s)
{
    allow_keys(n,
               {"trajectory", "omega", "velocity", "schedule", "initial_position", "initial_attitude", "landmarks",
                "noise_sigma", "duration", "seed"},
               "scenario");
    if (n["trajectory"]) {
        const auto t = get<std::string>(n["trajectory"], "scenario.trajectory");
        if (t == "circle")
            s.trajectory = TrajectoryKind::Circle;
        else if (t == "schedule")
            s.trajectory = TrajectoryKind::Schedule;
        else
            throw ConfigError("scenario.trajectory: expected 'circle' or 'schedule'", line_of(n["trajectory"]));
    }
    if (n["omega"])
        s.velocity.omega = get_vec3(n["omega"], "scenario.omega");
    if (n["velocity"])
        s.velocity.velocity = get_vec3(n["velocity"], "scenario.velocity");
    if (const auto sched = n["schedule"]) {
        if (!sched.IsSequence())
            throw ConfigError("scenario.schedule: expected a list", line_of(sched));
        s.schedule.clear();
        for (const auto& seg : sched) {
            allow_keys(seg, {"t", "omega", "velocity"}, "scenario.schedule");
            VelocitySegment v;
            if (!seg["t"])
                throw ConfigError("scenario.schedule: segment without 't'", line_of(seg));
            v.t_start = get<double>(seg["t"], "scenario.schedule.t");
            if (seg["omega"])
                v.U.omega = get_vec3(seg["omega"], "scenario.schedule.omega");
            if (seg["velocity"])
                v.U.velocity = get_vec3(seg["velocity"], "scenario.schedule.velocity");
            s.schedule.push_back(v);
        }
    }
    if (n["initial_position"])
        s.initial_pose.x = get_vec3(n["initial_position"], "scenario.initial_position");
    if (n["initial_attitude"])
        s.initial_pose.R = so3_exp(get_vec3(n["initial_attitude"], "scenario.initial_attitude"), 1.0);
    if (const auto lm = n["landmarks"]) {
        if (lm.IsSequence()) {
            s.placement = LandmarkPlacement::Explicit;
            s.landmarks.clear();
            for (const auto& p : lm)
                s.landmarks.push_back(get_vec3(p, "scenario.landmarks"));
            s.landmark_count = s.landmarks.size();
        } else {
            allow_keys(lm, {"count", "sigma"}, "scenario.landmarks");
            s.placement = LandmarkPlacement::GroundPlane;
            if (lm["count"]) {
                const int c = get<int>(lm["count"], "scenario.landmarks.count");
                if (c < 1)
                    throw ConfigError("scenario.landmarks.count: must be at least 1", line_of(lm["count"]));
                s.landmark_count = static_cast<std::size_t>(c);
            }
            if (lm["sigma"])
                s.landmark_sigma = get_positive(lm["sigma"], "scenario.landmarks.sigma");
        }
    }
    if (n["noise_sigma"]) {
        s.noise_sigma = get<double>(n["noise_sigma"], "scenario.noise_sigma");
        if (!(s.noise_sigma >= 0.0))
            throw ConfigError("scenario.noise_sigma: must be non-negative", line_of(n["noise_sigma"]));
    }
    if (n["duration"]) {
        s.duration = get<double>(n["duration"], "scenario.duration");
        if (!(s.duration >= 0.0) || !std::isfinite(s.duration))
            throw ConfigError("scenario.duration: must be non-negative", line_of(n["duration"]));
    }
    if (n["seed"])
        s.seed = get<std::uint64_t>(n["seed"], "scenario.seed");
}

inline void read_observer(const YAML::Node& n, ObserverConfig& o)
{
    allow_keys(n,
               {"k", "alpha", "kappa", "r_lower", "k0", "dt", "integrator", "condition_limit", "initial_depth",
                "pose_innovation", "landmark_innovation", "max_retries", "local_tolerance"},
               "observer");
    if (n["k"])
        o.gains.k = get_positive(n["k"], "observer.k");
    if (n["alpha"])
        o.gains.alpha = get_positive(n["alpha"], "observer.alpha");
    if (n["kappa"])
        o.gains.kappa = get_positive(n["kappa"], "observer.kappa");
    if (n["r_lower"])
        o.r_lower = get_positive(n["r_lower"], "observer.r_lower");
    if (n["k0"])
        o.k0 = get_positive(n["k0"], "observer.k0");
    if (n["dt"])
        o.dt = get_positive(n["dt"], "observer.dt");
    if (n["integrator"])
        o.integrator = get_integrator(n["integrator"]);
    if (n["condition_limit"])
        o.condition_limit = get_positive(n["condition_limit"], "observer.condition_limit");
    if (n["initial_depth"])
        o.initial_depth = get_positive(n["initial_depth"], "observer.initial_depth");
    if (n["pose_innovation"])
        o.pose_innovation = get<bool>(n["pose_innovation"], "observer.pose_innovation");
    if (n["landmark_innovation"])
        o.landmark_innovation = get<bool>(n["landmark_innovation"], "observer.landmark_innovation");
    if (n["max_retries"]) {
        o.max_retries = get<int>(n["max_retries"], "observer.max_retries");
        if (o.max_retries < 0)
            throw ConfigError("observer.max_retries: must be non-negative", line_of(n["max_retries"]));
    }
    if (n["local_tolerance"]) {
        o.local_tolerance = get<double>(n["local_tolerance"], "observer.local_tolerance");
        if (!(o.local_tolerance >= 0.0))
            throw ConfigError("observer.local_tolerance: must be non-negative", line_of(n["local_tolerance"]));
    }
}

inline void read_replay(const YAML::Node& n, LifecycleConfig& l)
{
    allow_keys(n, {"min_sightings", "max_missed"}, "replay");
    if (n["min_sightings"]) {
        l.min_sightings = get<int>(n["min_sightings"], "replay.min_sightings");
        if (l.min_sightings < 1)
            throw ConfigError("replay.min_sightings: must be at least 1", line_of(n["min_sightings"]));
    }
    if (n["max_missed"]) {
        l.max_missed = get<int>(n["max_missed"], "replay.max_missed");
        if (l.max_missed < 0)
            throw ConfigError("replay.max_missed: must be non-negative", line_of(n["max_missed"]));
    }
}

inline void read_sweep(const YAML::Node& n, SweepGrid& g, const LandmarkGains& base)
{
    allow_keys(n,
               {"gains", "ic_count", "ic_seed", "min_separation", "range_ratio", "chi_exclusion", "bearing_tol",
                "range_tol", "jobs"},
               "sweep");
    if (const auto gs = n["gains"]) {
        if (!gs.IsSequence() || gs.size() == 0)
            throw ConfigError("sweep.gains: expected a non-empty list", line_of(gs));
        g.gains.clear();
        for (const auto& e : gs)
            g.gains.push_back(get_gains(e, base, "sweep.gains"));
    }
    if (n["ic_count"]) {
        const int c = get<int>(n["ic_count"], "sweep.ic_count");
        if (c < 0)
            throw ConfigError("sweep.ic_count: must be non-negative", line_of(n["ic_count"]));
        g.ic_count = static_cast<std::size_t>(c);
    }
    if (n["ic_seed"])
        g.ic_seed = get<std::uint64_t>(n["ic_seed"], "sweep.ic_seed");
    if (n["min_separation"])
        g.min_separation = get_positive(n["min_separation"], "sweep.min_separation");
    if (const auto rr = n["range_ratio"]) {
        if (!rr.IsSequence() || rr.size() != 2)
            throw ConfigError("sweep.range_ratio: expected [min, max]", line_of(rr));
        g.range_ratio_min = get_positive(rr[0], "sweep.range_ratio");
        g.range_ratio_max = get_positive(rr[1], "sweep.range_ratio");
        if (!(g.range_ratio_min <= g.range_ratio_max))
            throw ConfigError("sweep.range_ratio: min exceeds max", line_of(rr));
    }
    if (n["chi_exclusion"])
        g.chi_exclusion = get_positive(n["chi_exclusion"], "sweep.chi_exclusion");
    if (n["bearing_tol"])
        g.bearing_tol = get_positive(n["bearing_tol"], "sweep.bearing_tol");
    if (n["range_tol"])
        g.range_tol = get_positive(n["range_tol"], "sweep.range_tol");
    if (n["jobs"]) {
        const int j = get<int>(n["jobs"], "sweep.jobs");
        if (j < 0)
            throw ConfigError("sweep.jobs: must be non-negative", line_of(n["jobs"]));
        g.jobs = static_cast<unsigned>(j);
    }
}

} // namespace detail

/// Parses a YAML run configuration. Sections: preset, scenario, observer, replay, sweep, output.
inline RunConfig parse_config(const std::string& text)
{
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(e.msg, e.mark.line >= 0 ? e.mark.line + 1 : 0);
    }
    RunConfig c = default_config();
    if (root.IsNull())
        return c;
    detail::allow_keys(root, {"preset", "scenario", "observer", "replay", "sweep", "output"}, "config");
    if (const auto p = root["preset"]) {
        const auto name = detail::get<std::string>(p, "preset");
        if (name != "paper-sim")
            throw ConfigError("preset: unknown preset '" + name + "'", detail::line_of(p));
    }
    if (root["scenario"])
        detail::read_scenario(root["scenario"], c.scenario);
    if (root["observer"])
        detail::read_observer(root["observer"], c.observer);
    if (root["replay"])
        detail::read_replay(root["replay"], c.lifecycle);
    if (root["sweep"])
        detail::read_sweep(root["sweep"], c.sweep, c.observer.gains);
    if (const auto out = root["output"]) {
        detail::allow_keys(out, {"trace_stride"}, "output");
        if (out["trace_stride"]) {
            const int s = detail::get<int>(out["trace_stride"], "output.trace_stride");
            if (s < 1)
                throw ConfigError("output.trace_stride: must be at least 1", detail::line_of(out["trace_stride"]));
            c.trace_stride = static_cast<std::size_t>(s);
        }
    }
    try {
        c.scenario.validate();
        c.observer.validate();
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    return c;
}

inline RunConfig load_config(const std::string& path)
{
    std::ifstream f(path);
    if (!f)
        throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

} // namespace eqvslam::cli
