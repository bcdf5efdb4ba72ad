#pragma once

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Geometry>

#include "pipeline.hpp"

namespace eqvslam::io {

/// Round-trip exact formatting of a double.
inline std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Writes one table: a version comment line, a header row, then data rows.
class CsvWriter
{
public:
    CsvWriter(std::ostream& os, std::string_view table, std::initializer_list<std::string_view> columns)
        : os_(os)
    {
        os_ << "# eqvslam " << table << " v1\n";
        bool first = true;
        for (auto c : columns) {
            os_ << (first ? "" : ",") << c;
            first = false;
        }
        os_ << '\n';
    }

    CsvWriter& operator<<(double v) { return cell(fmt(v)); }
    CsvWriter& operator<<(const std::string& s) { return cell(s); }
    CsvWriter& operator<<(const Vec3& v) { return *this << v.x() << v.y() << v.z(); }

    CsvWriter& empty() { return cell(""); }

    void end_row()
    {
        os_ << '\n';
        first_ = true;
    }

private:
    CsvWriter& cell(const std::string& s)
    {
        if (!first_)
            os_ << ',';
        os_ << s;
        first_ = false;
        return *this;
    }

    std::ostream& os_;
    bool first_ = true;
};

/// Parsed data rows of one table; `line` holds the 1-based file line of each row.
struct CsvTable
{
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line;
};

inline std::vector<std::string> split_row(const std::string& s)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(s);
    while (std::getline(is, cell, ','))
        out.push_back(cell);
    if (!s.empty() && s.back() == ',')
        out.emplace_back();
    for (auto& c : out) {
        const auto b = c.find_first_not_of(" \t\r");
        const auto e = c.find_last_not_of(" \t\r");
        c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
    }
    return out;
}

/// Reads a table written by CsvWriter. The version line is required and must name `table`.
inline CsvTable read_table(std::istream& is, std::string_view table, const std::string& source)
{
    const std::string expected = "# eqvslam " + std::string(table) + " v1";
    CsvTable t;
    std::string s;
    std::size_t lineno = 0;
    bool have_version = false;
    while (std::getline(is, s)) {
        ++lineno;
        if (!s.empty() && s.back() == '\r')
            s.pop_back();
        if (s.empty())
            continue;
        if (s.front() == '#') {
            if (!have_version && lineno == 1) {
                if (s != expected)
                    throw DataError(source + ": line 1: expected header comment '" + expected + "'");
                have_version = true;
            }
            continue;
        }
        if (!have_version)
            throw DataError(source + ": line 1: expected header comment '" + expected + "'");
        if (t.header.empty()) {
            t.header = split_row(s);
            continue;
        }
        t.rows.push_back(split_row(s));
        t.line.push_back(lineno);
    }
    if (!have_version)
        throw DataError(source + ": empty file, expected header comment '" + expected + "'");
    return t;
}

inline CsvTable read_table_file(const std::string& path, std::string_view table)
{
    std::ifstream f(path);
    if (!f)
        throw DataError("cannot open " + path);
    return read_table(f, table, path);
}

inline double parse_double(const std::string& s, const std::string& where)
{
    if (s.empty())
        throw DataError(where + ": empty numeric field");
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || errno == ERANGE)
        throw DataError(where + ": cannot parse '" + s + "' as a number");
    return v;
}

inline LandmarkId parse_id(const std::string& s, const std::string& where)
{
    errno = 0;
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE)
        throw DataError(where + ": cannot parse '" + s + "' as a landmark id");
    return static_cast<LandmarkId>(v);
}

namespace detail {
inline std::string where(const std::string& source, const CsvTable& t, std::size_t j)
{
    return source + ": record " + std::to_string(j + 1) + " (line " + std::to_string(t.line[j]) + ")";
}

inline void require_arity(const CsvTable& t, std::size_t j, std::size_t lo, std::size_t hi, const std::string& source)
{
    const std::size_t n = t.rows[j].size();
    if (n < lo || n > hi)
        throw DataError(where(source, t, j) + ": expected " + std::to_string(lo)
                        + (hi != lo ? "-" + std::to_string(hi) : std::string()) + " fields, got " + std::to_string(n));
}
} // namespace detail

// ---------------------------------------------------------------------------
// Measurement records
// ---------------------------------------------------------------------------

inline void write_measurements(std::ostream& os, std::span<const BearingRecord> rows)
{
    CsvWriter w(os, "measurements", {"t", "id", "y1", "y2", "y3", "depth"});
    for (const auto& r : rows) {
        w << r.t << std::to_string(r.id) << r.y;
        r.depth ? (w << *r.depth) : w.empty();
        w.end_row();
    }
}

inline std::vector<BearingRecord> parse_measurements(const CsvTable& t, const std::string& source)
{
    std::vector<BearingRecord> out;
    for (std::size_t j = 0; j < t.rows.size(); ++j) {
        detail::require_arity(t, j, 5, 6, source);
        const auto& c = t.rows[j];
        const std::string at = detail::where(source, t, j);
        BearingRecord r;
        r.t = parse_double(c[0], at);
        r.id = parse_id(c[1], at);
        r.y = Vec3(parse_double(c[2], at), parse_double(c[3], at), parse_double(c[4], at));
        if (c.size() == 6 && !c[5].empty())
            r.depth = parse_double(c[5], at);
        out.push_back(r);
    }
    return out;
}

inline void write_velocity(std::ostream& os, std::span<const VelocityRecord> rows)
{
    CsvWriter w(os, "velocity", {"t", "omega1", "omega2", "omega3", "v1", "v2", "v3"});
    for (const auto& r : rows) {
        w << r.t << r.U.omega << r.U.velocity;
        w.end_row();
    }
}

inline std::vector<VelocityRecord> parse_velocity(const CsvTable& t, const std::string& source)
{
    std::vector<VelocityRecord> out;
    for (std::size_t j = 0; j < t.rows.size(); ++j) {
        detail::require_arity(t, j, 7, 7, source);
        const auto& c = t.rows[j];
        const std::string at = detail::where(source, t, j);
        double v[7];
        for (int k = 0; k < 7; ++k)
            v[k] = parse_double(c[k], at);
        if (!std::isfinite(v[0]))
            throw DataError(at + ": non-finite timestamp");
        out.push_back({v[0], {Vec3(v[1], v[2], v[3]), Vec3(v[4], v[5], v[6])}});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Trajectories and traces
// ---------------------------------------------------------------------------

inline Eigen::Quaterniond quaternion(const Rotation& R)
{
    Eigen::Quaterniond q(R.matrix());
    if (q.w() < 0.0)
        q.coeffs() *= -1.0;
    return q;
}

/// Pose rows as (t, qw, qx, qy, qz, x, y, z).
inline void write_trajectory(std::ostream& os, std::string_view table, std::span<const double> t,
                             std::span<const Pose> poses)
{
    CsvWriter w(os, table, {"t", "qw", "qx", "qy", "qz", "x", "y", "z"});
    for (std::size_t j = 0; j < poses.size(); ++j) {
        const auto q = quaternion(poses[j].R);
        w << t[j] << q.w() << q.x() << q.y() << q.z() << poses[j].x;
        w.end_row();
    }
}

struct TimedPose
{
    double t = 0.0;
    Pose P;
};

inline std::vector<TimedPose> parse_trajectory(const CsvTable& t, const std::string& source)
{
    std::vector<TimedPose> out;
    for (std::size_t j = 0; j < t.rows.size(); ++j) {
        detail::require_arity(t, j, 8, 8, source);
        const std::string at = detail::where(source, t, j);
        double v[8];
        for (int k = 0; k < 8; ++k)
            v[k] = parse_double(t.rows[j][k], at);
        Eigen::Quaterniond q(v[1], v[2], v[3], v[4]);
        if (!(q.norm() > 0.0) || !std::isfinite(q.norm()))
            throw DataError(at + ": invalid quaternion");
        if (!out.empty() && !(v[0] > out.back().t))
            throw DataError(at + ": timestamps not strictly increasing");
        out.push_back({v[0], {Rotation::orthonormalized(q.normalized().toRotationMatrix()), Vec3(v[5], v[6], v[7])}});
    }
    return out;
}

inline void write_landmark_trace(std::ostream& os, std::span<const LandmarkRow> rows)
{
    CsvWriter w(os, "landmarks",
                {"t", "id", "px", "py", "pz", "px_hat", "py_hat", "pz_hat", "r_hat", "range_ratio", "bearing_error",
                 "storage"});
    for (const auto& r : rows) {
        w << r.t << std::to_string(r.id) << r.truth << r.estimate << r.r_hat << r.range_ratio << r.bearing_error
          << r.storage;
        w.end_row();
    }
}

inline void write_innovation_trace(std::ostream& os, std::span<const InnovationRow> rows)
{
    CsvWriter w(os, "innovation",
                {"t", "omega1", "omega2", "omega3", "v1", "v2", "v3", "condition", "degenerate"});
    for (const auto& r : rows) {
        w << r.t << r.Delta.omega << r.Delta.velocity << r.condition << std::string(r.degenerate ? "1" : "0");
        w.end_row();
    }
}

inline void write_replay_map(std::ostream& os, std::span<const MapRow> rows)
{
    CsvWriter w(os, "map", {"t", "id", "px_hat", "py_hat", "pz_hat", "r_hat", "measured"});
    for (const auto& r : rows) {
        w << r.t << std::to_string(r.id) << r.estimate << r.r_hat << std::string(r.measured ? "1" : "0");
        w.end_row();
    }
}

inline void write_lifecycle(std::ostream& os, std::span<const LifecycleEvent> rows)
{
    CsvWriter w(os, "lifecycle", {"t", "id", "event"});
    for (const auto& r : rows) {
        w << r.t << std::to_string(r.id) << std::string(r.added ? "added" : "removed");
        w.end_row();
    }
}

/// Positions of `reference` linearly interpolated at `t`; nullopt outside its span.
inline std::optional<Vec3> interpolate_position(std::span<const TimedPose> reference, double t)
{
    if (reference.empty() || t < reference.front().t || t > reference.back().t)
        return std::nullopt;
    const auto it = std::lower_bound(reference.begin(), reference.end(), t,
                                     [](const TimedPose& p, double tt) { return p.t < tt; });
    if (it->t == t)
        return it->P.x;
    const TimedPose& b = *it;
    const TimedPose& a = *(it - 1);
    const double w = (t - a.t) / (b.t - a.t);
    return ((1.0 - w) * a.P.x + w * b.P.x).eval();
}

} // namespace eqvslam::io
