#pragma once

#include <stdexcept>
#include <string>

namespace eqvslam {

/// Base for all library errors.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Input outside the domain of an operation (co-location, non-antisymmetric matrix, size mismatch).
class DomainError : public Error
{
public:
    using Error::Error;
};

/// Output error reached the antipodal exception set (delta = -origin bearing).
class ExceptionSetError : public Error
{
public:
    ExceptionSetError(const std::string& what, std::size_t landmark_index)
        : Error(what)
        , index_(landmark_index)
    {
    }

    std::size_t landmark_index() const noexcept { return index_; }

private:
    std::size_t index_;
};

/// Estimated range fell to or below the barrier floor epsilon.
class BarrierViolation : public Error
{
public:
    using Error::Error;
};

/// Unrecoverable numerical failure (NaN input, exhausted step retries).
class NumericalError : public Error
{
public:
    using Error::Error;
};

/// Malformed configuration; line is 1-based, 0 when unknown.
class ConfigError : public Error
{
public:
    ConfigError(const std::string& what, int line = 0)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what)
        , line_(line)
    {
    }

    int line() const noexcept { return line_; }

private:
    int line_;
};

/// Malformed data file (records, trajectories).
class DataError : public Error
{
public:
    using Error::Error;
};

} // namespace eqvslam
