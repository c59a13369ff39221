#pragma once

// Small shared vocabulary: 3-vectors, complex alias, and the exception
// hierarchy used by every module.

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace hbem {

using complex_t = std::complex<double>;
using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b)
{
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

// Base class of all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input file; carries the 1-based line number of the failure.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + msg), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class EmptyMeshError : public Error {
public:
    using Error::Error;
};

// Degenerate or otherwise invalid element; carries the element index.
class GeometryError : public Error {
public:
    GeometryError(const std::string& msg, std::size_t element)
        : Error(msg + " (element " + std::to_string(element) + ")"), element_(element) {}
    std::size_t element() const { return element_; }

private:
    std::size_t element_;
};

class OrientationError : public Error {
public:
    using Error::Error;
};

// Request exceeds a fixed capacity (memory, quadrature table size, refinement level).
class CapacityError : public Error {
public:
    CapacityError(const std::string& msg, std::size_t required = 0) : Error(msg), required_(required) {}
    std::size_t required() const { return required_; }

private:
    std::size_t required_;
};

class UnsupportedError : public Error {
public:
    using Error::Error;
};

// Caller broke an interface contract (e.g. singular pair sent to a batched backend).
class ContractError : public Error {
public:
    using Error::Error;
};

class SingularityError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace hbem
