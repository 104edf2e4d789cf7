#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace lpbf {

/// Thrown when an argument violates an operation's precondition.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Unrecoverable numerical failure (linear solve breakdown, non-finite loss).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or unreadable file content.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kStefanBoltzmann = 5.670374419e-8;  // W/(m^2 K^4)
inline constexpr double kPi = 3.14159265358979323846;

/// Sentinel for "never melted".
inline constexpr double kNever = std::numeric_limits<double>::infinity();

struct Point3 {
    double x = 0, y = 0, z = 0;
};

/// Spatiotemporal coordinate, SI units.
struct Point4 {
    double x = 0, y = 0, z = 0, t = 0;

    Point3 spatial() const { return {x, y, z}; }
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw InvalidInput(message);
}

inline void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw InvalidInput(std::string(what) + " is not finite");
}

}  // namespace lpbf
