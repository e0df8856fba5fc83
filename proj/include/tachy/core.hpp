#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace tachy {

/// Reference frame a coordinate tuple is expressed in.
///
/// Preferred is the frame in which the superluminal interaction propagates
/// isotropically; Lab is the apparatus frame, moving at sub-light speed
/// relative to Preferred.
enum class Frame { Preferred, Lab };

inline const char* to_string(Frame f) {
    return f == Frame::Preferred ? "preferred" : "lab";
}

/// Three-vector with the usual Euclidean algebra. Velocities are measured in
/// units of c (c = 1 internally), so a frame velocity has norm() < 1 and a
/// superluminal signal velocity has norm() > 1.
struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr Vec3() = default;
    constexpr Vec3(double x_, double y_, double z_ = 0.0) : x(x_), y(y_), z(z_) {}

    constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    constexpr Vec3 operator-() const { return {-x, -y, -z}; }
    constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }

    constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    constexpr double norm2() const { return dot(*this); }
    double norm() const { return std::sqrt(norm2()); }

    Vec3 normalized() const {
        const double n = norm();
        return {x / n, y / n, z / n};
    }

    bool finite() const {
        return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
    }
};

constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }

/// Velocity in units of c. The same algebra as any three-vector; the alias
/// marks signatures where the components mean dx/dt, not a position.
using Velocity = Vec3;

inline double speed(const Velocity& u) { return u.norm(); }

/// Default tolerance for algebraic identities (boost round trips, light-speed
/// preservation, interval classification on order-one coordinates).
inline constexpr double kAlgebraTol = 1e-12;

/// Default tolerance for derived quantities (interval invariance, arrival
/// boundary equality), relative.
inline constexpr double kDerivedTol = 1e-9;

/// Format a double with 15 significant digits, locale-independent. All file
/// and table output goes through this so identical runs are byte-identical.
inline std::string format_g15(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.15g", value);
    return buf;
}

}  // namespace tachy
