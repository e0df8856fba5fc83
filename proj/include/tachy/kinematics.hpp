#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>

#include "tachy/core.hpp"

namespace tachy {

/// A spacetime point (t, x, y, z) in units where c = 1, tagged with the frame
/// its coordinates are expressed in. Operations that combine two events
/// require identical tags and throw std::invalid_argument otherwise.
struct Event {
    double t = 0.0;
    Vec3 r;
    Frame frame = Frame::Preferred;

    bool finite() const { return std::isfinite(t) && r.finite(); }
};

inline void require_frame(const Event& e, Frame expected, const char* what) {
    if (e.frame != expected) {
        throw std::invalid_argument(std::string(what) + ": event is tagged " +
                                    to_string(e.frame) + ", expected " +
                                    to_string(expected));
    }
}

/**
 * A pure boost taking Preferred-frame coordinates to Lab-frame coordinates.
 * The boost velocity is the Lab frame's velocity relative to Preferred and
 * must be sub-light; the axes of the two frames stay aligned (no rotation).
 *
 * The transform is the general-direction form
 *
 *     r' = r + ((gamma-1)/v^2)(r.v) v - gamma v t
 *     t' = gamma (t - r.v)
 *
 * implemented with (gamma-1)/v^2 = gamma^2/(gamma+1) so that v -> 0 is the
 * exact identity. For v along x it reduces to x' = gamma(x - vt),
 * t' = gamma(t - vx).
 */
class Boost {
public:
    explicit Boost(const Velocity& v) : v_(v) {
        const double b2 = v.norm2();
        if (!v.finite() || b2 >= 1.0) {
            throw std::invalid_argument(
                "Boost: |v| must be < 1 (not a valid frame velocity)");
        }
        gamma_ = 1.0 / std::sqrt(1.0 - b2);
    }

    const Velocity& velocity() const { return v_; }
    double gamma() const { return gamma_; }

    Boost inverse() const { return Boost(-v_); }

private:
    Velocity v_;
    double gamma_;
};

namespace detail {

// Spatial part of the boost applied to (t, r); frame tags handled by callers.
inline Event boost_coordinates(const Event& e, const Boost& b, Frame out) {
    const Velocity& v = b.velocity();
    const double g = b.gamma();
    const double rv = e.r.dot(v);
    const double radial = g * g / (g + 1.0);  // (gamma-1)/v^2, regular at v=0
    Event out_event;
    out_event.t = g * (e.t - rv);
    out_event.r = e.r + v * (radial * rv - g * e.t);
    out_event.frame = out;
    return out_event;
}

}  // namespace detail

/// Transform a Preferred-frame event into Lab coordinates.
inline Event boost_event(const Event& e, const Boost& b) {
    require_frame(e, Frame::Preferred, "boost_event");
    return detail::boost_coordinates(e, b, Frame::Lab);
}

/// Transform a Lab-frame event back into Preferred coordinates. Exact inverse
/// of boost_event: the round trip reproduces the input to within 1e-12.
inline Event inverse_boost_event(const Event& e, const Boost& b) {
    require_frame(e, Frame::Lab, "inverse_boost_event");
    Event flipped = e;
    flipped.frame = Frame::Preferred;
    Event out = detail::boost_coordinates(flipped, b.inverse(), Frame::Preferred);
    return out;
}

/// Transform any event to the requested frame (no-op when already there).
inline Event to_frame(const Event& e, const Boost& b, Frame target) {
    if (e.frame == target) return e;
    return target == Frame::Lab ? boost_event(e, b) : inverse_boost_event(e, b);
}

namespace detail {

/// Relative pole guard for the velocity-composition denominator 1 -+ u.v.
inline bool near_pole(double denominator, double udotv) {
    return std::abs(denominator) <= kAlgebraTol * (1.0 + std::abs(udotv));
}

// Shared body of the two composition directions. `sign` is -1 for
// Preferred -> Lab and +1 for Lab -> Preferred.
inline std::optional<Velocity> compose_velocity(const Velocity& u, const Boost& b,
                                                double sign) {
    const Velocity v = b.velocity() * sign;
    const double g = b.gamma();
    const double uv = u.dot(v);
    const double den = g * (1.0 + uv);
    if (near_pole(1.0 + uv, uv)) return std::nullopt;
    const double radial = g * g / (g + 1.0);
    return (u + v * (radial * uv + g)) / den;
}

}  // namespace detail

/**
 * Relativistic velocity composition, Preferred -> Lab:
 *
 *     u' = [u + ((gamma-1)/v^2)(u.v) v - gamma v] / (gamma (1 - u.v))
 *
 * u may be superluminal (a signal velocity). The result is empty exactly at
 * the pole u.v = 1, where the transformed speed is instantaneous in the Lab
 * frame; that is a legitimate physical outcome, not a failure (see ftl.hpp
 * for the symbolic instantaneous variant). Collinear u, v along x reduce to
 * u' = (u - v)/(1 - uv), and |u| = 1 is preserved for any direction.
 */
inline std::optional<Velocity> compose_velocity_to_lab(const Velocity& u,
                                                       const Boost& b) {
    return detail::compose_velocity(u, b, -1.0);
}

/// Inverse composition, Lab -> Preferred: u = [u' + ((gamma-1)/v^2)(u'.v) v
/// + gamma v] / (gamma (1 + u'.v)). Empty at the pole u'.v = -1.
inline std::optional<Velocity> compose_velocity_to_preferred(const Velocity& u_lab,
                                                             const Boost& b) {
    return detail::compose_velocity(u_lab, b, +1.0);
}

enum class IntervalKind { TimeLike, SpaceLike, LightLike };

inline const char* to_string(IntervalKind k) {
    switch (k) {
        case IntervalKind::TimeLike: return "timelike";
        case IntervalKind::SpaceLike: return "spacelike";
        default: return "lightlike";
    }
}

/// Invariant interval s2 = dt^2 - |dr|^2 between two events plus its causal
/// classification. s2 is invariant under boosts, so the classification is
/// frame-independent: TimeLike pairs have a frame-invariant temporal order,
/// SpaceLike pairs do not.
struct IntervalClass {
    double s2 = 0.0;
    IntervalKind kind = IntervalKind::LightLike;
};

/// Classify the interval between two same-frame events. The classification
/// threshold is `tol` scaled by the squared coordinate magnitudes, so it acts
/// like 1e-12 on order-one (normalized) coordinates.
inline IntervalClass interval(const Event& e1, const Event& e2,
                              double tol = kAlgebraTol) {
    if (e1.frame != e2.frame) {
        throw std::invalid_argument("interval: events are in different frames");
    }
    const double dt = e2.t - e1.t;
    const Vec3 dr = e2.r - e1.r;
    const double s2 = dt * dt - dr.norm2();
    const double scale = std::max(1.0, std::max(dt * dt, dr.norm2()));
    IntervalClass out;
    out.s2 = s2;
    if (s2 > tol * scale) {
        out.kind = IntervalKind::TimeLike;
    } else if (s2 < -tol * scale) {
        out.kind = IntervalKind::SpaceLike;
    } else {
        out.kind = IntervalKind::LightLike;
    }
    return out;
}

}  // namespace tachy
