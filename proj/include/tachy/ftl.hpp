#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "tachy/kinematics.hpp"
#include "tachy/worldline.hpp"

namespace tachy {

/**
 * Speed of the superluminal interaction in the preferred frame: either a
 * finite constant ubar > 1 (strictly superluminal) or the symbolic
 * instantaneous limit. The limit is a distinct variant, never a large float;
 * "instantly connected" is modeled as the pair acting as a single entity, not
 * as infinity arithmetic.
 */
class FtlSpeed {
public:
    static FtlSpeed finite(double ubar) {
        if (!(ubar > 1.0) || !std::isfinite(ubar)) {
            throw std::invalid_argument("FtlSpeed: finite speed must satisfy ubar > 1");
        }
        return FtlSpeed(ubar);
    }

    static FtlSpeed instantaneous() { return FtlSpeed(std::nullopt); }

    bool is_instantaneous() const { return !ubar_.has_value(); }

    /// Finite value (throws on the instantaneous variant).
    double ubar() const {
        if (!ubar_) throw std::logic_error("FtlSpeed: instantaneous has no finite value");
        return *ubar_;
    }

private:
    explicit FtlSpeed(std::optional<double> u) : ubar_(u) {}
    std::optional<double> ubar_;
};

/// One superluminal front: triggered at `origin` (a preferred-frame event),
/// expanding isotropically in the preferred frame. The reachable set at time
/// t >= origin.t is the ball of radius ubar*(t - origin.t), or all of space
/// for the instantaneous variant.
struct FtlSignal {
    Event origin;
    FtlSpeed speed;
};

/// Signal speed along one direction, in the stated frame. In the preferred
/// frame the speed is independent of theta; in the lab frame it is not.
/// theta is the angle between the propagation direction and the frame
/// velocity v.
struct DirectionalSpeed {
    double theta = 0.0;
    double speed = 0.0;
    Frame frame = Frame::Preferred;
};

namespace detail {

/// Unit vector orthogonal to v (the plane the angle theta lives in). For v
/// along x this is +y, matching the collinear/transverse setups.
inline Vec3 transverse_axis(const Velocity& v) {
    const double n = v.norm();
    if (n == 0.0) return {0.0, 1.0, 0.0};
    const Vec3 vhat = v / n;
    const Vec3 ref = std::abs(vhat.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    return (ref - vhat * ref.dot(vhat)).normalized();
}

}  // namespace detail

/// Unit direction at angle theta from the boost velocity, in the plane
/// spanned by v and its transverse axis. For v = 0 the plane is x-y and
/// theta is measured from +x.
inline Vec3 signal_direction_in_preferred(const Boost& b, double theta) {
    const Velocity& v = b.velocity();
    const Vec3 along = v.norm() == 0.0 ? Vec3{1, 0, 0} : v.normalized();
    const Vec3 across = detail::transverse_axis(v);
    return along * std::cos(theta) + across * std::sin(theta);
}

/**
 * Full lab-frame velocity of a signal launched at angle theta in the
 * preferred frame. Empty result means the signal is instantaneous in the lab
 * frame (the composition pole, or an instantaneous signal at theta = pi/2,
 * or any instantaneous signal when v = 0).
 *
 * The instantaneous case is the closed-form limit of the composition as the
 * preferred speed grows without bound:
 *
 *     u' -> -[n + ((gamma-1)/v^2)(n.v) v] / (gamma (n.v))
 *
 * which for theta = pi (against the motion) gives speed 1/v, the c^2/v
 * back-signal speed of the lab narrative.
 */
inline std::optional<Velocity> lab_signal_velocity(const FtlSpeed& speed,
                                                   const Boost& b, double theta) {
    const Vec3 n = signal_direction_in_preferred(b, theta);
    if (speed.is_instantaneous()) {
        const Velocity& v = b.velocity();
        const double nv = n.dot(v);
        if (std::abs(nv) <= kAlgebraTol * (1.0 + v.norm())) return std::nullopt;
        const double g = b.gamma();
        const double radial = g * g / (g + 1.0);
        return (n + v * (radial * nv)) / (-g * nv);
    }
    return compose_velocity_to_lab(n * speed.ubar(), b);
}

/// Lab-frame directional speed of a signal launched at angle theta in the
/// preferred frame; empty = instantaneous in the lab (a legitimate outcome).
inline std::optional<DirectionalSpeed> lab_speed(const FtlSpeed& speed,
                                                 const Boost& b, double theta) {
    const auto u_lab = lab_signal_velocity(speed, b, theta);
    if (!u_lab) return std::nullopt;
    DirectionalSpeed out;
    out.frame = Frame::Lab;
    out.speed = u_lab->norm();
    const double vnorm = b.velocity().norm();
    if (vnorm == 0.0 || out.speed == 0.0) {
        out.theta = theta;  // isotropic: angle passes through unchanged
    } else {
        const double c = std::clamp(
            u_lab->dot(b.velocity()) / (out.speed * vnorm), -1.0, 1.0);
        out.theta = std::acos(c);
    }
    return out;
}

namespace detail {

// Earliest s in [s_lo, s_hi] with |p0 + d s - o| = ubar (s + dt0), the front
// catching the photon on one segment. f(s) = |p0 + d s - o|^2 - radius^2 is a
// downward parabola (its quadratic coefficient is 1 - ubar^2 < 0), so if the
// photon starts outside the front the catch is the upper root.
inline std::optional<double> segment_catch(const Vec3& p0, const Vec3& d,
                                           double dt0, const Vec3& origin,
                                           double ubar, double s_lo, double s_hi) {
    const Vec3 delta = p0 - origin;
    const double a = 1.0 - ubar * ubar;
    const double b = 2.0 * (delta.dot(d) - ubar * ubar * dt0);
    const double c = delta.norm2() - ubar * ubar * dt0 * dt0;

    const auto f = [&](double s) { return (a * s + b) * s + c; };
    if (f(s_lo) <= 0.0) return s_lo;  // already inside or on the front

    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    const double q = -0.5 * (b + (b >= 0.0 ? sq : -sq));
    double r1 = q / a;
    double r2 = (q != 0.0) ? c / q : r1;
    const double s_catch = std::max(r1, r2);
    if (s_catch < s_lo || s_catch > s_hi) return std::nullopt;
    return s_catch;
}

}  // namespace detail

/**
 * Earliest preferred-frame event at which the expanding front touches the
 * target photon, or empty (NoArrival) when the photon is detected strictly
 * before the front reaches it. Arrival exactly at the detection counts as
 * arrival: the segment end carries a 1e-9 relative slack, and the returned
 * event is clamped onto the path.
 *
 * For the instantaneous variant the front covers all space from origin.t on,
 * so arrival is at t = origin.t (or at emission, if the photon does not yet
 * exist then).
 */
inline std::optional<Event> arrival_event(const FtlSignal& signal,
                                          const Worldline& target) {
    require_frame(signal.origin, Frame::Preferred, "arrival_event");
    if (target.frame() != Frame::Preferred) {
        throw std::invalid_argument("arrival_event: target worldline must be in the preferred frame");
    }

    const Event detection = target.detection();
    const double end_slack = kDerivedTol * std::max(1.0, std::abs(detection.t));

    if (signal.speed.is_instantaneous()) {
        const double t = std::max(signal.origin.t, target.emission().t);
        if (t > detection.t + end_slack) return std::nullopt;
        const double tc = std::min(t, detection.t);
        return Event{tc, target.position_at(tc), Frame::Preferred};
    }

    const double ubar = signal.speed.ubar();
    const std::size_t n_segments = target.segments().size();
    double seg_start_t = target.emission().t;
    Vec3 seg_start_pos = target.emission().r;

    for (std::size_t i = 0; i < n_segments; ++i) {
        const auto& seg = target.segments()[i];
        const bool last = (i + 1 == n_segments);
        const double s_hi = seg.duration + (last ? end_slack : 0.0);
        const double s_lo = std::max(0.0, signal.origin.t - seg_start_t);
        if (s_lo <= s_hi) {
            const auto s = detail::segment_catch(seg_start_pos, seg.direction,
                                                 seg_start_t - signal.origin.t,
                                                 signal.origin.r, ubar, s_lo, s_hi);
            if (s) {
                const double sc = std::min(*s, seg.duration);
                return Event{seg_start_t + sc,
                             seg_start_pos + seg.direction * sc, Frame::Preferred};
            }
        }
        seg_start_t += seg.duration;
        seg_start_pos = seg_start_pos + seg.direction * seg.duration;
    }
    return std::nullopt;
}

/// How the lab frame describes one trigger/arrival pair.
enum class NarrativeKind {
    ForwardSignal,           // arrival after trigger in the lab, too
    SimultaneousInstantaneous,  // both at one lab instant: instantly connected
    SpontaneousForcingThenBackSignal,  // arrival first: the partner
                                       // "spontaneously" acquires its state,
                                       // then a signal runs back to the
                                       // trigger point at speed c^2/v
};

inline const char* to_string(NarrativeKind k) {
    switch (k) {
        case NarrativeKind::ForwardSignal: return "forward signal";
        case NarrativeKind::SimultaneousInstantaneous: return "simultaneous, instantly connected";
        default: return "spontaneous forcing then back-propagating signal";
    }
}

/// Trigger and arrival transformed to lab coordinates and ordered by lab
/// time, with the lab reading of the connection between them. signal_speed
/// is the implied lab propagation speed (empty when the pair is simultaneous
/// in the lab, i.e. the connection is instantaneous there).
struct LabNarrative {
    Event first;
    Event second;
    NarrativeKind kind = NarrativeKind::ForwardSignal;
    std::optional<double> signal_speed;
};

inline LabNarrative induced_lab_narrative(const FtlSignal& signal, const Boost& b,
                                          const Worldline& target) {
    const auto arrival = arrival_event(signal, target);
    if (!arrival) {
        throw std::invalid_argument("induced_lab_narrative: the signal never reaches the target");
    }
    const Event trigger_lab = boost_event(signal.origin, b);
    const Event arrival_lab = boost_event(*arrival, b);

    const double dt = arrival_lab.t - trigger_lab.t;
    const double dist = (arrival_lab.r - trigger_lab.r).norm();
    const double tol = kDerivedTol * std::max({1.0, std::abs(arrival_lab.t),
                                               std::abs(trigger_lab.t)});

    LabNarrative out;
    if (std::abs(dt) <= tol) {
        out.kind = NarrativeKind::SimultaneousInstantaneous;
        out.first = trigger_lab;
        out.second = arrival_lab;
        out.signal_speed = std::nullopt;
    } else if (dt > 0.0) {
        out.kind = NarrativeKind::ForwardSignal;
        out.first = trigger_lab;
        out.second = arrival_lab;
        out.signal_speed = dist / dt;
    } else {
        out.kind = NarrativeKind::SpontaneousForcingThenBackSignal;
        out.first = arrival_lab;
        out.second = trigger_lab;
        out.signal_speed = dist / (-dt);
    }
    return out;
}

}  // namespace tachy
