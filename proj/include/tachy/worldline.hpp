#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "tachy/kinematics.hpp"

namespace tachy {

/**
 * Piecewise-linear photon path: an emission event followed by segments each
 * traversed at speed exactly 1, so total path length equals detection time
 * minus emission time. Segments are contiguous by construction. The final
 * vertex is the detection event; the photon does not exist after it.
 *
 * A detour (an extra leg folded into the path) just adds segments; the
 * timing only ever sees the added path length.
 */
class Worldline {
public:
    struct Segment {
        Vec3 direction;   // unit vector
        double duration;  // > 0, also the segment's path length (c = 1)
    };

    Worldline(const Event& emission, std::vector<Segment> segments)
        : emission_(emission), segments_(std::move(segments)) {
        if (segments_.empty()) {
            throw std::invalid_argument("Worldline: needs at least one segment");
        }
        for (auto& seg : segments_) {
            const double n = seg.direction.norm();
            if (!(seg.duration > 0.0) || !std::isfinite(seg.duration) ||
                std::abs(n - 1.0) > kDerivedTol) {
                throw std::invalid_argument(
                    "Worldline: segment is not light-like (unit direction, "
                    "positive duration required)");
            }
            seg.direction = seg.direction / n;
        }
    }

    /// Build from an ordered vertex list (emission first, detection last).
    /// Consecutive vertices must be light-like separated within 1e-9 relative;
    /// anything else is rejected as a malformed photon path.
    static Worldline from_vertices(const std::vector<Event>& vertices) {
        if (vertices.size() < 2) {
            throw std::invalid_argument("Worldline: needs at least two vertices");
        }
        std::vector<Segment> segs;
        segs.reserve(vertices.size() - 1);
        for (std::size_t i = 1; i < vertices.size(); ++i) {
            if (vertices[i].frame != vertices[0].frame) {
                throw std::invalid_argument("Worldline: mixed-frame vertices");
            }
            const double dt = vertices[i].t - vertices[i - 1].t;
            const Vec3 dr = vertices[i].r - vertices[i - 1].r;
            const double len = dr.norm();
            if (!(dt > 0.0) || std::abs(len - dt) > kDerivedTol * std::max(1.0, dt)) {
                throw std::invalid_argument(
                    "Worldline: vertices are not light-like separated");
            }
            segs.push_back({dr / len, dt});
        }
        return Worldline(vertices[0], std::move(segs));
    }

    const Event& emission() const { return emission_; }
    const std::vector<Segment>& segments() const { return segments_; }
    Frame frame() const { return emission_.frame; }

    /// Vertex i (0 = emission, segments().size() = detection).
    Event vertex(std::size_t i) const {
        Event e = emission_;
        for (std::size_t k = 0; k < i && k < segments_.size(); ++k) {
            e.t += segments_[k].duration;
            e.r = e.r + segments_[k].direction * segments_[k].duration;
        }
        return e;
    }

    Event detection() const { return vertex(segments_.size()); }

    /// Photon position at time t, valid on [emission.t, detection.t] with a
    /// small relative slack at both ends.
    Vec3 position_at(double t) const {
        const double t_end = detection().t;
        const double slack = kDerivedTol * std::max(1.0, std::abs(t_end));
        if (t < emission_.t - slack || t > t_end + slack) {
            throw std::out_of_range("Worldline: time outside emission-detection span");
        }
        double seg_start = emission_.t;
        Vec3 pos = emission_.r;
        for (const auto& seg : segments_) {
            const double local = std::min(std::max(t - seg_start, 0.0), seg.duration);
            if (t <= seg_start + seg.duration) {
                return pos + seg.direction * local;
            }
            pos = pos + seg.direction * seg.duration;
            seg_start += seg.duration;
        }
        return pos;  // clamped to detection within the slack
    }

    /// The same path re-expressed in the other frame: vertices are boosted
    /// and the path rebuilt (light travels straight in every frame, so the
    /// boosted vertices again bound light-like segments).
    Worldline transformed(const Boost& b, Frame target) const {
        std::vector<Event> verts;
        verts.reserve(segments_.size() + 1);
        for (std::size_t i = 0; i <= segments_.size(); ++i) {
            verts.push_back(to_frame(vertex(i), b, target));
        }
        return from_vertices(verts);
    }

private:
    Event emission_;
    std::vector<Segment> segments_;
};

}  // namespace tachy
