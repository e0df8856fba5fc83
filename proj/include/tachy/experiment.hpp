#pragma once

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "tachy/ftl.hpp"
#include "tachy/kinematics.hpp"
#include "tachy/worldline.hpp"

namespace tachy {

// ---------------------------------------------------------------------------
// Configuration

/// Detectors on the lab x-axis at x' = -l1 and x' = +l2, source at the
/// origin. All lengths are lab-frame quantities.
struct CollinearGeometry {
    double l1 = 1.0;
    double l2 = 1.0;
};

/// Detectors on the lab y-axis at y' = -l1 and y' = +l2.
struct TransverseGeometry {
    double l1 = 1.0;
    double l2 = 1.0;
};

/// Collinear setup with an up-and-over detour folded into either photon's
/// path. Detours are parametrized by added path length, not height: only the
/// extra length affects timing.
struct DetouredGeometry {
    CollinearGeometry base;
    double left_extra = 0.0;   // added path length on the nu1 side
    double right_extra = 0.0;  // added path length on the nu2 side
};

using Geometry = std::variant<CollinearGeometry, TransverseGeometry, DetouredGeometry>;

/// Added path length of an isosceles bump of height h over base d.
inline double detour_extra_from_height(double height, double base) {
    return 2.0 * std::sqrt(0.25 * base * base + height * height) - base;
}

/// Where the superluminal interaction is triggered. Only the detector is
/// implemented; the polarizer variant is reserved configuration surface.
enum class TriggerPoint { Detector, Polarizer };

struct ExperimentConfig {
    Velocity v;                                 // lab velocity w.r.t. preferred, |v| < 1
    FtlSpeed ftl = FtlSpeed::instantaneous();
    Geometry geometry = CollinearGeometry{};
    TriggerPoint trigger = TriggerPoint::Detector;
    Frame geometry_frame = Frame::Lab;          // lengths are lab-frame quantities

    /// All validation problems at once (empty = valid).
    std::vector<std::string> validate() const {
        std::vector<std::string> problems;
        if (!v.finite() || v.norm() >= 1.0) {
            problems.push_back("v: frame speed must be finite and < 1");
        }
        const auto check_lengths = [&](double l1, double l2) {
            if (!(l1 > 0.0) || !std::isfinite(l1)) problems.push_back("l1: must be > 0");
            if (!(l2 > 0.0) || !std::isfinite(l2)) problems.push_back("l2: must be > 0");
        };
        if (const auto* c = std::get_if<CollinearGeometry>(&geometry)) {
            check_lengths(c->l1, c->l2);
        } else if (const auto* t = std::get_if<TransverseGeometry>(&geometry)) {
            check_lengths(t->l1, t->l2);
        } else if (const auto* d = std::get_if<DetouredGeometry>(&geometry)) {
            check_lengths(d->base.l1, d->base.l2);
            if (!(d->left_extra >= 0.0) || !std::isfinite(d->left_extra)) {
                problems.push_back("left_extra: must be >= 0");
            }
            if (!(d->right_extra >= 0.0) || !std::isfinite(d->right_extra)) {
                problems.push_back("right_extra: must be >= 0");
            }
        }
        if (trigger != TriggerPoint::Detector) {
            problems.push_back("trigger: only 'detector' is implemented");
        }
        if (geometry_frame != Frame::Lab) {
            problems.push_back("geometry_frame: lengths must be lab-frame quantities");
        }
        return problems;
    }
};

// ---------------------------------------------------------------------------
// Outcome record

enum class FirstDetected { Nu1, Nu2, Simultaneous };

inline const char* to_string(FirstDetected f) {
    switch (f) {
        case FirstDetected::Nu1: return "nu1";
        case FirstDetected::Nu2: return "nu2";
        default: return "simultaneous";
    }
}

/// Frame-(in)dependence of the detection order: space-like pairs have no
/// absolute order, time-like (and light-like) pairs keep their order in
/// every frame.
enum class OrderClass { Nu1FirstAllFrames, Nu2FirstAllFrames, FrameDependent };

inline const char* to_string(OrderClass c) {
    switch (c) {
        case OrderClass::Nu1FirstAllFrames: return "nu1_first_all_frames";
        case OrderClass::Nu2FirstAllFrames: return "nu2_first_all_frames";
        default: return "frame_dependent";
    }
}

/**
 * Full event record of one run, in both frames. The trigger is the
 * preferred-frame detection of the first-detected photon (nu1 on an exact
 * tie); the arrival is the earliest contact of the front with the partner's
 * worldline, empty when the partner is detected before the front reaches it.
 * `correlated` is the arrival-before-partner-detection predicate evaluated
 * in the preferred frame, boundary-inclusive.
 */
struct Outcome {
    Event detection1_preferred, detection1_lab;
    Event detection2_preferred, detection2_lab;
    FirstDetected first_in_preferred = FirstDetected::Simultaneous;
    Event ftl_trigger;                  // preferred frame
    std::optional<Event> ftl_arrival;   // preferred frame; empty = NoArrival
    bool correlated = false;
    IntervalClass pair_interval;
    OrderClass order_class = OrderClass::FrameDependent;

    /// Detection of the photon the signal was sent to (preferred frame).
    const Event& partner_detection_preferred() const {
        return first_in_preferred == FirstDetected::Nu2 ? detection1_preferred
                                                        : detection2_preferred;
    }
};

/// correlated iff the front reaches the partner no later than its detection
/// (inclusive within 1e-9 relative, in the preferred frame).
inline bool correlation_predicate(const Outcome& o) {
    if (!o.ftl_arrival) return false;
    const double t_det = o.partner_detection_preferred().t;
    return o.ftl_arrival->t <= t_det + kDerivedTol * std::max(1.0, std::abs(t_det));
}

// ---------------------------------------------------------------------------
// Running experiments

namespace detail {

/// Lab worldline of one photon: from the source at the lab origin toward
/// `axis` (+-x or +-y), detector at distance l, optionally via a detour bump
/// of added path length `extra` (folded in the x-y plane).
inline Worldline photon_lab_worldline(const Vec3& axis, double l, double extra) {
    const Event emission{0.0, {0, 0, 0}, Frame::Lab};
    if (extra <= 0.0) {
        return Worldline(emission, {{axis, l}});
    }
    const double leg = 0.5 * (l + extra);
    const double height = std::sqrt(std::max(leg * leg - 0.25 * l * l, 0.0));
    // Bump axis: perpendicular to the flight axis, in the x-y plane.
    const Vec3 perp = std::abs(axis.x) > 0.5 ? Vec3{0, 1, 0} : Vec3{1, 0, 0};
    const Vec3 apex = axis * (0.5 * l) + perp * height;
    const Vec3 detector = axis * l;
    std::vector<Worldline::Segment> segs = {
        {apex.normalized(), leg},
        {(detector - apex).normalized(), leg},
    };
    return Worldline(emission, std::move(segs));
}

enum class TriggerChoice { Auto, ForceNu1, ForceNu2 };

inline Outcome run_pair(const ExperimentConfig& cfg, const Worldline& nu1_lab,
                        const Worldline& nu2_lab,
                        TriggerChoice choice = TriggerChoice::Auto) {
    const Boost boost(cfg.v);
    const Worldline nu1 = nu1_lab.transformed(boost, Frame::Preferred);
    const Worldline nu2 = nu2_lab.transformed(boost, Frame::Preferred);

    Outcome o;
    o.detection1_lab = nu1_lab.detection();
    o.detection2_lab = nu2_lab.detection();
    o.detection1_preferred = nu1.detection();
    o.detection2_preferred = nu2.detection();

    const double t1 = o.detection1_preferred.t;
    const double t2 = o.detection2_preferred.t;
    const double tie_tol = kDerivedTol * std::max({1.0, std::abs(t1), std::abs(t2)});
    if (std::abs(t1 - t2) <= tie_tol) {
        o.first_in_preferred = FirstDetected::Simultaneous;
    } else {
        o.first_in_preferred = t1 < t2 ? FirstDetected::Nu1 : FirstDetected::Nu2;
    }

    bool nu1_triggers = o.first_in_preferred != FirstDetected::Nu2;
    if (choice == TriggerChoice::ForceNu1) nu1_triggers = true;
    if (choice == TriggerChoice::ForceNu2) nu1_triggers = false;

    const Worldline& partner = nu1_triggers ? nu2 : nu1;
    o.ftl_trigger = nu1_triggers ? o.detection1_preferred : o.detection2_preferred;
    if (choice != TriggerChoice::Auto) {
        // forced narrative: keep the partner bookkeeping consistent
        o.first_in_preferred = nu1_triggers ? FirstDetected::Nu1 : FirstDetected::Nu2;
    }

    o.ftl_arrival = arrival_event(FtlSignal{o.ftl_trigger, cfg.ftl}, partner);
    o.correlated = correlation_predicate(o);

    o.pair_interval = interval(o.detection1_preferred, o.detection2_preferred);
    if (o.pair_interval.kind == IntervalKind::SpaceLike) {
        o.order_class = OrderClass::FrameDependent;
    } else {
        o.order_class = t1 <= t2 ? OrderClass::Nu1FirstAllFrames
                                 : OrderClass::Nu2FirstAllFrames;
    }
    return o;
}

inline void throw_if_invalid(const ExperimentConfig& cfg) {
    const auto problems = cfg.validate();
    if (!problems.empty()) {
        std::string msg = "invalid experiment config:";
        for (const auto& p : problems) msg += " [" + p + "]";
        throw std::invalid_argument(msg);
    }
}

}  // namespace detail

/// Run any collinear-family geometry (plain or detoured): nu1 toward -x,
/// nu2 toward +x, source at the lab origin.
inline Outcome run_collinear(const ExperimentConfig& cfg) {
    detail::throw_if_invalid(cfg);
    double l1 = 0, l2 = 0, extra1 = 0, extra2 = 0;
    if (const auto* c = std::get_if<CollinearGeometry>(&cfg.geometry)) {
        l1 = c->l1;
        l2 = c->l2;
    } else if (const auto* d = std::get_if<DetouredGeometry>(&cfg.geometry)) {
        l1 = d->base.l1;
        l2 = d->base.l2;
        extra1 = d->left_extra;
        extra2 = d->right_extra;
    } else {
        throw std::invalid_argument("run_collinear: geometry is not collinear");
    }
    const auto nu1 = detail::photon_lab_worldline({-1, 0, 0}, l1, extra1);
    const auto nu2 = detail::photon_lab_worldline({+1, 0, 0}, l2, extra2);
    return detail::run_pair(cfg, nu1, nu2);
}

/// Lab-frame distance l1 making the detection points equidistant from the
/// source in the preferred frame: l1 = ((1+v)/(1-v)) l2.
inline double equidistant_l1(double l2, double v) {
    if (!(v >= 0.0) || v >= 1.0) {
        throw std::invalid_argument("equidistant_l1: need 0 <= v < 1");
    }
    return (1.0 + v) / (1.0 - v) * l2;
}

/// Equidistant-in-preferred-frame run evaluated under both trigger choices.
/// With a finite front speed the two lab narratives disagree about which
/// photon acts first, but they agree on the prediction: no correlation. The
/// instantaneous front connects the simultaneous detections in either
/// reading.
struct EquidistantOutcome {
    Outcome outcome;             // tie resolved in favor of nu1
    bool correlated_nu1_trigger = false;
    bool correlated_nu2_trigger = false;
};

inline EquidistantOutcome run_equidistant_test(double l2, double v, const FtlSpeed& ftl) {
    ExperimentConfig cfg;
    cfg.v = {v, 0, 0};
    cfg.ftl = ftl;
    cfg.geometry = CollinearGeometry{equidistant_l1(l2, v), l2};
    detail::throw_if_invalid(cfg);

    const auto* geom = std::get_if<CollinearGeometry>(&cfg.geometry);
    const auto nu1 = detail::photon_lab_worldline({-1, 0, 0}, geom->l1, 0.0);
    const auto nu2 = detail::photon_lab_worldline({+1, 0, 0}, geom->l2, 0.0);

    EquidistantOutcome out;
    out.outcome = detail::run_pair(cfg, nu1, nu2);
    out.correlated_nu1_trigger =
        detail::run_pair(cfg, nu1, nu2, detail::TriggerChoice::ForceNu1).correlated;
    out.correlated_nu2_trigger =
        detail::run_pair(cfg, nu1, nu2, detail::TriggerChoice::ForceNu2).correlated;
    return out;
}

/// Transverse run: detectors on the lab y-axis, frame motion along x. The
/// measured lab-frame transverse signal speed u'_y determines the
/// preferred-frame signal velocity (ubar_x = v, ubar_y = u'_y/gamma) and so
/// the isotropic speed ubar; the run then uses that front speed.
struct TransverseResult {
    Outcome outcome;
    Velocity ubar_preferred;  // full preferred-frame signal velocity
    double ubar = 0.0;        // its magnitude
};

inline TransverseResult run_transverse(const ExperimentConfig& cfg, double u_prime_y) {
    detail::throw_if_invalid(cfg);
    const auto* geom = std::get_if<TransverseGeometry>(&cfg.geometry);
    if (!geom) {
        throw std::invalid_argument("run_transverse: geometry is not transverse");
    }
    if (cfg.v.y != 0.0 || cfg.v.z != 0.0) {
        throw std::invalid_argument("run_transverse: standard configuration needs v along x");
    }
    if (!(u_prime_y > 1.0) || !std::isfinite(u_prime_y)) {
        throw std::invalid_argument("run_transverse: u'_y must be superluminal (> 1)");
    }

    const Boost boost(cfg.v);
    const auto ubar_vec = compose_velocity_to_preferred({0, u_prime_y, 0}, boost);
    // The transverse composition denominator is 1 + 0*v: never a pole.
    TransverseResult out;
    out.ubar_preferred = *ubar_vec;
    out.ubar = ubar_vec->norm();

    ExperimentConfig run_cfg = cfg;
    run_cfg.ftl = FtlSpeed::finite(out.ubar);
    const auto nu1 = detail::photon_lab_worldline({0, -1, 0}, geom->l1, 0.0);
    const auto nu2 = detail::photon_lab_worldline({0, +1, 0}, geom->l2, 0.0);
    out.outcome = detail::run_pair(run_cfg, nu1, nu2);
    return out;
}

// ---------------------------------------------------------------------------
// Detour sweep

struct SweepRow {
    double delta_left = 0.0;
    double delta_right = 0.0;
    OrderClass order_class = OrderClass::FrameDependent;
    bool correlated = false;
    double s2 = 0.0;
    double t1_preferred = 0.0;
    double t2_preferred = 0.0;
    double tf_preferred = std::numeric_limits<double>::quiet_NaN();  // NaN = NoArrival
};

/// Grid results in deterministic row-major order (left grid outer, right
/// grid inner), independent of how many threads evaluated them.
struct SweepTable {
    std::vector<double> left_grid;
    std::vector<double> right_grid;
    std::vector<SweepRow> rows;

    const SweepRow& at(std::size_t i_left, std::size_t i_right) const {
        return rows[i_left * right_grid.size() + i_right];
    }

    /// Cells (i, j), j > 0, whose order_class differs from cell (i, j-1):
    /// the sweep's bracketing of the region where the front stops mattering.
    std::vector<std::pair<std::size_t, std::size_t>> order_transitions() const {
        std::vector<std::pair<std::size_t, std::size_t>> out;
        for (std::size_t i = 0; i < left_grid.size(); ++i) {
            for (std::size_t j = 1; j < right_grid.size(); ++j) {
                if (at(i, j).order_class != at(i, j - 1).order_class) {
                    out.emplace_back(i, j);
                }
            }
        }
        return out;
    }

    void write_csv(std::ostream& os) const {
        os << "delta_left,delta_right,order_class,correlated,s2,t1_S,t2_S,tF_S\n";
        for (const auto& r : rows) {
            os << format_g15(r.delta_left) << ',' << format_g15(r.delta_right) << ','
               << to_string(r.order_class) << ',' << (r.correlated ? 1 : 0) << ','
               << format_g15(r.s2) << ',' << format_g15(r.t1_preferred) << ','
               << format_g15(r.t2_preferred) << ',' << format_g15(r.tf_preferred)
               << '\n';
        }
    }
};

/**
 * Evaluate the detour grid: for every (left_extra, right_extra) pair, run the
 * detoured collinear experiment and record order class, correlation flag and
 * the preferred-frame timings. Cells are independent; `threads` > 1 splits
 * the grid across workers, results always land in grid order.
 */
inline SweepTable detour_sweep(const ExperimentConfig& base,
                               const std::vector<double>& left_grid,
                               const std::vector<double>& right_grid,
                               unsigned threads = 1) {
    if (left_grid.empty() || right_grid.empty()) {
        throw std::invalid_argument("detour_sweep: empty grid");
    }
    for (double d : left_grid) {
        if (!(d >= 0.0) || !std::isfinite(d)) {
            throw std::invalid_argument("detour_sweep: left grid entries must be >= 0");
        }
    }
    for (double d : right_grid) {
        if (!(d >= 0.0) || !std::isfinite(d)) {
            throw std::invalid_argument("detour_sweep: right grid entries must be >= 0");
        }
    }
    CollinearGeometry base_geom;
    if (const auto* c = std::get_if<CollinearGeometry>(&base.geometry)) {
        base_geom = *c;
    } else if (const auto* d = std::get_if<DetouredGeometry>(&base.geometry)) {
        base_geom = d->base;
    } else {
        throw std::invalid_argument("detour_sweep: geometry is not collinear");
    }

    SweepTable table;
    table.left_grid = left_grid;
    table.right_grid = right_grid;
    table.rows.resize(left_grid.size() * right_grid.size());

    const auto run_cell = [&](std::size_t index) {
        const std::size_t i = index / right_grid.size();
        const std::size_t j = index % right_grid.size();
        ExperimentConfig cfg = base;
        cfg.geometry = DetouredGeometry{base_geom, left_grid[i], right_grid[j]};
        const Outcome o = run_collinear(cfg);
        SweepRow& row = table.rows[index];
        row.delta_left = left_grid[i];
        row.delta_right = right_grid[j];
        row.order_class = o.order_class;
        row.correlated = o.correlated;
        row.s2 = o.pair_interval.s2;
        row.t1_preferred = o.detection1_preferred.t;
        row.t2_preferred = o.detection2_preferred.t;
        if (o.ftl_arrival) row.tf_preferred = o.ftl_arrival->t;
    };

    const std::size_t n = table.rows.size();
    const unsigned workers = std::max(1u, std::min<unsigned>(threads, n));
    if (workers == 1) {
        for (std::size_t k = 0; k < n; ++k) run_cell(k);
        return table;
    }

    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t k = w; k < n; k += workers) run_cell(k);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
    return table;
}

}  // namespace tachy
