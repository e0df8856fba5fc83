#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tachy/ftl.hpp"
#include "tachy/kinematics.hpp"

namespace tachy {

/// One directional speed measurement: apparatus angle in the lab plane
/// (radians from an arbitrary lab reference axis) and the signal speed
/// observed along that ray.
struct DirectionalMeasurement {
    double phi = 0.0;
    double u_prime = 0.0;
    std::optional<double> noise_sigma;
};

/// Recovered frame parameters. `residual` is the root-mean-square isotropy
/// violation of the back-composed speeds, relative to their mean. When the
/// measurements are isotropic within noise the speed is unidentifiable: the
/// orientation means nothing and the speed is reported as zero.
struct RecoveryResult {
    double speed = 0.0;
    double orientation = 0.0;  // radians in [0, 2 pi)
    double ubar = 0.0;
    double residual = 0.0;
    bool identifiable = false;
    bool instantaneous = false;  // ubar beyond 1e6: instantaneous within resolution
};

struct InsufficientDataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NoConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Forward model

/// forward_measurements output: the rays that carry a front, plus the rays
/// where the transformed speed diverges (instantaneous in the lab) or no
/// front propagates at all. Excluded rays are reported, not silently dropped.
struct ForwardMeasurements {
    std::vector<DirectionalMeasurement> measurements;
    std::vector<double> excluded_phis;
};

namespace detail {

/// Hard cap on the trial boost speed. As |w| -> 1 every lab velocity
/// back-composes to speed 1 (the light cone swallows everything), which
/// makes the isotropy objective spuriously flat near the boundary; trial
/// points are kept away from it and candidates pressed against the cap are
/// rejected as degenerate.
inline constexpr double kSolverSpeedCap = 0.999;
inline constexpr double kSolverDegenerateBand = 0.998;

/// Lab speed s > 0 along the lab ray n' for a front that is isotropic at
/// `ubar` in the preferred frame. s solves |compose_to_preferred(s n')| =
/// ubar, which clears to a quadratic in s. Only the "direct" root is a
/// front actually propagating along the ray: the one with composition
/// denominator 1 + s n'.v > 0. A root with negative denominator is the
/// time-reversed image of the counter-propagating front, and the sign
/// structure of the quadratic guarantees at most one direct root per ray.
inline std::optional<double> lab_ray_speed(const Vec3& ray, const Velocity& v,
                                           double ubar) {
    const double vnorm = v.norm();
    if (vnorm == 0.0) return ubar;
    const Vec3 vhat = v / vnorm;
    const double g = 1.0 / std::sqrt(1.0 - vnorm * vnorm);
    const double c1 = ray.dot(vhat);
    const double A = (g - 1.0) * c1;
    const double B = g * vnorm;
    const double u2g2 = ubar * ubar * g * g;

    const double a = 1.0 + 2.0 * c1 * A + A * A - u2g2 * vnorm * vnorm * c1 * c1;
    const double b = 2.0 * B * (c1 + A) - 2.0 * u2g2 * vnorm * c1;
    const double c = B * B - u2g2;

    std::array<double, 2> roots{};
    int n_roots = 0;
    if (std::abs(a) < 1e-14 * (std::abs(b) + std::abs(c) + 1.0)) {
        if (b != 0.0) roots[n_roots++] = -c / b;
    } else {
        const double disc = b * b - 4.0 * a * c;
        if (disc < 0.0) return std::nullopt;
        const double sq = std::sqrt(disc);
        const double q = -0.5 * (b + (b >= 0.0 ? sq : -sq));
        roots[n_roots++] = q / a;
        if (q != 0.0) roots[n_roots++] = c / q;
    }

    std::optional<double> best;
    for (int i = 0; i < n_roots; ++i) {
        const double s = roots[i];
        if (!(s > 0.0) || !std::isfinite(s)) continue;
        if (1.0 + s * vnorm * c1 <= 0.0) continue;  // reversed image
        if (!best || s < *best) best = s;
    }
    return best;
}

/**
 * Closed-form estimate of the boost velocity from the measurements. Boosting
 * the signal 4-vector (1, u') to the preferred frame and using the
 * invariance of its Minkowski norm turns the isotropy constraint into
 *
 *     1 + u'_i . w = (kappa/gamma) sqrt(s_i^2 - 1),   kappa = 1/sqrt(ubar^2-1)
 *
 * one equation per measurement, linear in (w, kappa/gamma). Three unknowns,
 * n >= 3 equations: an ordinary least-squares solve. Exact on noiseless
 * data; used to seed the local refinement, since the variance objective's
 * basin around the truth can be far narrower than any practical start grid.
 */
inline std::optional<Vec3> celerity_linear_seed(
    const std::vector<DirectionalMeasurement>& ms) {
    double m00 = 0, m01 = 0, m02 = 0, m11 = 0, m12 = 0, m22 = 0;
    double r0 = 0, r1 = 0, r2 = 0;
    for (const auto& m : ms) {
        const double px = m.u_prime * std::cos(m.phi);
        const double py = m.u_prime * std::sin(m.phi);
        const double q = -std::sqrt(std::max(m.u_prime * m.u_prime - 1.0, 1e-300));
        m00 += px * px;
        m01 += px * py;
        m02 += px * q;
        m11 += py * py;
        m12 += py * q;
        m22 += q * q;
        r0 -= px;
        r1 -= py;
        r2 -= q;
    }
    const double det = m00 * (m11 * m22 - m12 * m12) - m01 * (m01 * m22 - m12 * m02) +
                       m02 * (m01 * m12 - m11 * m02);
    const double scale = std::max({std::abs(m00), std::abs(m11), std::abs(m22), 1.0});
    if (std::abs(det) < 1e-12 * scale * scale * scale) return std::nullopt;

    const double wx = (r0 * (m11 * m22 - m12 * m12) - m01 * (r1 * m22 - m12 * r2) +
                       m02 * (r1 * m12 - m11 * r2)) /
                      det;
    const double wy = (m00 * (r1 * m22 - m12 * r2) - r0 * (m01 * m22 - m12 * m02) +
                       m02 * (m01 * r2 - r1 * m02)) /
                      det;
    const double kappa_over_gamma =
        (m00 * (m11 * r2 - r1 * m12) - m01 * (m01 * r2 - r1 * m02) +
         r0 * (m01 * m12 - m11 * m02)) /
        det;

    if (!(kappa_over_gamma > 0.0)) return std::nullopt;
    Vec3 w{wx, wy, 0.0};
    if (!w.finite()) return std::nullopt;
    if (w.norm() > kSolverDegenerateBand) {
        w = w * ((kSolverDegenerateBand - 1e-3) / w.norm());
    }
    return w;
}

}  // namespace detail

/**
 * Synthesize the lab-frame directional speeds an apparatus would measure for
 * a front that propagates isotropically at `ubar` (> 1, finite) in the
 * preferred frame, with the lab moving at planar velocity v. Rays on which
 * the transformed speed diverges, or along which no front propagates (the
 * sector beyond the composition pole maps every front to the opposite ray),
 * are excluded and reported.
 */
inline ForwardMeasurements forward_measurements(const Velocity& v, const FtlSpeed& ubar,
                                                const std::vector<double>& phis) {
    if (ubar.is_instantaneous()) {
        throw std::invalid_argument("forward_measurements: need a finite front speed");
    }
    if (!v.finite() || v.norm() >= 1.0 || v.z != 0.0) {
        throw std::invalid_argument("forward_measurements: v must be planar with |v| < 1");
    }
    ForwardMeasurements out;
    for (double phi : phis) {
        const Vec3 ray{std::cos(phi), std::sin(phi), 0.0};
        const auto s = detail::lab_ray_speed(ray, v, ubar.ubar());
        if (s) {
            out.measurements.push_back({phi, *s, std::nullopt});
        } else {
            out.excluded_phis.push_back(phi);
        }
    }
    return out;
}

/// Multiplicative Gaussian noise, deterministic under the seed; stamps each
/// measurement with the sigma it was degraded by.
inline void apply_multiplicative_noise(std::vector<DirectionalMeasurement>& ms,
                                       double sigma, std::uint64_t seed) {
    std::mt19937_64 engine(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& m : ms) {
        m.u_prime *= 1.0 + sigma * gauss(engine);
        m.noise_sigma = sigma;
    }
}

// ---------------------------------------------------------------------------
// Recovery

namespace detail {

struct Objective {
    const std::vector<DirectionalMeasurement>& ms;

    /// Residual vector r_i = q_i / mean(q) - 1 with q_i the squared
    /// preferred-frame speed of measurement i under trial velocity w.
    /// Isotropy in the preferred frame means r = 0 at the true w.
    bool residuals(const Vec3& w, std::vector<double>& r) const {
        if (w.norm() > kSolverSpeedCap) return false;
        const Boost boost(w);
        double mean = 0.0;
        for (std::size_t i = 0; i < ms.size(); ++i) {
            const Vec3 u_lab{ms[i].u_prime * std::cos(ms[i].phi),
                             ms[i].u_prime * std::sin(ms[i].phi), 0.0};
            const auto u = compose_velocity_to_preferred(u_lab, boost);
            if (!u) return false;  // trial boost puts a measurement on the pole
            r[i] = u->norm2();
            mean += r[i];
        }
        mean /= static_cast<double>(ms.size());
        if (!(mean > 0.0) || !std::isfinite(mean)) return false;
        for (auto& ri : r) ri = ri / mean - 1.0;
        return true;
    }

    double value(const Vec3& w, std::vector<double>& scratch) const {
        if (!residuals(w, scratch)) return 1e30;
        double j = 0.0;
        for (double ri : scratch) j += ri * ri;
        return j;
    }
};

/// Damped least squares over the planar boost components (wx, wy), Jacobian
/// by central finite differences with step 1e-7. Two parameters, so the
/// normal equations are a 2x2 solve.
inline Vec3 refine(const Objective& obj, Vec3 w, int max_iter = 200) {
    const std::size_t n = obj.ms.size();
    std::vector<double> r(n), r_lo(n), r_hi(n), r_try(n);
    const double fd_step = 1e-7;
    double lambda = 1e-3;

    if (!obj.residuals(w, r)) return w;
    double j_current = 0.0;
    for (double ri : r) j_current += ri * ri;

    for (int iter = 0; iter < max_iter; ++iter) {
        // Central-difference Jacobian, columns for wx and wy.
        std::array<std::vector<double>, 2> jac;
        bool ok = true;
        for (int p = 0; p < 2; ++p) {
            Vec3 lo = w, hi = w;
            (p == 0 ? lo.x : lo.y) -= fd_step;
            (p == 0 ? hi.x : hi.y) += fd_step;
            if (!obj.residuals(lo, r_lo) || !obj.residuals(hi, r_hi)) {
                ok = false;
                break;
            }
            jac[p].resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                jac[p][i] = (r_hi[i] - r_lo[i]) / (2.0 * fd_step);
            }
        }
        if (!ok) break;

        double jtj00 = 0, jtj01 = 0, jtj11 = 0, jtr0 = 0, jtr1 = 0;
        for (std::size_t i = 0; i < n; ++i) {
            jtj00 += jac[0][i] * jac[0][i];
            jtj01 += jac[0][i] * jac[1][i];
            jtj11 += jac[1][i] * jac[1][i];
            jtr0 += jac[0][i] * r[i];
            jtr1 += jac[1][i] * r[i];
        }

        bool stepped = false;
        for (int attempt = 0; attempt < 12 && !stepped; ++attempt) {
            const double a00 = jtj00 + lambda * (1.0 + jtj00);
            const double a11 = jtj11 + lambda * (1.0 + jtj11);
            const double det = a00 * a11 - jtj01 * jtj01;
            if (std::abs(det) < 1e-300) break;
            const double dx = (-jtr0 * a11 + jtr1 * jtj01) / det;
            const double dy = (-jtr1 * a00 + jtr0 * jtj01) / det;
            Vec3 w_try{w.x + dx, w.y + dy, 0.0};
            if (w_try.norm() > kSolverSpeedCap) {
                w_try = w_try * (kSolverSpeedCap / w_try.norm());
            }
            if (obj.residuals(w_try, r_try)) {
                double j_try = 0.0;
                for (double ri : r_try) j_try += ri * ri;
                if (j_try < j_current) {
                    const double step2 = dx * dx + dy * dy;
                    w = w_try;
                    r.swap(r_try);
                    j_current = j_try;
                    lambda = std::max(lambda * 0.3, 1e-14);
                    stepped = true;
                    if (step2 < 1e-28 || j_current < 1e-30) return w;
                    break;
                }
            }
            lambda *= 8.0;
        }
        if (!stepped) break;
    }
    return w;
}

}  // namespace detail

/**
 * Recover the lab frame's planar velocity (speed and orientation) and the
 * preferred-frame front speed from >= 3 directional measurements, using the
 * one fact the preferred frame guarantees: the back-composed speeds are all
 * equal. Minimizes the variance of the squared back-composed speeds. Local
 * refinements (damped least squares, finite-difference Jacobian) start from
 * the closed-form celerity seed plus a coarse 20 x 36 (speed x orientation)
 * grid; the grid alone can miss the optimum, whose basin narrows sharply as
 * ubar v grows. Candidates are ranked by residual, ties broken by lower
 * speed then lower orientation. Supported frame speeds: |v| below ~0.995
 * (beyond that the light-cone degeneracy makes speeds indistinguishable).
 *
 * Throws InsufficientDataError below 3 usable measurements (or angles) and
 * NoConvergenceError when no candidate explains the data to within
 * max(1e-6, 100 * noise sigma) relative residual.
 */
inline RecoveryResult recover_frame(const std::vector<DirectionalMeasurement>& input) {
    std::vector<DirectionalMeasurement> ms;
    for (const auto& m : input) {
        if (std::isfinite(m.phi) && std::isfinite(m.u_prime) && m.u_prime > 0.0) {
            ms.push_back(m);
        }
    }
    std::vector<double> angles;
    for (const auto& m : ms) {
        const double a = std::fmod(std::fmod(m.phi, 2.0 * M_PI) + 2.0 * M_PI, 2.0 * M_PI);
        bool fresh = true;
        for (double b : angles) {
            if (std::abs(a - b) < 1e-9 || std::abs(std::abs(a - b) - 2.0 * M_PI) < 1e-9) {
                fresh = false;
                break;
            }
        }
        if (fresh) angles.push_back(a);
    }
    if (ms.size() < 3 || angles.size() < 3) {
        throw InsufficientDataError("recover_frame: need >= 3 measurements at >= 3 distinct angles");
    }

    double mean_speed = 0.0, sigma_max = 0.0;
    for (const auto& m : ms) {
        mean_speed += m.u_prime;
        if (m.noise_sigma) sigma_max = std::max(sigma_max, *m.noise_sigma);
    }
    mean_speed /= static_cast<double>(ms.size());
    double var = 0.0;
    for (const auto& m : ms) {
        var += (m.u_prime - mean_speed) * (m.u_prime - mean_speed);
    }
    const double cv = std::sqrt(var / static_cast<double>(ms.size())) / mean_speed;

    RecoveryResult result;

    // Isotropic within noise: v ~ 0, the orientation is meaningless.
    const double iso_threshold = std::max(1e-9, 10.0 * sigma_max);
    if (cv < iso_threshold) {
        result.speed = 0.0;
        result.orientation = 0.0;
        result.ubar = mean_speed;
        result.residual = cv;
        result.identifiable = false;
        result.instantaneous = result.ubar > 1e6;
        return result;
    }

    const detail::Objective obj{ms};
    std::vector<double> scratch(ms.size());

    struct Candidate {
        Vec3 w;
        double j;
        std::size_t index;
    };
    std::vector<Candidate> starts;
    for (int is = 0; is < 20; ++is) {
        const double s = 0.95 * (is + 0.5) / 20.0;
        for (int ia = 0; ia < 36; ++ia) {
            const double a = 2.0 * M_PI * ia / 36.0;
            const Vec3 w{s * std::cos(a), s * std::sin(a), 0.0};
            starts.push_back({w, obj.value(w, scratch), starts.size()});
        }
    }

    // Refinement set: the best start on every speed ring plus the global
    // top eight. The light-cone degeneracy pulls refinements outward, so the
    // interior minimum must be approached from everywhere in speed.
    std::vector<std::size_t> to_refine;
    for (int is = 0; is < 20; ++is) {
        std::size_t ring_best = static_cast<std::size_t>(is) * 36;
        for (int ia = 1; ia < 36; ++ia) {
            const std::size_t k = static_cast<std::size_t>(is) * 36 + ia;
            if (starts[k].j < starts[ring_best].j) ring_best = k;
        }
        to_refine.push_back(ring_best);
    }
    std::vector<Candidate> by_value = starts;
    std::sort(by_value.begin(), by_value.end(),
              [](const Candidate& a, const Candidate& b) { return a.j < b.j; });
    for (int k = 0; k < 8 && k < static_cast<int>(by_value.size()); ++k) {
        to_refine.push_back(by_value[k].index);
    }
    std::sort(to_refine.begin(), to_refine.end());
    to_refine.erase(std::unique(to_refine.begin(), to_refine.end()), to_refine.end());

    std::vector<Vec3> seeds;
    if (const auto linear = detail::celerity_linear_seed(ms)) {
        seeds.push_back(*linear);
    }
    for (std::size_t k : to_refine) seeds.push_back(starts[k].w);

    std::optional<Candidate> best;
    for (const Vec3& seed : seeds) {
        const Vec3 w = detail::refine(obj, seed);
        if (w.norm() >= detail::kSolverDegenerateBand) continue;  // boundary fit
        const double j = obj.value(w, scratch);
        if (!std::isfinite(j) || j >= 1e30) continue;
        const auto better = [&] {
            if (!best) return true;
            if (j < best->j * (1.0 - 1e-12)) return true;
            if (j > best->j * (1.0 + 1e-12)) return false;
            const double s_new = w.norm(), s_old = best->w.norm();
            if (s_new < s_old - 1e-15) return true;
            if (s_new > s_old + 1e-15) return false;
            return std::atan2(w.y, w.x) < std::atan2(best->w.y, best->w.x);
        };
        if (better()) best = Candidate{w, j, 0};
    }
    if (!best) {
        throw NoConvergenceError(
            "recover_frame: every candidate collapsed onto the light-cone degeneracy");
    }

    const Boost boost(best->w);
    double mean_u = 0.0;
    std::vector<double> u_norms(ms.size());
    for (std::size_t i = 0; i < ms.size(); ++i) {
        const Vec3 u_lab{ms[i].u_prime * std::cos(ms[i].phi),
                         ms[i].u_prime * std::sin(ms[i].phi), 0.0};
        const auto u = compose_velocity_to_preferred(u_lab, boost);
        if (!u) throw NoConvergenceError("recover_frame: optimum sits on a composition pole");
        u_norms[i] = u->norm();
        mean_u += u_norms[i];
    }
    mean_u /= static_cast<double>(ms.size());
    double rms = 0.0;
    for (double un : u_norms) rms += (un - mean_u) * (un - mean_u);
    rms = std::sqrt(rms / static_cast<double>(ms.size())) / mean_u;

    const double convergence_threshold = std::max(1e-6, 100.0 * sigma_max);
    if (rms > convergence_threshold) {
        throw NoConvergenceError("recover_frame: residual " + format_g15(rms) +
                                 " above threshold " + format_g15(convergence_threshold));
    }

    result.speed = best->w.norm();
    result.orientation = std::fmod(std::atan2(best->w.y, best->w.x) + 2.0 * M_PI, 2.0 * M_PI);
    result.ubar = mean_u;
    result.residual = rms;
    result.identifiable = true;
    result.instantaneous = result.ubar > 1e6;
    return result;
}

/// Invert the transverse-geometry identity for the frame speed:
/// v = sqrt((ubar^2 - u'_y^2) / (1 - u'_y^2)). Empty when no sub-light v
/// satisfies it (u'_y and ubar must both exceed 1; the identity then demands
/// ubar <= u'_y).
inline std::optional<double> solve_v_from_transverse(double ubar, double u_prime_y) {
    if (!(ubar > 1.0) || !(u_prime_y > 1.0) || !std::isfinite(ubar) ||
        !std::isfinite(u_prime_y)) {
        throw std::invalid_argument("solve_v_from_transverse: speeds must be > 1");
    }
    const double ratio = (ubar * ubar - u_prime_y * u_prime_y) /
                         (1.0 - u_prime_y * u_prime_y);
    if (ratio < 0.0 || ratio >= 1.0) return std::nullopt;
    return std::sqrt(ratio);
}

// ---------------------------------------------------------------------------
// Interchange formats

/// Measurement CSV: optional "phi,u_prime[,sigma]" header, one measurement
/// per line. Blank lines and lines starting with '#' are skipped.
inline std::vector<DirectionalMeasurement> parse_measurements_csv(std::istream& in) {
    std::vector<DirectionalMeasurement> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        if (line_no == 1 && line.find("phi") != std::string::npos) continue;
        std::istringstream row(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        if (cells.size() < 2 || cells.size() > 3) {
            throw std::invalid_argument("measurements CSV line " + std::to_string(line_no) +
                                        ": expected phi,u_prime[,sigma]");
        }
        try {
            DirectionalMeasurement m;
            m.phi = std::stod(cells[0]);
            m.u_prime = std::stod(cells[1]);
            if (cells.size() == 3 && !cells[2].empty()) {
                m.noise_sigma = std::stod(cells[2]);
            }
            out.push_back(m);
        } catch (const std::exception&) {
            throw std::invalid_argument("measurements CSV line " + std::to_string(line_no) +
                                        ": malformed number");
        }
    }
    return out;
}

/// RecoveryResult as a single JSON object, 15 significant digits, fixed key
/// order so identical runs emit identical bytes.
inline std::string recovery_to_json(const RecoveryResult& r) {
    std::string json = "{\n";
    json += "  \"speed\": " + format_g15(r.speed) + ",\n";
    json += "  \"orientation\": " + format_g15(r.orientation) + ",\n";
    json += "  \"ubar\": " + format_g15(r.ubar) + ",\n";
    json += "  \"residual\": " + format_g15(r.residual) + ",\n";
    json += std::string("  \"identifiable\": ") + (r.identifiable ? "true" : "false") + ",\n";
    json += std::string("  \"instantaneous\": ") + (r.instantaneous ? "true" : "false") + "\n";
    json += "}\n";
    return json;
}

}  // namespace tachy
