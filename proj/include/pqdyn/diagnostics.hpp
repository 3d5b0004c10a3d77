#pragma once

// Activity balance, loop integrals, Stokes checks, asymptotic verdicts and
// subspace decay fits over simulated or kinematic paths.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "pqdyn/dynamics.hpp"
#include "pqdyn/error.hpp"
#include "pqdyn/field.hpp"
#include "pqdyn/hhd.hpp"

namespace pqdyn {

// ---------------------------------------------------------------------------
// Access to φ and α
// ---------------------------------------------------------------------------

/// φ and α of a field, either analytic or interpolated from a grid decomposition.
struct DecompositionAccess {
    std::function<double(const Vector&)> phi;
    std::function<Vector(const Vector&)> alpha;
    /// Extra relative tolerance inherited from a numeric decomposition (0 when analytic).
    double tolerance = 0.0;

    [[nodiscard]] bool available() const { return phi && alpha; }

    [[nodiscard]] static DecompositionAccess analytic(const FieldSpec& spec) {
        detail::require(spec.has_analytic_decomposition(), ErrorKind::InvalidArgument,
                        "field has no analytic decomposition");
        return {[&spec](const Vector& x) { return spec.potential(x); },
                [&spec](const Vector& x) { return spec.solenoidal_part(x); }, 0.0};
    }

    /// Multilinear interpolation of a grid result; `r` must outlive the accessor.
    [[nodiscard]] static DecompositionAccess numeric(const hhd::DecompositionResult& r) {
        return {[&r](const Vector& x) { return hhd::interpolate(r.phi, x)[0]; },
                [&r](const Vector& x) { return hhd::interpolate(r.alpha, x); },
                r.residual_reconstruction};
    }
};

// ---------------------------------------------------------------------------
// Activity
// ---------------------------------------------------------------------------

/// A = ½|ẋ|² + φ(x) and the right-hand side ẋ·α - ẋ·γ·ẋ + ẋ·ε per sample.
/// dA/dt is centred; the two endpoints use one-sided differences.
struct ActivitySeries {
    std::vector<double> times;
    std::vector<double> activity;
    std::vector<double> rate;            // dA/dt
    std::vector<double> alpha_term;      // ẋ·α
    std::vector<double> damping_term;    // -ẋ·γ·ẋ
    std::vector<double> noise_term;      // ẋ·ε
    std::vector<double> residual;        // |dA/dt - RHS|
    std::vector<double> scale;           // local activity scale

    [[nodiscard]] std::size_t size() const noexcept { return activity.size(); }
};

/// Local activity scale never drops below this fraction of the run's peak |A|.
inline constexpr double kActivityScaleFloor = 1e-10;

[[nodiscard]] inline ActivitySeries activity_series(const Trajectory& tr,
                                                    const DecompositionAccess& dec,
                                                    const DampingSpec& damping) {
    detail::require(dec.available(), ErrorKind::InvalidArgument,
                    "activity needs a decomposition (φ and α accessors)");
    detail::require(tr.size() >= 3, ErrorKind::InsufficientData, "activity needs >= 3 samples");
    detail::require(damping.gamma.size() == tr.dim(), ErrorKind::DimensionMismatch,
                    "damping dimension differs from trajectory");
    const std::size_t n = tr.size();
    ActivitySeries s;
    s.times = tr.times;
    s.activity.resize(n);
    s.rate.resize(n);
    s.alpha_term.resize(n);
    s.damping_term.resize(n);
    s.noise_term.resize(n);
    s.residual.resize(n);
    s.scale.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto& st = tr.states[k];
        s.activity[k] = 0.5 * st.v.squaredNorm() + dec.phi(st.x);
        s.alpha_term[k] = st.v.dot(dec.alpha(st.x));
        s.damping_term[k] = -st.v.dot(damping.gamma.cwiseProduct(st.v));
        // ε jumps at sample times; the centred rate sees the mean of both sides.
        const Vector& after = tr.noise_draws[k];
        const Vector& before = k > 0 ? tr.noise_draws[k - 1] : after;
        s.noise_term[k] = k + 1 < n ? st.v.dot(0.5 * (before + after)) : st.v.dot(before);
    }
    const double dt = tr.dt;
    // Below this the activity is roundoff, not signal.
    double peak = 0.0;
    for (double a : s.activity) peak = std::max(peak, std::abs(a));
    const double floor = kActivityScaleFloor * peak;
    for (std::size_t k = 0; k < n; ++k) {
        if (k == 0)
            s.rate[k] = (s.activity[1] - s.activity[0]) / dt;
        else if (k + 1 == n)
            s.rate[k] = (s.activity[k] - s.activity[k - 1]) / dt;
        else
            s.rate[k] = (s.activity[k + 1] - s.activity[k - 1]) / (2.0 * dt);
        const double rhs = s.alpha_term[k] + s.damping_term[k] + s.noise_term[k];
        s.residual[k] = std::abs(s.rate[k] - rhs);
        double sc = 0.0;
        for (std::size_t j = (k > 0 ? k - 1 : 0); j <= std::min(k + 1, n - 1); ++j)
            sc = std::max(sc, std::abs(s.activity[j]));
        s.scale[k] = std::max(sc, floor);
    }
    return s;
}

struct ActivityCheck {
    double max_ratio = 0.0;          // max residual / (dt² · scale) over interior samples
    std::size_t worst_index = 0;
    bool identity_holds = false;     // max_ratio ≤ factor
    bool non_increasing = false;     // A_{k+1} ≤ A_k + factor·dt²·scale on every step
};

/// Per-step check of the activity identity with bound factor·dt²·(local scale),
/// widened by the decomposition's own tolerance for numeric φ, α.
[[nodiscard]] inline ActivityCheck check_activity(const ActivitySeries& s, double dt,
                                                  double factor = 10.0,
                                                  double decomposition_tolerance = 0.0) {
    ActivityCheck c;
    const double tiny = std::numeric_limits<double>::min();
    for (std::size_t k = 1; k + 1 < s.size(); ++k) {
        const double bound_unit = dt * dt * std::max(s.scale[k], tiny);
        const double slack = decomposition_tolerance *
                             (std::abs(s.alpha_term[k]) + std::abs(s.damping_term[k]) + std::abs(s.rate[k]));
        const double ratio = std::max(0.0, s.residual[k] - slack) / bound_unit;
        if (ratio > c.max_ratio) {
            c.max_ratio = ratio;
            c.worst_index = k;
        }
    }
    c.identity_holds = c.max_ratio <= factor;
    c.non_increasing = true;
    for (std::size_t k = 0; k + 1 < s.size(); ++k)
        if (s.activity[k + 1] > s.activity[k] + factor * dt * dt * std::max(s.scale[k], tiny)) {
            c.non_increasing = false;
            break;
        }
    return c;
}

// ---------------------------------------------------------------------------
// Path and loop integrals
// ---------------------------------------------------------------------------

/// ∫dx·α (circulation), D = ∫dx·γ·ẋ, B = ∫dx·ε over samples [begin, end].
struct LoopDiagnostics {
    double circulation = 0.0;
    double dissipation = 0.0;
    double bias = 0.0;
    double delta_activity = 0.0;      // A(end) - A(begin)
    double closure_residual = 0.0;    // |ΔA| for a closed loop
    double balance_residual = 0.0;    // |circulation - D + B - ΔA|
    double max_term = 0.0;            // max(|circulation|, D, |B|, |ΔA|)
    double closure_gap = 0.0;         // |x(end) - x(begin)|
    std::optional<double> surface_integral;
};

/// Trapezoid rules: circulation in path form, dissipation in time form (so
/// D ≥ 0 for any path), bias with ε held over each step.
[[nodiscard]] inline LoopDiagnostics path_integrals(const Trajectory& tr, std::size_t begin,
                                                    std::size_t end, const DecompositionAccess& dec,
                                                    const DampingSpec& damping) {
    detail::require(dec.available(), ErrorKind::InvalidArgument,
                    "loop integrals need a decomposition (φ and α accessors)");
    detail::require(begin < end && end < tr.size(), ErrorKind::InvalidArgument,
                    "path segment indices out of range");
    const Vector& g = damping.gamma;
    LoopDiagnostics L;
    Vector alpha_prev = dec.alpha(tr.states[begin].x);
    for (std::size_t k = begin; k < end; ++k) {
        const auto& a = tr.states[k];
        const auto& b = tr.states[k + 1];
        const Vector dx = b.x - a.x;
        const Vector alpha_next = dec.alpha(b.x);
        L.circulation += 0.5 * (alpha_prev + alpha_next).dot(dx);
        const double h = tr.times[k + 1] - tr.times[k];
        L.dissipation += 0.5 * h * (a.v.dot(g.cwiseProduct(a.v)) + b.v.dot(g.cwiseProduct(b.v)));
        L.bias += dx.dot(tr.noise_draws[k]);
        alpha_prev = alpha_next;
    }
    const auto act = [&](const PhaseState& s) { return 0.5 * s.v.squaredNorm() + dec.phi(s.x); };
    L.delta_activity = act(tr.states[end]) - act(tr.states[begin]);
    L.closure_gap = (tr.states[end].x - tr.states[begin].x).norm();
    L.closure_residual = std::abs(L.delta_activity);
    L.balance_residual = std::abs(L.circulation - L.dissipation + L.bias - L.delta_activity);
    L.max_term = std::max({std::abs(L.circulation), L.dissipation, std::abs(L.bias),
                           std::abs(L.delta_activity)});
    return L;
}

/// Closed-loop version: errors when the endpoints differ by more than `closure_tol`.
[[nodiscard]] inline LoopDiagnostics loop_integrals(const Trajectory& tr, std::size_t begin,
                                                    std::size_t end, const DecompositionAccess& dec,
                                                    const DampingSpec& damping, double closure_tol) {
    detail::require(begin < end && end < tr.size(), ErrorKind::InvalidArgument,
                    "loop segment indices out of range");
    const double gap = (tr.states[end].x - tr.states[begin].x).norm();
    detail::require(gap <= closure_tol, ErrorKind::NotClosed,
                    "path is not closed: endpoint gap " + std::to_string(gap) + " exceeds " +
                        std::to_string(closure_tol));
    return path_integrals(tr, begin, end, dec, damping);
}

/// Whole-trajectory convenience overload.
[[nodiscard]] inline LoopDiagnostics loop_integrals(const Trajectory& tr, const DecompositionAccess& dec,
                                                    const DampingSpec& damping, double closure_tol) {
    return loop_integrals(tr, 0, tr.size() - 1, dec, damping, closure_tol);
}

/// Circle of radius r in the (i, j) plane traversed counter-clockwise at
/// constant speed, as a kinematic trajectory (ε = 0).
[[nodiscard]] inline Trajectory kinematic_circle(const Vector& center, int i, int j, double radius,
                                                 double speed, int segments) {
    detail::require(segments >= 3 && radius > 0.0 && speed > 0.0, ErrorKind::InvalidArgument,
                    "kinematic circle needs >= 3 segments, r > 0, speed > 0");
    Trajectory tr;
    const double omega = speed / radius;
    const double period = 2.0 * std::numbers::pi / omega;
    tr.dt = period / segments;
    for (int k = 0; k <= segments; ++k) {
        const double th = 2.0 * std::numbers::pi * (k % segments) / segments;
        PhaseState s{center, Vector::Zero(center.size())};
        s.x[i] += radius * std::cos(th);
        s.x[j] += radius * std::sin(th);
        s.v[i] = -speed * std::sin(th);
        s.v[j] = speed * std::cos(th);
        tr.times.push_back(k * tr.dt);
        tr.states.push_back(std::move(s));
        tr.noise_draws.push_back(Vector::Zero(center.size()));
        tr.flags.push_back(0);
    }
    tr.metadata.integrator = "kinematic";
    return tr;
}

// ---------------------------------------------------------------------------
// Stokes check
// ---------------------------------------------------------------------------

struct StokesResult {
    double line_integral = 0.0;
    double surface_integral = 0.0;
    double mismatch = 0.0;
    double area = 0.0;  // signed
};

struct StokesOptions {
    double h = 1e-5;          // curl finite-difference step
    int subdivisions = 8;     // each fan triangle is split into subdivisions² pieces
    double floor = 1e-12;     // mismatch denominator floor and minimum |area|
};

/// ∮ξ·dx over a closed polygon in the (i, j) plane versus ∫∫(∂_iξ_j - ∂_jξ_i) dA
/// over a fan triangulation from the centroid. The last point may repeat the first.
[[nodiscard]] inline StokesResult stokes_check(const std::vector<Vector>& loop, const FieldSpec& field,
                                               int i, int j, const StokesOptions& opts = {}) {
    detail::require(loop.size() >= 3, ErrorKind::InvalidArgument, "stokes: need >= 3 loop points");
    const auto d = field.dim();
    detail::require(i >= 0 && j >= 0 && i < d && j < d && i != j, ErrorKind::InvalidArgument,
                    "stokes: invalid coordinate plane");
    std::vector<Vector> pts = loop;
    double span = 0.0;
    for (const auto& p : pts) {
        detail::require(p.size() == d, ErrorKind::DimensionMismatch, "stokes: loop point dimension");
        span = std::max(span, (p - pts.front()).cwiseAbs().maxCoeff());
    }
    if ((pts.back() - pts.front()).norm() <= 1e-12 * std::max(1.0, span)) pts.pop_back();
    detail::require(pts.size() >= 3, ErrorKind::InvalidArgument, "stokes: need >= 3 distinct points");
    for (const auto& p : pts)
        for (Eigen::Index a = 0; a < d; ++a)
            if (a != i && a != j)
                detail::require(std::abs(p[a] - pts.front()[a]) <= 1e-12 * std::max(1.0, span),
                                ErrorKind::InvalidArgument, "stokes: loop is not in the coordinate plane");

    StokesResult r;
    const std::size_t m = pts.size();
    Vector centroid = Vector::Zero(d);
    for (const auto& p : pts) centroid += p;
    centroid /= static_cast<double>(m);
    for (std::size_t k = 0; k < m; ++k) {
        const Vector& a = pts[k];
        const Vector& b = pts[(k + 1) % m];
        r.area += 0.5 * ((a[i] - centroid[i]) * (b[j] - centroid[j]) - (b[i] - centroid[i]) * (a[j] - centroid[j]));
    }
    detail::require(std::abs(r.area) > opts.floor, ErrorKind::InvalidArgument,
                    "stokes: degenerate loop (enclosed area below floor)");

    Vector fa = field.eval(pts[0]);
    for (std::size_t k = 0; k < m; ++k) {
        const Vector& b = pts[(k + 1) % m];
        const Vector fb = field.eval(b);
        r.line_integral += 0.5 * (fa + fb).dot(b - pts[k]);
        fa = fb;
    }

    // Centroid rule on a regular L² refinement of each fan triangle (c, a, b).
    const int L = std::max(1, opts.subdivisions);
    for (std::size_t k = 0; k < m; ++k) {
        const Vector& a = pts[k];
        const Vector& b = pts[(k + 1) % m];
        const Vector ea = (a - centroid) / L;
        const Vector eb = (b - centroid) / L;
        const double sub_area =
            0.5 * (ea[i] * eb[j] - eb[i] * ea[j]);  // signed area of one small triangle
        for (int u = 0; u < L; ++u)
            for (int w = 0; u + w < L; ++w) {
                const Vector base = centroid + u * ea + w * eb;
                r.surface_integral += sub_area * plane_curl(field, base + (ea + eb) / 3.0, i, j, opts.h);
                if (u + w + 1 < L)
                    r.surface_integral +=
                        sub_area * plane_curl(field, base + (2.0 * ea + 2.0 * eb) / 3.0, i, j, opts.h);
            }
    }
    r.mismatch = std::abs(r.line_integral - r.surface_integral) /
                 std::max(std::abs(r.line_integral), opts.floor);
    return r;
}

/// Positions of samples [begin, end] projected onto their common coordinate plane.
[[nodiscard]] inline std::vector<Vector> loop_points(const Trajectory& tr, std::size_t begin, std::size_t end) {
    std::vector<Vector> pts;
    for (std::size_t k = begin; k <= end; ++k) pts.push_back(tr.states[k].x);
    return pts;
}

// ---------------------------------------------------------------------------
// Asymptotic classification
// ---------------------------------------------------------------------------

enum class VerdictKind { Equilibrium, Circulation, Undecided };

[[nodiscard]] inline const char* to_string(VerdictKind k) {
    switch (k) {
        case VerdictKind::Equilibrium: return "equilibrium";
        case VerdictKind::Circulation: return "circulation";
        case VerdictKind::Undecided: return "undecided";
    }
    return "undecided";
}

struct AsymptoticThresholds {
    double tol_v = 1e-6;
    double tol_f = 1e-6;
    double dwell_fraction = 0.05;
    std::optional<long long> dwell_steps;     // overrides dwell_fraction
    double recurrence_fraction = 1e-3;        // tol_r = fraction · window diameter
    std::optional<double> min_period;         // default 20·dt
    int min_recurrences = 3;
    double period_tolerance = 0.10;
};

struct AsymptoticEvidence {
    double final_speed = 0.0;
    double final_field_norm = 0.0;
    double recurrence_distance = INFINITY;     // worst accepted recurrence distance
    double recurrence_tolerance = 0.0;
    double enclosed_curl = 0.0;               // ∮ξ·dx over the first recurrence loop
    double period = 0.0;                      // mean recurrence period
    double period_spread = 0.0;               // max |P_i - mean| / mean
    std::size_t reference_index = 0;
    std::vector<std::size_t> recurrence_indices;  // sample index closing each recurrence
    std::vector<double> recurrence_times;
};

struct AsymptoticVerdict {
    VerdictKind kind = VerdictKind::Undecided;
    AsymptoticEvidence evidence;
};

namespace detail {

inline double segment_distance(const Vector& p, const Vector& a, const Vector& b, double& s) {
    const Vector ab = b - a;
    const double len2 = ab.squaredNorm();
    s = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return (a + s * ab - p).norm();
}

}  // namespace detail

/// Equilibrium when ‖ẋ‖ < tol_v and ‖ξ(x)‖ < tol_f over the final dwell window;
/// circulation when x returns to the state at the start of the last half at
/// least `min_recurrences` times with periods within ±period_tolerance.
[[nodiscard]] inline AsymptoticVerdict classify_asymptotics(const Trajectory& tr, const FieldSpec& field,
                                                            const AsymptoticThresholds& th = {}) {
    AsymptoticVerdict out;
    const std::size_t n = tr.size();
    if (n < 2) return out;
    auto& ev = out.evidence;
    const auto& last = tr.states.back();
    ev.final_speed = last.v.norm();
    ev.final_field_norm = field.eval(last.x).norm();

    const long long dwell =
        th.dwell_steps ? *th.dwell_steps
                       : std::max<long long>(1, static_cast<long long>(std::ceil(th.dwell_fraction * static_cast<double>(n - 1))));
    if (dwell <= 0 || dwell > static_cast<long long>(n - 1)) return out;

    bool settled = true;
    for (std::size_t k = n - 1 - static_cast<std::size_t>(dwell); k < n && settled; ++k) {
        const auto& s = tr.states[k];
        settled = s.v.norm() < th.tol_v && field.eval(s.x).norm() < th.tol_f;
    }
    if (settled) {
        out.kind = VerdictKind::Equilibrium;
        return out;
    }

    const std::size_t ref = n / 2;
    ev.reference_index = ref;
    const Vector& xr = tr.states[ref].x;
    Vector lo = xr, hi = xr;
    for (std::size_t k = ref; k < n; ++k) {
        lo = lo.cwiseMin(tr.states[k].x);
        hi = hi.cwiseMax(tr.states[k].x);
    }
    const double diameter = (hi - lo).norm();
    if (diameter == 0.0) return out;
    const double tol_r = th.recurrence_fraction * diameter;
    ev.recurrence_tolerance = tol_r;
    const double min_period = th.min_period ? *th.min_period : 20.0 * tr.dt;

    // Candidate recurrences: local minima of the distance from x_ref to each path segment.
    std::vector<double> dist(n - 1, INFINITY), frac(n - 1, 0.0);
    for (std::size_t k = ref; k + 1 < n; ++k)
        dist[k] = detail::segment_distance(xr, tr.states[k].x, tr.states[k + 1].x, frac[k]);
    double last_time = tr.times[ref];
    double worst = 0.0;
    for (std::size_t k = ref + 1; k + 1 < n; ++k) {
        if (dist[k] > tol_r) continue;
        const double t = tr.times[k] + frac[k] * (tr.times[k + 1] - tr.times[k]);
        if (t - last_time < min_period) continue;
        // take the closest segment within this pass
        std::size_t best = k;
        while (best + 2 < n && dist[best + 1] <= dist[best]) ++best;
        const double tb = tr.times[best] + frac[best] * (tr.times[best + 1] - tr.times[best]);
        ev.recurrence_indices.push_back(frac[best] < 0.5 ? best : best + 1);
        ev.recurrence_times.push_back(tb);
        worst = std::max(worst, dist[best]);
        last_time = tb;
        k = best;
    }
    if (static_cast<int>(ev.recurrence_times.size()) < th.min_recurrences) return out;
    ev.recurrence_distance = worst;

    std::vector<double> periods;
    double prev = tr.times[ref];
    for (double t : ev.recurrence_times) {
        periods.push_back(t - prev);
        prev = t;
    }
    double mean = 0.0;
    for (double p : periods) mean += p;
    mean /= static_cast<double>(periods.size());
    double spread = 0.0;
    for (double p : periods) spread = std::max(spread, std::abs(p - mean) / mean);
    ev.period = mean;
    ev.period_spread = spread;

    double enclosed = 0.0;
    Vector fa = field.eval(tr.states[ref].x);
    for (std::size_t k = ref; k < ev.recurrence_indices.front(); ++k) {
        const Vector fb = field.eval(tr.states[k + 1].x);
        enclosed += 0.5 * (fa + fb).dot(tr.states[k + 1].x - tr.states[k].x);
        fa = fb;
    }
    ev.enclosed_curl = enclosed;

    if (spread <= th.period_tolerance) out.kind = VerdictKind::Circulation;
    return out;
}

// ---------------------------------------------------------------------------
// Subspace decay
// ---------------------------------------------------------------------------

struct DecayFit {
    double rate = 0.0;        // signed: > 0 decays, < 0 grows
    double residual = 0.0;    // RMS residual of the log-linear fit
    bool used_peaks = false;
    std::size_t points = 0;
};

/// Least-squares slope of log‖δx_Σ(t)‖. With ≥ 3 envelope peaks the peaks are
/// fitted; otherwise the latter half of the samples above the noise floor.
[[nodiscard]] inline DecayFit fit_decay_rate(const Trajectory& tr, const std::vector<int>& subspace,
                                             const Vector& center) {
    detail::require(!subspace.empty(), ErrorKind::InvalidArgument, "decay fit: empty subspace");
    detail::require(center.size() == tr.dim(), ErrorKind::DimensionMismatch, "decay fit: center dimension");
    for (int i : subspace)
        detail::require(i >= 0 && i < tr.dim(), ErrorKind::InvalidArgument, "decay fit: subspace index out of range");
    const std::size_t n = tr.size();
    std::vector<double> y(n);
    for (std::size_t k = 0; k < n; ++k) {
        double s = 0.0;
        for (int i : subspace) {
            const double d = tr.states[k].x[i] - center[i];
            s += d * d;
        }
        y[k] = std::sqrt(s);
    }
    const double floor = 1e-12 * center.cwiseAbs().maxCoeff() + 1e-200;
    detail::require(y.front() > floor, ErrorKind::InsufficientData,
                    "decay fit: no initial displacement in the subspace");

    std::vector<std::size_t> idx;
    for (std::size_t k = 1; k + 1 < n; ++k)
        if (y[k] > y[k - 1] && y[k] >= y[k + 1] && y[k] > floor) idx.push_back(k);
    DecayFit fit;
    fit.used_peaks = idx.size() >= 3;
    if (!fit.used_peaks) {
        idx.clear();
        std::size_t above = 0;
        while (above < n && y[above] > floor) ++above;
        for (std::size_t k = above / 2; k < above; ++k) idx.push_back(k);
    }
    detail::require(idx.size() >= 3, ErrorKind::InsufficientData,
                    "decay fit: not enough samples above the floor");

    Eigen::MatrixXd A(static_cast<Eigen::Index>(idx.size()), 2);
    Eigen::VectorXd b(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto rr = static_cast<Eigen::Index>(r);
        A(rr, 0) = 1.0;
        A(rr, 1) = tr.times[idx[r]];
        b[rr] = std::log(y[idx[r]]);
    }
    const Eigen::Vector2d coef = A.colPivHouseholderQr().solve(b);
    fit.rate = -coef[1];
    fit.residual = std::sqrt((A * coef - b).squaredNorm() / static_cast<double>(idx.size()));
    fit.points = idx.size();
    return fit;
}

/// Slowest decay rate of δẍ = J δx - γ δẋ over the Jacobian eigenvalues λ:
/// min over λ of -max Re μ with μ² + γμ - λ = 0. Negative when some mode grows.
[[nodiscard]] inline double predicted_decay_rate(const std::vector<double>& eigenvalues, double gamma) {
    detail::require(!eigenvalues.empty(), ErrorKind::InvalidArgument, "no eigenvalues");
    double rate = INFINITY;
    for (double lam : eigenvalues) {
        const std::complex<double> disc = std::sqrt(std::complex<double>(gamma * gamma + 4.0 * lam, 0.0));
        const double re = std::max(((-gamma + disc) / 2.0).real(), ((-gamma - disc) / 2.0).real());
        rate = std::min(rate, -re);
    }
    return rate;
}

/// Decay rate for a substitutable block of k commodities with scalar damping.
[[nodiscard]] inline double predicted_substitutable_rate(double a, double b, int k, double gamma) {
    const auto s = analyze_substitutable(a, b, k);
    return predicted_decay_rate({s.symmetric_mode, s.contrast_mode}, gamma);
}

// ---------------------------------------------------------------------------
// Discrete-path regime
// ---------------------------------------------------------------------------

enum class Regime { Monotone, Ringing };

[[nodiscard]] inline const char* to_string(Regime r) { return r == Regime::Monotone ? "monotone" : "ringing"; }

/// Ringing when a scalar deviation series changes sign at least twice,
/// ignoring samples below 1e-9 of its peak magnitude.
[[nodiscard]] inline Regime classify_regime(const std::vector<double>& series) {
    double peak = 0.0;
    for (double v : series) peak = std::max(peak, std::abs(v));
    const double cut = 1e-9 * peak;
    int changes = 0;
    int sign = 0;
    for (double v : series) {
        if (std::abs(v) <= cut) continue;
        const int s = v > 0 ? 1 : -1;
        if (sign != 0 && s != sign) ++changes;
        sign = s;
    }
    return changes >= 2 ? Regime::Ringing : Regime::Monotone;
}

}  // namespace pqdyn
