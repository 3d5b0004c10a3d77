#pragma once

// Integrators for ẋ = ξ(x) + ε, ẍ = ξ(x) - γẋ + ε, and the two-group
// discrete seller model whose mean path motivates the second-order form.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pqdyn/error.hpp"
#include "pqdyn/field.hpp"
#include "pqdyn/state.hpp"

namespace pqdyn {

struct PhaseState {
    Vector x;
    Vector v;
};

/// Diagonal damping γ.
struct DampingSpec {
    Vector gamma;

    [[nodiscard]] static DampingSpec uniform(Eigen::Index dim, double g) {
        return {Vector::Constant(dim, g)};
    }
    void validate(Eigen::Index dim) const {
        detail::require(gamma.size() == dim, ErrorKind::DimensionMismatch,
                        "damping has " + std::to_string(gamma.size()) + " entries, field has " +
                            std::to_string(dim));
        for (Eigen::Index i = 0; i < gamma.size(); ++i)
            detail::require(gamma[i] > 0.0 && std::isfinite(gamma[i]), ErrorKind::InvalidArgument,
                            "damping entry " + std::to_string(i) + " must be > 0");
    }
};

/// ε = bias + diag(sigma) · N(0, I), redrawn once per step.
struct NoiseSpec {
    Vector bias;
    Vector sigma;
    std::uint64_t seed = 0;

    [[nodiscard]] static NoiseSpec none(Eigen::Index dim) {
        return {Vector::Zero(dim), Vector::Zero(dim), 0};
    }
    [[nodiscard]] bool silent() const { return (sigma.array() == 0.0).all() && (bias.array() == 0.0).all(); }
    void validate(Eigen::Index dim) const {
        detail::require(bias.size() == dim && sigma.size() == dim, ErrorKind::DimensionMismatch,
                        "noise bias/sigma must have one entry per coordinate");
        detail::require(all_finite(bias) && all_finite(sigma), ErrorKind::NonFinite,
                        "noise parameters must be finite");
        detail::require((sigma.array() >= 0.0).all(), ErrorKind::InvalidArgument,
                        "noise sigma must be >= 0");
    }
};

/// Deterministic draw sequence for one run.
class NoiseStream {
public:
    explicit NoiseStream(NoiseSpec spec) : spec_(std::move(spec)), rng_(spec_.seed) {}

    Vector draw() {
        Vector e = spec_.bias;
        for (Eigen::Index i = 0; i < e.size(); ++i)
            if (spec_.sigma[i] > 0.0) e[i] += spec_.sigma[i] * normal_(rng_);
        return e;
    }

private:
    NoiseSpec spec_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_;
};

struct RunMetadata {
    std::string scenario;
    std::uint64_t seed = 0;
    std::string integrator;
};

/// Uniformly sampled path. noise_draws[k] is the ε held over [t_k, t_{k+1});
/// the final entry is zero. flags[k] is 1 when x_k was clamped to the box.
/// activity[k] = ½|v_k|² + φ(x_k) when the field has an analytic potential.
struct Trajectory {
    std::vector<double> times;
    std::vector<PhaseState> states;
    std::vector<Vector> noise_draws;
    std::vector<std::uint8_t> flags;
    std::vector<double> activity;
    double dt = 0.0;
    int order = 2;
    RunMetadata metadata;

    [[nodiscard]] std::size_t size() const noexcept { return states.size(); }
    [[nodiscard]] Eigen::Index dim() const { return states.empty() ? 0 : states.front().x.size(); }
    [[nodiscard]] bool any_clamped() const {
        for (auto f : flags)
            if (f) return true;
        return false;
    }
};

inline constexpr const char* kIntegratorTag = "rk4-fixed-frozen-noise";

/// 1e-3 · fastest linear timescale when known, else 1e-3.
[[nodiscard]] inline double default_dt(std::optional<double> fastest_timescale = std::nullopt) {
    return fastest_timescale ? 1e-3 * *fastest_timescale : 1e-3;
}

namespace detail {

inline void check_run(double dt, long long steps) {
    require(dt > 0.0 && std::isfinite(dt), ErrorKind::InvalidArgument, "dt must be > 0");
    require(steps >= 0, ErrorKind::InvalidArgument, "steps must be >= 0");
}

/// ξ at x after clamping x into the field's box (RK stages may overshoot).
inline Vector eval_clamped(const FieldSpec& f, const Vector& x) {
    Vector y = x;
    f.box().clamp(y);
    return f.eval(y);
}

inline void check_finite_step(const Vector& x, const Vector& v, long long step) {
    require(all_finite(x) && all_finite(v), ErrorKind::NonFinite,
            "integration produced a non-finite state at step " + std::to_string(step));
}

}  // namespace detail

/// Classical RK4 for ẋ = ξ(x) + ε with ε frozen over each step.
[[nodiscard]] inline Trajectory integrate_first_order(const FieldSpec& field, const Vector& x0,
                                                      double dt, long long steps,
                                                      const NoiseSpec& noise,
                                                      RunMetadata meta = {}) {
    detail::check_run(dt, steps);
    const auto d = field.dim();
    detail::require(x0.size() == d, ErrorKind::DimensionMismatch, "x0 dimension differs from field");
    detail::require(field.box().contains(x0), ErrorKind::OutsideDomain, "x0 lies outside the domain box");
    noise.validate(d);
    meta.seed = noise.seed;
    meta.integrator = kIntegratorTag;

    Trajectory tr;
    tr.dt = dt;
    tr.order = 1;
    tr.metadata = std::move(meta);
    const auto n = static_cast<std::size_t>(steps) + 1;
    tr.times.reserve(n);
    tr.states.reserve(n);
    tr.noise_draws.reserve(n);
    tr.flags.reserve(n);

    NoiseStream stream(noise);
    Vector x = x0;
    std::uint8_t flag = 0;
    for (long long k = 0; k < steps; ++k) {
        const Vector eps = stream.draw();
        const Vector k1 = field.eval(x) + eps;
        tr.times.push_back(static_cast<double>(k) * dt);
        tr.states.push_back({x, k1});
        tr.noise_draws.push_back(eps);
        tr.flags.push_back(flag);

        const Vector k2 = detail::eval_clamped(field, x + 0.5 * dt * k1) + eps;
        const Vector k3 = detail::eval_clamped(field, x + 0.5 * dt * k2) + eps;
        const Vector k4 = detail::eval_clamped(field, x + dt * k3) + eps;
        x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        detail::check_finite_step(x, k1, k + 1);
        flag = field.box().clamp(x) ? 1 : 0;
    }
    tr.times.push_back(static_cast<double>(steps) * dt);
    tr.states.push_back({x, field.eval(x)});
    tr.noise_draws.push_back(Vector::Zero(d));
    tr.flags.push_back(flag);
    return tr;
}

/// Classical RK4 for (ẋ, v̇) = (v, ξ(x) - γv + ε) with ε frozen over each step.
[[nodiscard]] inline Trajectory integrate_second_order(const FieldSpec& field,
                                                       const DampingSpec& damping,
                                                       const PhaseState& phase0, double dt,
                                                       long long steps, const NoiseSpec& noise,
                                                       RunMetadata meta = {}) {
    detail::check_run(dt, steps);
    const auto d = field.dim();
    detail::require(phase0.x.size() == d && phase0.v.size() == d, ErrorKind::DimensionMismatch,
                    "initial phase state dimension differs from field");
    detail::require(all_finite(phase0.x) && all_finite(phase0.v), ErrorKind::NonFinite,
                    "initial phase state must be finite");
    detail::require(field.box().contains(phase0.x), ErrorKind::OutsideDomain,
                    "x0 lies outside the domain box");
    damping.validate(d);
    noise.validate(d);
    meta.seed = noise.seed;
    meta.integrator = kIntegratorTag;

    const bool with_activity = field.has_analytic_decomposition();
    Trajectory tr;
    tr.dt = dt;
    tr.order = 2;
    tr.metadata = std::move(meta);
    const auto n = static_cast<std::size_t>(steps) + 1;
    tr.times.reserve(n);
    tr.states.reserve(n);
    tr.noise_draws.reserve(n);
    tr.flags.reserve(n);
    if (with_activity) tr.activity.reserve(n);

    const Vector& g = damping.gamma;
    const auto accel = [&](const Vector& x, const Vector& v, const Vector& eps) -> Vector {
        return detail::eval_clamped(field, x) - g.cwiseProduct(v) + eps;
    };

    NoiseStream stream(noise);
    Vector x = phase0.x;
    Vector v = phase0.v;
    std::uint8_t flag = 0;
    const auto record = [&](long long k, const Vector& eps) {
        tr.times.push_back(static_cast<double>(k) * dt);
        tr.states.push_back({x, v});
        tr.noise_draws.push_back(eps);
        tr.flags.push_back(flag);
        if (with_activity) tr.activity.push_back(0.5 * v.squaredNorm() + field.potential(x));
    };

    for (long long k = 0; k < steps; ++k) {
        const Vector eps = stream.draw();
        record(k, eps);
        const Vector kx1 = v;
        const Vector kv1 = accel(x, v, eps);
        const Vector kx2 = v + 0.5 * dt * kv1;
        const Vector kv2 = accel(x + 0.5 * dt * kx1, kx2, eps);
        const Vector kx3 = v + 0.5 * dt * kv2;
        const Vector kv3 = accel(x + 0.5 * dt * kx2, kx3, eps);
        const Vector kx4 = v + dt * kv3;
        const Vector kv4 = accel(x + dt * kx3, kx4, eps);
        x += dt / 6.0 * (kx1 + 2.0 * kx2 + 2.0 * kx3 + kx4);
        v += dt / 6.0 * (kv1 + 2.0 * kv2 + 2.0 * kv3 + kv4);
        detail::check_finite_step(x, v, k + 1);
        flag = field.box().clamp(x) ? 1 : 0;
    }
    record(steps, Vector::Zero(d));
    return tr;
}

// ---------------------------------------------------------------------------
// Two-group seller population
// ---------------------------------------------------------------------------

/// Group a adjusts by ξ(x̄_{t-1}) + ε; group b copies ν times the last mean change.
struct PopulationSpec {
    double f_a = 0.5;
    double f_b = 0.5;
    double nu = 1.0;
    int sellers_a = 10;
    int sellers_b = 10;
    Vector initial_mean;
    Vector initial_delta;        // Δx̄₀
    double initial_dispersion = 0.0;  // per-seller N(0, s²) offsets around the mean

    [[nodiscard]] double damping_product() const noexcept { return f_b * nu; }
    /// f_b ν ≥ 1: zero or negative damping.
    [[nodiscard]] bool undamped() const noexcept { return damping_product() >= 1.0; }

    void validate(Eigen::Index dim) const {
        detail::require(f_a >= 0.0 && f_b >= 0.0 && std::abs(f_a + f_b - 1.0) <= 1e-12,
                        ErrorKind::InvalidArgument, "population fractions must be >= 0 and sum to 1");
        detail::require(nu > 0.0 && std::isfinite(nu), ErrorKind::InvalidArgument, "nu must be > 0");
        detail::require(sellers_a >= (f_a > 0.0 ? 1 : 0) && sellers_b >= (f_b > 0.0 ? 1 : 0),
                        ErrorKind::InvalidArgument, "each populated group needs at least one seller");
        detail::require(initial_mean.size() == dim && initial_delta.size() == dim,
                        ErrorKind::DimensionMismatch, "population initial state dimension");
        detail::require(initial_dispersion >= 0.0, ErrorKind::InvalidArgument,
                        "initial dispersion must be >= 0");
    }
};

/// Damping coefficient of the continuous analogue: (1 - f_b ν)/(f_b ν).
[[nodiscard]] inline double gamma_equivalent(double f_b, double nu) {
    const double p = f_b * nu;
    detail::require(p != 0.0, ErrorKind::InvalidArgument, "gamma_equivalent: f_b * nu must be nonzero");
    return (1.0 - p) / p;
}

/// Terms of Δ²x̄_t = c ξ(x̄_{t-1}) + c ε̄_t - g Δx̄_t, c = f_a/(f_bν), g = (1 - f_bν)/(f_bν).
struct SecondDifferenceStep {
    Vector realized;     // Δx̄_t - Δx̄_{t-1}
    Vector field_term;   // c ξ(x̄_{t-1})
    Vector noise_term;   // c ε̄_t
    Vector damping_term; // -g Δx̄_t
};

struct PopulationRun {
    /// Mean path: x = x̄_t, v = Δx̄_t, noise = ε̄_{t+1}; unit time steps.
    Trajectory mean;
    Trajectory group_a;
    Trajectory group_b;
    std::vector<SecondDifferenceStep> second_difference;  // t = 1..steps; empty when f_b ν = 0
    bool undamped = false;
};

[[nodiscard]] inline PopulationRun simulate_population(const PopulationSpec& pop,
                                                       const FieldSpec& field, long long steps,
                                                       const NoiseSpec& noise,
                                                       RunMetadata meta = {}) {
    const auto d = field.dim();
    pop.validate(d);
    noise.validate(d);
    detail::require(steps >= 0, ErrorKind::InvalidArgument, "steps must be >= 0");
    meta.seed = noise.seed;
    meta.integrator = "two-group-difference";

    NoiseStream stream(noise);
    std::mt19937_64 disperse(noise.seed ^ 0x9E3779B97F4A7C15ULL);
    std::normal_distribution<double> n01;
    const auto spawn = [&](int count) {
        Matrix m(d, count);
        for (int s = 0; s < count; ++s) {
            m.col(s) = pop.initial_mean;
            if (pop.initial_dispersion > 0.0)
                for (Eigen::Index i = 0; i < d; ++i) m(i, s) += pop.initial_dispersion * n01(disperse);
        }
        return m;
    };
    Matrix xa = spawn(pop.sellers_a);
    Matrix xb = spawn(pop.sellers_b);
    const auto group_mean = [](const Matrix& m) -> Vector {
        return m.cols() > 0 ? Vector(m.rowwise().mean()) : Vector::Zero(m.rows());
    };
    const auto population_mean = [&]() -> Vector {
        Vector out = Vector::Zero(d);
        if (pop.f_a > 0.0) out += pop.f_a * group_mean(xa);
        if (pop.f_b > 0.0) out += pop.f_b * group_mean(xb);
        return out;
    };

    PopulationRun run;
    run.undamped = pop.undamped();
    for (auto* t : {&run.mean, &run.group_a, &run.group_b}) {
        t->dt = 1.0;
        t->order = 2;
        t->metadata = meta;
    }

    const bool with_identity = pop.damping_product() > 0.0;
    const double c = with_identity ? pop.f_a / pop.damping_product() : 0.0;
    const double g = with_identity ? gamma_equivalent(pop.f_b, pop.nu) : 0.0;

    Vector mean = population_mean();
    Vector delta = pop.initial_delta;
    Vector delta_a = Vector::Zero(d);
    Vector delta_b = Vector::Zero(d);
    const auto record = [&](long long t, const Vector& eps_bar) {
        const double time = static_cast<double>(t);
        run.mean.times.push_back(time);
        run.mean.states.push_back({mean, delta});
        run.mean.noise_draws.push_back(eps_bar);
        run.mean.flags.push_back(0);
        run.group_a.times.push_back(time);
        run.group_a.states.push_back({group_mean(xa), delta_a});
        run.group_a.noise_draws.push_back(eps_bar);
        run.group_a.flags.push_back(0);
        run.group_b.times.push_back(time);
        run.group_b.states.push_back({group_mean(xb), delta_b});
        run.group_b.noise_draws.push_back(Vector::Zero(d));
        run.group_b.flags.push_back(0);
    };

    for (long long t = 1; t <= steps; ++t) {
        detail::require(field.box().contains(mean), ErrorKind::OutsideDomain,
                        "population mean left the domain box at step " + std::to_string(t));
        const Vector xi = field.eval(mean);
        Vector eps_bar = Vector::Zero(d);
        for (int s = 0; s < pop.sellers_a; ++s) {
            const Vector e = stream.draw();
            eps_bar += e;
            xa.col(s) += xi + e;
        }
        if (pop.sellers_a > 0) eps_bar /= pop.sellers_a;
        record(t - 1, eps_bar);

        delta_a = xi + eps_bar;
        delta_b = pop.nu * delta;
        for (int s = 0; s < pop.sellers_b; ++s) xb.col(s) += delta_b;

        const Vector next_mean = population_mean();
        const Vector next_delta = next_mean - mean;
        detail::require(all_finite(next_mean), ErrorKind::NonFinite,
                        "population mean diverged at step " + std::to_string(t));
        if (with_identity)
            run.second_difference.push_back(
                {next_delta - delta, c * xi, c * eps_bar, -g * next_delta});
        mean = next_mean;
        delta = next_delta;
    }
    record(steps, Vector::Zero(d));
    return run;
}

}  // namespace pqdyn
