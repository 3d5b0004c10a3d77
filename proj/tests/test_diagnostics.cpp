#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "pqdyn/diagnostics.hpp"
#include "pqdyn/dynamics.hpp"
#include "pqdyn/hhd.hpp"

using namespace pqdyn;

namespace {

constexpr double kPi = std::numbers::pi;

Vector vec(std::initializer_list<double> xs) {
    Vector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

FieldSpec well(Eigen::Index d, double k = 1.0) { return FieldSpec(d, {quadratic_well(Vector::Zero(d), k)}); }

FieldSpec well_plus_rotation(double c) {
    return FieldSpec(2, {quadratic_well(Vector::Zero(2), 1.0), Rotation{0, 1, Vector::Zero(2), c}});
}

// Hopf-type limit cycle: radius sqrt(c²/γ² - 1), angular speed c/γ.
FieldSpec limit_cycle_field(double c) {
    Polynomial quartic;
    quartic.monomials = {{0.25, {4, 0}}, {0.5, {2, 2}}, {0.25, {0, 4}}};
    return FieldSpec(2, {quadratic_well(Vector::Zero(2), 1.0), PolynomialPotential{Vector::Zero(2), quartic},
                         Rotation{0, 1, Vector::Zero(2), c}});
}

Trajectory constant_trajectory(const Vector& x, std::size_t n, double dt) {
    Trajectory tr;
    tr.dt = dt;
    for (std::size_t k = 0; k < n; ++k) {
        tr.times.push_back(static_cast<double>(k) * dt);
        tr.states.push_back({x, Vector::Zero(x.size())});
        tr.noise_draws.push_back(Vector::Zero(x.size()));
        tr.flags.push_back(0);
    }
    return tr;
}

}  // namespace

TEST(Activity, StaticStateHandValue) {
    const auto f = well(2);
    const auto tr = constant_trajectory(vec({std::sqrt(6.0), 0.0}), 5, 0.1);
    const auto s = activity_series(tr, DecompositionAccess::analytic(f), DampingSpec::uniform(2, 1.0));
    for (std::size_t k = 0; k < s.size(); ++k) {
        EXPECT_NEAR(s.activity[k], 3.0, 1e-14);
        EXPECT_EQ(s.rate[k], 0.0);
        EXPECT_EQ(s.residual[k], 0.0);
    }
}

TEST(Activity, IdentityOnDampedWell) {
    const auto f = well(4);
    const auto tr = integrate_second_order(f, DampingSpec::uniform(4, 1.0), {vec({1, -0.5, 0.5, 0.25}), Vector::Zero(4)},
                                           1e-3, 10000, NoiseSpec::none(4));
    const auto s = activity_series(tr, DecompositionAccess::analytic(f), DampingSpec::uniform(4, 1.0));
    const auto c = check_activity(s, tr.dt);
    EXPECT_TRUE(c.identity_holds) << c.max_ratio;
    EXPECT_TRUE(c.non_increasing);
    // Energy balance: A(0) - A(T) equals the time integral of γ|v|².
    double dissipated = 0.0;
    for (std::size_t k = 0; k + 1 < s.size(); ++k)
        dissipated -= 0.5 * tr.dt * (s.damping_term[k] + s.damping_term[k + 1]);
    EXPECT_NEAR(s.activity.front() - s.activity.back(), dissipated, 1e-6);
}

TEST(Activity, DetectsWrongDecomposition) {
    const auto f = well_plus_rotation(1.0);
    const auto tr = integrate_second_order(f, DampingSpec::uniform(2, 1.0), {vec({1, 0}), Vector::Zero(2)}, 1e-3,
                                           3000, NoiseSpec::none(2));
    auto dec = DecompositionAccess::analytic(f);
    EXPECT_TRUE(check_activity(activity_series(tr, dec, DampingSpec::uniform(2, 1.0)), tr.dt).identity_holds);
    dec.alpha = [](const Vector& x) { return Vector(Vector::Zero(x.size())); };
    EXPECT_FALSE(check_activity(activity_series(tr, dec, DampingSpec::uniform(2, 1.0)), tr.dt).identity_holds);
}

TEST(Activity, NumericDecompositionAgreesWithAnalytic) {
    const auto f = well_plus_rotation(0.5);
    hhd::GridDomain g(vec({-2, -2}), vec({2, 2}), {48, 48});
    const auto r = hhd::decompose(hhd::sample_field(f, g));
    const auto num = DecompositionAccess::numeric(r);
    const auto ana = DecompositionAccess::analytic(f);
    const Vector x = vec({0.3, -0.2});
    EXPECT_NEAR((num.alpha(x) - ana.alpha(x)).norm() / f.eval(x).norm(), 0.0, 0.1);
    // φ is defined up to a constant: compare differences.
    const Vector y = vec({-0.1, 0.25});
    EXPECT_NEAR(num.phi(x) - num.phi(y), ana.phi(x) - ana.phi(y), 0.02);
}

TEST(LoopIntegrals, KinematicCircle) {
    const double r = 0.7, c = 1.3, speed = 2.0, gamma = 0.4;
    const auto f = well_plus_rotation(c);
    const auto tr = kinematic_circle(vec({0, 0}), 0, 1, r, speed, 2000);
    const auto L = loop_integrals(tr, DecompositionAccess::analytic(f), DampingSpec::uniform(2, gamma), 1e-12);
    EXPECT_NEAR(L.circulation, 2.0 * kPi * r * r * c, 0.01 * 2.0 * kPi * r * r * c);
    EXPECT_NEAR(L.dissipation, gamma * speed * 2.0 * kPi * r, 0.01 * gamma * speed * 2.0 * kPi * r);
    EXPECT_EQ(L.bias, 0.0);
    EXPECT_NEAR(L.delta_activity, 0.0, 1e-12);
    EXPECT_LE(L.closure_gap, 1e-12);
}

TEST(LoopIntegrals, GradientFieldHasNoCirculation) {
    const auto f = well(2, 3.0);
    const auto tr = kinematic_circle(vec({0.2, -0.1}), 0, 1, 0.5, 1.0, 500);
    const auto L = loop_integrals(tr, DecompositionAccess::analytic(f), DampingSpec::uniform(2, 1.0), 1e-12);
    EXPECT_NEAR(L.circulation, 0.0, 1e-14);
}

TEST(LoopIntegrals, BalanceOnSimulatedPath) {
    const auto f = well_plus_rotation(0.8);
    NoiseSpec noise{vec({0.05, -0.02}), vec({0.1, 0.1}), 11};
    const auto tr = integrate_second_order(f, DampingSpec::uniform(2, 0.7), {vec({1, 0}), Vector::Zero(2)}, 1e-3,
                                           5000, noise);
    const auto L = path_integrals(tr, 0, tr.size() - 1, DecompositionAccess::analytic(f), DampingSpec::uniform(2, 0.7));
    EXPECT_LE(L.balance_residual, 1e-3 * L.max_term);
    EXPECT_NE(L.bias, 0.0);
}

TEST(LoopIntegrals, OpenPathIsNotClosed) {
    const auto f = well(2);
    const auto tr = integrate_second_order(f, DampingSpec::uniform(2, 1.0), {vec({1, 0}), Vector::Zero(2)}, 1e-2, 50,
                                           NoiseSpec::none(2));
    try {
        (void)loop_integrals(tr, DecompositionAccess::analytic(f), DampingSpec::uniform(2, 1.0), 1e-6);
        FAIL() << "expected NotClosed";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NotClosed);
    }
}

TEST(Stokes, RotationOnCircle) {
    const double c = 2.5, r = 0.8;
    const FieldSpec rot(2, {Rotation{0, 1, Vector::Zero(2), c}});
    const auto pts = loop_points(kinematic_circle(vec({0.1, 0.2}), 0, 1, r, 1.0, 400), 0, 400);
    const auto s = stokes_check(pts, rot, 0, 1);
    const double polygon_area = 0.5 * 400 * r * r * std::sin(2.0 * kPi / 400);
    EXPECT_NEAR(s.area, polygon_area, 1e-12);
    EXPECT_NEAR(s.line_integral, 2.0 * c * polygon_area, 1e-9);
    EXPECT_LE(s.mismatch, 1e-6);
}

TEST(Stokes, GradientAndMixedFields) {
    std::vector<Vector> square{vec({0, 0}), vec({1, 0}), vec({1, 1}), vec({0, 1})};
    const auto g = stokes_check(square, well(2, 2.0), 0, 1);
    EXPECT_NEAR(g.line_integral, 0.0, 1e-12);
    EXPECT_NEAR(g.surface_integral, 0.0, 1e-6);
    const auto m = stokes_check(square, well_plus_rotation(1.5), 0, 1);
    EXPECT_NEAR(m.line_integral, 3.0, 1e-12);
    EXPECT_NEAR(m.surface_integral, 3.0, 1e-6);
    EXPECT_LE(m.mismatch, 1e-6);
}

TEST(Stokes, PlaneOfHigherDimensionalField) {
    // Rotation in (1, 3) of a 4-D field; a loop in that plane sees it, one in (0, 2) does not.
    const FieldSpec f(4, {Rotation{1, 3, Vector::Zero(4), 1.0}, quadratic_well(Vector::Zero(4), 1.0)});
    std::vector<Vector> loop13, loop02;
    for (int k = 0; k < 64; ++k) {
        const double th = 2.0 * kPi * k / 64;
        Vector a = Vector::Zero(4), b = Vector::Zero(4);
        a[1] = std::cos(th);
        a[3] = std::sin(th);
        b[0] = std::cos(th);
        b[2] = std::sin(th);
        loop13.push_back(a);
        loop02.push_back(b);
    }
    const auto s13 = stokes_check(loop13, f, 1, 3);
    EXPECT_NEAR(s13.surface_integral, 2.0 * s13.area, 1e-6);
    EXPECT_LE(s13.mismatch, 1e-6);
    EXPECT_NEAR(stokes_check(loop02, f, 0, 2).line_integral, 0.0, 1e-12);
}

TEST(Classify, DampedWellIsEquilibrium) {
    const auto f = well(2);
    const auto tr = integrate_second_order(f, DampingSpec::uniform(2, 1.0), {vec({1, 0.5}), Vector::Zero(2)}, 1e-2,
                                           5000, NoiseSpec::none(2));
    const auto v = classify_asymptotics(tr, f);
    EXPECT_EQ(v.kind, VerdictKind::Equilibrium);
    EXPECT_LT(v.evidence.final_speed, 1e-6);
}

TEST(Classify, LimitCycleIsCirculation) {
    const double c = 2.0;
    const auto f = limit_cycle_field(c);
    const auto tr = integrate_second_order(f, DampingSpec::uniform(2, 1.0), {vec({0.5, 0}), Vector::Zero(2)}, 1e-3,
                                           60000, NoiseSpec::none(2));
    const auto v = classify_asymptotics(tr, f);
    ASSERT_EQ(v.kind, VerdictKind::Circulation);
    EXPECT_GE(v.evidence.recurrence_indices.size(), 3u);
    EXPECT_NEAR(v.evidence.period, 2.0 * kPi / c, 0.01);
    EXPECT_LE(v.evidence.period_spread, 0.1);
    // r² = c² - 1 on the cycle: ∮ξ·dx = 2c·(πr²) from the rotation part.
    EXPECT_NEAR(v.evidence.enclosed_curl, 2.0 * c * kPi * (c * c - 1.0), 0.02 * 2.0 * c * kPi * (c * c - 1.0));
    EXPECT_NEAR(tr.states.back().x.norm(), std::sqrt(c * c - 1.0), 1e-3);
}

TEST(Classify, TruncatedRunIsUndecided) {
    const auto f = well(2, 0.01);  // slow: still moving at the end
    const auto tr = integrate_second_order(f, DampingSpec::uniform(2, 1.0), {vec({1, 0}), Vector::Zero(2)}, 1e-2, 500,
                                           NoiseSpec::none(2));
    EXPECT_EQ(classify_asymptotics(tr, f).kind, VerdictKind::Undecided);
    AsymptoticThresholds th;
    th.dwell_steps = 10000;
    const auto settled = integrate_second_order(well(2), DampingSpec::uniform(2, 1.0), {vec({1, 0}), Vector::Zero(2)},
                                                1e-2, 5000, NoiseSpec::none(2));
    EXPECT_EQ(classify_asymptotics(settled, well(2), th).kind, VerdictKind::Undecided);
}

TEST(Classify, DecayingSpiralIsNotCirculation) {
    const auto f = well_plus_rotation(0.5);
    const auto tr = integrate_second_order(f, DampingSpec::uniform(2, 1.0), {vec({1, 0}), Vector::Zero(2)}, 1e-2,
                                           3000, NoiseSpec::none(2));
    EXPECT_NE(classify_asymptotics(tr, f).kind, VerdictKind::Circulation);
}

TEST(DecayRate, PredictedHandValues) {
    EXPECT_NEAR(predicted_decay_rate({-1.0}, 2.0), 1.0, 1e-12);
    EXPECT_NEAR(predicted_decay_rate({-1.0}, 0.2), 0.1, 1e-12);
    EXPECT_NEAR(predicted_decay_rate({-2.0}, 3.0), 1.0, 1e-12);  // roots -1, -2
    EXPECT_NEAR(predicted_decay_rate({-2.0, -0.5}, 3.0), (3.0 - std::sqrt(7.0)) / 2.0, 1e-12);
    EXPECT_NEAR(predicted_decay_rate({0.0}, 1.0), 0.0, 1e-12);
    EXPECT_LT(predicted_decay_rate({0.5}, 1.0), 0.0);
    // a = 2, b = 0.5, k = 2: λ = -1.5 is the slow mode under γ = 4.
    EXPECT_NEAR(predicted_substitutable_rate(2.0, 0.5, 2, 4.0), (4.0 - std::sqrt(10.0)) / 2.0, 1e-12);
}

TEST(DecayRate, SubstitutableOverdamped) {
    const double a = 2.0, b = 0.5, gamma = 4.0;
    const Vector center = Vector::Zero(4);
    const auto f = make_substitutable_field(a, b, 2, StateVector(center));
    const auto tr = integrate_second_order(f, DampingSpec::uniform(4, gamma),
                                           {vec({0.3, -0.1, 0.2, 0}), Vector::Zero(4)}, 1e-2, 7000, NoiseSpec::none(4));
    const auto fit = fit_decay_rate(tr, {0, 1}, center);
    const double want = predicted_substitutable_rate(a, b, 2, gamma);
    EXPECT_NEAR(fit.rate, want, 0.05 * want);
    EXPECT_FALSE(fit.used_peaks);
}

TEST(DecayRate, CriticalDamping) {
    const auto tr = integrate_second_order(well(2), DampingSpec::uniform(2, 2.0), {vec({1, 0}), Vector::Zero(2)}, 1e-2,
                                           10000, NoiseSpec::none(2));
    const auto fit = fit_decay_rate(tr, {0}, Vector::Zero(2));
    EXPECT_NEAR(fit.rate, 1.0, 0.05);
}

TEST(DecayRate, UnderdampedUsesPeaks) {
    const auto tr = integrate_second_order(well(2), DampingSpec::uniform(2, 0.2), {vec({1, 0}), Vector::Zero(2)}, 1e-2,
                                           10000, NoiseSpec::none(2));
    const auto fit = fit_decay_rate(tr, {0}, Vector::Zero(2));
    EXPECT_TRUE(fit.used_peaks);
    EXPECT_NEAR(fit.rate, 0.1, 0.005);
}

TEST(DecayRate, GrowthIsNegative) {
    const FieldSpec unstable(2, {QuadraticPotential{Vector::Zero(2), -0.1 * Matrix::Identity(2, 2)}});
    const auto tr = integrate_second_order(unstable, DampingSpec::uniform(2, 1.0), {vec({1e-3, 0}), Vector::Zero(2)},
                                           1e-2, 3000, NoiseSpec::none(2));
    const auto fit = fit_decay_rate(tr, {0}, Vector::Zero(2));
    EXPECT_NEAR(fit.rate, predicted_decay_rate({0.1}, 1.0), 0.01);
    EXPECT_LT(fit.rate, 0.0);
}

TEST(DecayRate, OrthogonalPerturbationIsInsufficient) {
    const auto tr = integrate_second_order(well(4), DampingSpec::uniform(4, 1.0), {vec({0, 0, 0.5, 0}), Vector::Zero(4)},
                                           1e-2, 100, NoiseSpec::none(4));
    try {
        (void)fit_decay_rate(tr, {0, 1}, Vector::Zero(4));
        FAIL() << "expected InsufficientData";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InsufficientData);
    }
}

TEST(Regime, HandSeries) {
    EXPECT_EQ(classify_regime({1.0, 0.5, 0.25, 0.1, 0.0}), Regime::Monotone);
    EXPECT_EQ(classify_regime({1.0, 0.2, -0.1, -0.05, 0.0}), Regime::Monotone);  // one crossing
    EXPECT_EQ(classify_regime({1.0, -0.5, 0.25, -0.1}), Regime::Ringing);
    EXPECT_EQ(classify_regime({1.0, 0.5, 1e-12, -1e-12, 1e-12}), Regime::Monotone);  // below the noise floor
}
