#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "pqdyn/diagnostics.hpp"
#include "pqdyn/dynamics.hpp"

using namespace pqdyn;

namespace {

Vector vec(std::initializer_list<double> xs) {
    Vector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

FieldSpec well(Eigen::Index d, double k = 1.0) { return FieldSpec(d, {quadratic_well(Vector::Zero(d), k)}); }
FieldSpec zero_field(Eigen::Index d) { return FieldSpec(d, {}); }

PhaseState phase(Vector x, Vector v) { return {std::move(x), std::move(v)}; }

}  // namespace

TEST(FirstOrder, ExponentialDecay) {
    // n = 1 economy (D = 2), price coordinate checked against e^{-t}.
    const auto tr = integrate_first_order(well(2), vec({1, 0}), 0.01, 100, NoiseSpec::none(2));
    EXPECT_NEAR(tr.states.back().x[0], std::exp(-1.0), 1e-6);
    EXPECT_EQ(tr.size(), 101u);
    EXPECT_NEAR(tr.times.back(), 1.0, 1e-12);
}

TEST(FirstOrder, ZeroFieldConstant) {
    const auto tr = integrate_first_order(zero_field(4), vec({1, 2, 3, 4}), 0.1, 50, NoiseSpec::none(4));
    for (const auto& s : tr.states) EXPECT_EQ(s.x, vec({1, 2, 3, 4}));
}

TEST(FirstOrder, RotationConservesRadius) {
    const FieldSpec rot(2, {Rotation{0, 1, Vector::Zero(2), 1.0}});
    const auto tr = integrate_first_order(rot, vec({1, 0}), 0.01, 1000, NoiseSpec::none(2));
    double worst = 0.0;
    for (const auto& s : tr.states) worst = std::max(worst, std::abs(s.x.norm() - 1.0));
    EXPECT_LE(worst, 1e-6);
}

TEST(SecondOrder, CriticalDamping) {
    const auto tr = integrate_second_order(well(2), DampingSpec::uniform(2, 2.0), phase(vec({1, 0}), vec({0, 0})),
                                           1e-3, 1000, NoiseSpec::none(2));
    EXPECT_NEAR(tr.states.back().x[0], 2.0 * std::exp(-1.0), 1e-5);
}

TEST(SecondOrder, FreeParticleWithDamping) {
    const auto tr = integrate_second_order(zero_field(2), DampingSpec::uniform(2, 1.0), phase(vec({0, 0}), vec({1, 0})),
                                           1e-2, 2000, NoiseSpec::none(2));
    for (std::size_t k = 0; k < tr.size(); k += 100)
        EXPECT_NEAR(tr.states[k].x[0], 1.0 - std::exp(-tr.times[k]), 1e-9);
    EXPECT_NEAR(tr.states.back().x[0], 1.0, 1e-8);
}

TEST(SecondOrder, UnderdampedEnvelopeAndFrequency) {
    const double g = 0.2;
    const auto tr = integrate_second_order(well(2), DampingSpec::uniform(2, g), phase(vec({1, 0}), vec({0, 0})),
                                           1e-3, 40000, NoiseSpec::none(2));
    // Closed form: e^{-t/10}(cos ωt + (0.1/ω) sin ωt), ω = √(1 - 0.01).
    const double w = std::sqrt(1.0 - 0.01);
    double worst = 0.0;
    for (std::size_t k = 0; k < tr.size(); ++k) {
        const double t = tr.times[k];
        const double exact = std::exp(-0.1 * t) * (std::cos(w * t) + 0.1 / w * std::sin(w * t));
        worst = std::max(worst, std::abs(tr.states[k].x[0] - exact));
    }
    EXPECT_LE(worst, 1e-9);
    // Independent frequency estimate from zero crossings.
    std::vector<double> crossings;
    for (std::size_t k = 0; k + 1 < tr.size(); ++k) {
        const double a = tr.states[k].x[0], b = tr.states[k + 1].x[0];
        if (a > 0 && b <= 0) crossings.push_back(tr.times[k] + a / (a - b) * tr.dt);
    }
    ASSERT_GE(crossings.size(), 3u);
    const double period = (crossings.back() - crossings.front()) / static_cast<double>(crossings.size() - 1);
    EXPECT_NEAR(2 * std::numbers::pi / period, w, 0.01 * w);
    const auto fit = fit_decay_rate(tr, {0}, Vector::Zero(2));
    EXPECT_TRUE(fit.used_peaks);
    EXPECT_NEAR(fit.rate, 0.1, 0.005);
}

TEST(SecondOrder, FourthOrderConvergence) {
    const auto run = [](double dt) {
        const auto steps = static_cast<long long>(std::llround(5.0 / dt));
        const auto tr = integrate_second_order(well(2), DampingSpec::uniform(2, 0.5), phase(vec({1, 0}), vec({0, 0})),
                                               dt, steps, NoiseSpec::none(2));
        const double w = std::sqrt(1.0 - 0.0625);
        double worst = 0.0;
        for (std::size_t k = 0; k < tr.size(); ++k) {
            const double t = tr.times[k];
            const double exact = std::exp(-0.25 * t) * (std::cos(w * t) + 0.25 / w * std::sin(w * t));
            worst = std::max(worst, std::abs(tr.states[k].x[0] - exact));
        }
        return worst;
    };
    double prev = run(0.1);
    for (double dt : {0.05, 0.025, 0.0125}) {
        const double e = run(dt);
        EXPECT_GE(prev / e, 8.0) << "dt=" << dt;
        prev = e;
    }
}

TEST(SecondOrder, ClampAndFlag) {
    const FieldSpec push(2, {quadratic_well(vec({5, 0}), 1.0)}, Box::cube(2, 1.0));
    const auto tr = integrate_second_order(push, DampingSpec::uniform(2, 1.0), phase(vec({0, 0}), vec({0, 0})),
                                           1e-2, 500, NoiseSpec::none(2));
    EXPECT_TRUE(tr.any_clamped());
    EXPECT_DOUBLE_EQ(tr.states.back().x[0], 1.0);
    EXPECT_EQ(tr.flags.front(), 0);
}

TEST(SecondOrder, Errors) {
    const auto f = well(2);
    EXPECT_THROW((void)integrate_second_order(f, DampingSpec::uniform(2, 0.0), phase(vec({0, 0}), vec({0, 0})), 0.1, 1, NoiseSpec::none(2)), Error);
    EXPECT_THROW((void)integrate_second_order(f, DampingSpec::uniform(2, 1.0), phase(vec({0, 0}), vec({0, 0})), 0.0, 1, NoiseSpec::none(2)), Error);
    EXPECT_THROW((void)integrate_second_order(f, DampingSpec::uniform(4, 1.0), phase(vec({0, 0}), vec({0, 0})), 0.1, 1, NoiseSpec::none(2)), Error);
    NoiseSpec bad = NoiseSpec::none(2);
    bad.sigma[0] = -1;
    EXPECT_THROW((void)integrate_second_order(f, DampingSpec::uniform(2, 1.0), phase(vec({0, 0}), vec({0, 0})), 0.1, 1, bad), Error);
    // A violently unstable linear field overflows to inf inside the default box.
    const FieldSpec blow(2, {QuadraticPotential{Vector::Zero(2), -1e200 * Matrix::Identity(2, 2)}}, Box::cube(2, 1e300));
    try {
        (void)integrate_first_order(blow, vec({1, 1}), 1.0, 10, NoiseSpec::none(2));
        FAIL();
    } catch (const Error& e) {
        EXPECT_TRUE(e.kind() == ErrorKind::NonFinite) << e.what();
    }
}

TEST(Noise, RecordedDrawsAndMean) {
    NoiseSpec n{Vector::Zero(2), vec({0.5, 2.0}), 42};
    const long long N = 100000;
    const auto tr = integrate_first_order(zero_field(2), vec({0, 0}), 1e-3, N, n);
    ASSERT_EQ(tr.noise_draws.size(), tr.size());
    EXPECT_EQ(tr.noise_draws.back(), Vector::Zero(2));
    Vector mean = Vector::Zero(2);
    for (long long k = 0; k < N; ++k) mean += tr.noise_draws[static_cast<std::size_t>(k)];
    mean /= static_cast<double>(N);
    EXPECT_LE(std::abs(mean[0]), 4 * 0.5 / std::sqrt(N));
    EXPECT_LE(std::abs(mean[1]), 4 * 2.0 / std::sqrt(N));
    // With ξ ≡ 0, x is the running sum of ε·dt.
    Vector sum = Vector::Zero(2);
    for (long long k = 0; k < N; ++k) sum += tr.noise_draws[static_cast<std::size_t>(k)] * 1e-3;
    EXPECT_LE((tr.states.back().x - sum).norm(), 1e-10);
}

TEST(Noise, DeterministicPerSeed) {
    NoiseSpec n{Vector::Zero(2), vec({1, 1}), 9};
    const auto a = integrate_second_order(well(2), DampingSpec::uniform(2, 1), phase(vec({1, 0}), vec({0, 0})), 1e-2, 300, n);
    const auto b = integrate_second_order(well(2), DampingSpec::uniform(2, 1), phase(vec({1, 0}), vec({0, 0})), 1e-2, 300, n);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a.states[k].x, b.states[k].x);
    n.seed = 10;
    const auto c = integrate_second_order(well(2), DampingSpec::uniform(2, 1), phase(vec({1, 0}), vec({0, 0})), 1e-2, 300, n);
    EXPECT_NE(a.states.back().x, c.states.back().x);
}

TEST(GammaEquivalent, HandValues) {
    EXPECT_EQ(gamma_equivalent(0.5, 1.0), 1.0);
    EXPECT_EQ(gamma_equivalent(1.0, 1.0), 0.0);
    EXPECT_EQ(gamma_equivalent(0.25, 2.0), 1.0);
    EXPECT_LT(gamma_equivalent(0.9, 1.5), 0.0);
    EXPECT_THROW((void)gamma_equivalent(0.0, 1.0), Error);
}

TEST(Population, NoGroupBIsEuler) {
    PopulationSpec pop;
    pop.f_a = 1.0;
    pop.f_b = 0.0;
    pop.nu = 3.0;
    pop.sellers_b = 0;
    pop.initial_mean = vec({1.0, -0.5});
    pop.initial_delta = vec({0.7, 0.7});
    const auto f = well(2, 0.3);
    const auto run = simulate_population(pop, f, 50, NoiseSpec::none(2));
    Vector x = pop.initial_mean;
    for (std::size_t t = 0; t < run.mean.size(); ++t) {
        EXPECT_LE((run.mean.states[t].x - x).norm(), 1e-14);
        x += f.eval(x);
    }
    EXPECT_TRUE(run.second_difference.empty());
}

TEST(Population, GeometricDecayWithZeroField) {
    PopulationSpec pop;
    pop.f_a = 0.4;
    pop.f_b = 0.6;
    pop.nu = 1.2;
    pop.initial_mean = vec({0.0, 0.0});
    pop.initial_delta = vec({1.0, -2.0});
    const auto run = simulate_population(pop, zero_field(2), 60, NoiseSpec::none(2));
    const double r = pop.f_b * pop.nu;
    for (std::size_t t = 1; t < run.mean.size(); ++t) {
        const Vector expected = std::pow(r, static_cast<double>(t)) * pop.initial_delta;
        EXPECT_LE((run.mean.states[t].v - expected).norm(), 1e-12);
    }
}

TEST(Population, SecondDifferenceIdentity) {
    PopulationSpec pop;
    pop.f_a = 0.3;
    pop.f_b = 0.7;
    pop.nu = 0.9;
    pop.sellers_a = 5;
    pop.sellers_b = 7;
    pop.initial_mean = vec({0.5, -0.2, 0.1, 0.3});
    pop.initial_delta = vec({0.01, 0, 0, -0.02});
    pop.initial_dispersion = 0.05;
    const FieldSpec f(4, {quadratic_well(Vector::Zero(4), 0.2), Rotation{0, 1, Vector::Zero(4), 0.1}});
    NoiseSpec n{Vector::Zero(4), Vector::Constant(4, 0.01), 3};
    const auto run = simulate_population(pop, f, 200, n);
    ASSERT_EQ(run.second_difference.size(), 200u);
    for (const auto& s : run.second_difference)
        EXPECT_LE((s.realized - (s.field_term + s.noise_term + s.damping_term)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Population, Validation) {
    PopulationSpec pop;
    pop.f_a = 0.5;
    pop.f_b = 0.6;
    pop.initial_mean = vec({0, 0});
    pop.initial_delta = vec({0, 0});
    EXPECT_THROW((void)simulate_population(pop, zero_field(2), 5, NoiseSpec::none(2)), Error);
    pop.f_b = 0.5;
    pop.nu = 2.5;
    const auto run = simulate_population(pop, zero_field(2), 5, NoiseSpec::none(2));
    EXPECT_TRUE(run.undamped);
}
