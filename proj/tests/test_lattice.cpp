#include <gtest/gtest.h>

#include <cmath>

#include "crw/evolve.hpp"
#include "crw/lattice.hpp"
#include "crw/policy.hpp"
#include "support.hpp"

using namespace crw;

namespace {

ControlRow<double> uniform_row(Step t, Site lo, Site hi, double q, double u) {
    ControlRow<double> r;
    r.time = t;
    r.q_cap = q;
    r.offset = lo;
    r.u_not_hit.assign(static_cast<std::size_t>(hi - lo + 1), u);
    r.u_hit = r.u_not_hit;
    return r;
}

}  // namespace

TEST(PointMass, FlagDefaultsToHitOnlyAtZero) {
    EXPECT_DOUBLE_EQ(point_mass<double>(0).at(0, Flag::hit), 1.0);
    EXPECT_DOUBLE_EQ(point_mass<double>(3).at(3, Flag::not_hit), 1.0);
    EXPECT_DOUBLE_EQ(point_mass<double>(0, Flag::not_hit).at(0, Flag::not_hit), 1.0);
    EXPECT_EQ(point_mass<double>(5).time(), 0);
}

TEST(StepDistribution, OneStepWithU03) {
    const auto d = step_distribution(point_mass<double>(0), uniform_row(0, 0, 0, 0.3, 0.3));
    EXPECT_NEAR(d.at(0), 0.3, 1e-15);
    EXPECT_NEAR(d.at(1), 0.35, 1e-15);
    EXPECT_NEAR(d.at(-1), 0.35, 1e-15);
    EXPECT_EQ(d.time(), 1);
}

TEST(StepDistribution, RationalOneStepIsExactDecimal) {
    const auto d = evolve<Rational>(constant_policy(0.3, 0.3), 1, 0);
    EXPECT_EQ(d.at(0), Rational(3, 10));
    EXPECT_EQ(d.at(1), Rational(7, 20));
    EXPECT_EQ(d.total(), Rational(1));
}

TEST(StepDistribution, TwoStepSimpleWalk) {
    const auto d = evolve<double>(constant_policy(0.0, 0.0), 2, 0);
    EXPECT_DOUBLE_EQ(d.at(0), 0.5);
    EXPECT_DOUBLE_EQ(d.at(2), 0.25);
    EXPECT_DOUBLE_EQ(d.at(-2), 0.25);
    EXPECT_DOUBLE_EQ(d.at(1), 0.0);
}

TEST(StepDistribution, RejectsControlAboveCap) {
    EXPECT_THROW(step_distribution(point_mass<double>(0), uniform_row(0, 0, 0, 0.3, 0.31)), AdmissibilityError);
    EXPECT_THROW(step_distribution(point_mass<double>(0), uniform_row(0, 0, 0, 0.3, -0.01)), AdmissibilityError);
}

TEST(StepDistribution, RejectsMismatchedRow) {
    EXPECT_THROW(step_distribution(point_mass<double>(0), uniform_row(1, 0, 0, 0.3, 0.3)), ParameterError);
    EXPECT_THROW(step_distribution(point_mass<double>(2), uniform_row(0, 0, 1, 0.3, 0.3)), ParameterError);
}

TEST(Evolve, BinomialOracleAtHundredSteps) {
    const double expected = oracle::binomial_half(100, 50).convert_to<double>();
    EXPECT_NEAR(hit_probability<double>(constant_policy(0.0, 0.0), 100, 0), expected, 1e-12);
    EXPECT_NEAR(expected, 0.0795892, 1e-7);
}

TEST(Evolve, RationalBinomialIsExact) {
    EXPECT_EQ(hit_probability<Rational>(constant_policy(0.0, 0.0), 40, 0), oracle::binomial_half(40, 20));
}

TEST(Evolve, MassConservedUnderRandomControls) {
    oracle::Cases cases(11);
    for (int c = 0; c < 50; ++c) {
        const double q = cases.uniform(0.0, 0.99);
        auto d = point_mass<double>(cases.integer(-5, 5));
        const Step n = cases.integer(1, 60);
        for (Step t = 0; t < n; ++t) {
            ControlRow<double> r = uniform_row(t, d.lo(), d.hi(), q, 0.0);
            for (auto& u : r.u_not_hit) u = cases.uniform(0.0, q);
            for (auto& u : r.u_hit) u = cases.uniform(0.0, q);
            const double before = d.total();
            d = step_distribution(d, r);
            EXPECT_NEAR(d.total(), before, 1e-14);
        }
        EXPECT_NEAR(d.total(), 1.0, 1e-12);
    }
}

TEST(Evolve, RationalMassIsExactlyOne) {
    const auto d = evolve<Rational>(two_zone_policy(0.7, 3), 30, 2);
    EXPECT_EQ(d.total(), Rational(1));
}

TEST(Evolve, SymmetricPoliciesGiveSymmetricLaws) {
    oracle::Cases cases(5);
    for (int c = 0; c < 20; ++c) {
        const double q = cases.uniform(0.0, 0.95);
        const Step n = cases.integer(1, 200);
        EXPECT_LT(symmetry_defect(evolve<double>(lazy_policy(q), n, 0)), 1e-15);
        EXPECT_LT(symmetry_defect(evolve<double>(two_zone_policy(q, cases.integer(0, 10)), n, 0)), 1e-15);
        EXPECT_LT(symmetry_defect(evolve<double>(fast_until_zero_policy(q), n, 0)), 1e-15);
    }
}

TEST(Evolve, ParityOfTheSimpleWalk) {
    const auto d = evolve<double>(constant_policy(0.5, 0.0), 31, 0);
    for (Site x = d.lo(); x <= d.hi(); ++x)
        if (x % 2 == 0) { EXPECT_EQ(d.at(x), 0.0); }
}

TEST(Evolve, HitLayerMatchesFirstPassage) {
    // P(tau_0 <= n) from x > 0 computed two ways: the hit layer of the
    // flag-augmented law and an absorbing boundary at 0.
    for (double q : {0.0, 0.4, 0.8}) {
        for (Site x : {1, 3, 7}) {
            const Step n = 50;
            const auto d = evolve<double>(lazy_policy(q), n, x);
            const auto a = evolve_absorbing<double>(lazy_policy(q), n, x, AbsorbingSet{0, std::nullopt});
            EXPECT_NEAR(d.total(Flag::hit), a.at(0), 1e-13) << "q=" << q << " x=" << x;
        }
    }
}

TEST(Evolve, LazyStepOnZeroKeepsHitFlag) {
    const auto d = evolve<double>(lazy_policy(0.5), 1, 0);
    EXPECT_DOUBLE_EQ(d.at(0, Flag::hit), 0.5);
    EXPECT_DOUBLE_EQ(d.at(1, Flag::hit), 0.25);
    EXPECT_DOUBLE_EQ(d.total(Flag::not_hit), 0.0);
}

TEST(Evolve, EvolveFromMatchesPointMass) {
    const auto a = evolve<double>(two_zone_policy(0.6, 2), 40, 3);
    const auto b = evolve_from<double>(two_zone_policy(0.6, 2), point_mass<double>(3), 40);
    for (Site x = a.lo(); x <= a.hi(); ++x) EXPECT_EQ(a.at(x), b.at(x));
}

TEST(Evolve, RejectsShortHorizon) {
    const auto s = multiscale_localization_schedule(0.9, 0.8, 0.25, 2, 4096);
    EXPECT_THROW(evolve<double>(schedule_policy(0.9, s), 4097, 0), ParameterError);
}

TEST(IntervalMass, SumsBothFlags) {
    const auto d = evolve<double>(lazy_policy(0.5), 10, 0);
    double total = 0.0;
    for (Site x = -10; x <= 10; ++x) total += d.at(x);
    EXPECT_NEAR(interval_mass(d, -10, 10), total, 1e-15);
    EXPECT_NEAR(interval_mass(d, -100, 100), 1.0, 1e-14);
    EXPECT_DOUBLE_EQ(interval_mass(d, 50, 60), 0.0);
    EXPECT_THROW(interval_mass(d, 1, 0), ParameterError);
}

TEST(Distribution, TrimmedDropsZeroTails) {
    const auto d = evolve<double>(constant_policy(0.0, 0.0), 2, 0);
    Distribution<double> padded(2, -5, {0, 0, 0, 0.25, 0, 0.5, 0, 0.25, 0, 0}, std::vector<double>(10, 0.0));
    const auto t = padded.trimmed();
    EXPECT_EQ(t.lo(), -2);
    EXPECT_EQ(t.hi(), 2);
    EXPECT_DOUBLE_EQ(t.at(0), d.at(0));
}

TEST(ResetFlags, KeepsOnlyMassOnZeroAsHit) {
    const auto d = reset_flags(evolve<double>(lazy_policy(0.5), 6, 0));
    EXPECT_DOUBLE_EQ(d.total(Flag::hit), d.at(0));
    EXPECT_NEAR(d.total(), 1.0, 1e-15);
}

TEST(DecimalRational, ParsesExactly) {
    EXPECT_EQ(parse_decimal_rational("0.09"), Rational(9, 100));
    EXPECT_EQ(parse_decimal_rational("-1.25e-2"), Rational(-1, 80));
    EXPECT_EQ(parse_decimal_rational("0070"), Rational(70));
    EXPECT_EQ(parse_decimal_rational("0.0"), Rational(0));
    EXPECT_EQ(from_double<Rational>(0.9), Rational(9, 10));
    EXPECT_THROW(parse_decimal_rational("1.2.3"), ParameterError);
    EXPECT_THROW(parse_decimal_rational("."), ParameterError);
}
