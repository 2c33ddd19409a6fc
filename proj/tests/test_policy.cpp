#include <gtest/gtest.h>

#include <cmath>

#include "crw/evolve.hpp"
#include "crw/policy.hpp"
#include "support.hpp"

using namespace crw;

TEST(ConstantPolicy, ValidatesBounds) {
    EXPECT_NO_THROW(constant_policy(0.5, 0.5));
    EXPECT_NO_THROW(constant_policy(0.5, 0.0));
    EXPECT_THROW(constant_policy(0.5, 0.6), AdmissibilityError);
    EXPECT_THROW(constant_policy(1.0, 0.5), ParameterError);
    EXPECT_THROW(constant_policy(-0.1, 0.0), ParameterError);
}

TEST(TwoZonePolicy, SlowInsideFastOutside) {
    const auto p = two_zone_policy(0.7, 3);
    EXPECT_EQ(p.kind(), PolicyKind::two_zone);
    EXPECT_DOUBLE_EQ(p.evaluate(5, 3, Flag::not_hit), 0.7);
    EXPECT_DOUBLE_EQ(p.evaluate(5, -3, Flag::hit), 0.7);
    EXPECT_DOUBLE_EQ(p.evaluate(5, 4, Flag::hit), 0.0);
    EXPECT_FALSE(p.flag_dependent());
    EXPECT_THROW(two_zone_policy(0.7, -1), ParameterError);
}

TEST(FastUntilZero, ReadsTheFlag) {
    const auto p = fast_until_zero_policy(0.8);
    EXPECT_TRUE(p.flag_dependent());
    EXPECT_DOUBLE_EQ(p.evaluate(0, 5, Flag::not_hit), 0.0);
    EXPECT_DOUBLE_EQ(p.evaluate(0, 5, Flag::hit), 0.8);
}

TEST(PolicyRows, StayWithinCap) {
    oracle::Cases cases(3);
    for (int c = 0; c < 30; ++c) {
        const double q = cases.uniform(0.0, 0.99);
        const auto p = two_zone_policy(q, cases.integer(0, 20));
        const auto r = p.row<double>(cases.integer(0, 100), -30, 30);
        for (double u : r.u_hit) EXPECT_TRUE(u >= 0.0 && u <= q);
        for (double u : r.u_not_hit) EXPECT_TRUE(u >= 0.0 && u <= q);
    }
}

TEST(LocalizationSchedule, ScaleCountAndBreakpoints) {
    EXPECT_EQ(localization_scale_count(0.25, 10, 1000000), 3);
    const auto s = multiscale_localization_schedule(0.9, 1.0, 0.25, 10, 1000000);
    EXPECT_EQ(s.scales, 3);
    ASSERT_EQ(s.segments.size(), 4u);
    EXPECT_EQ(s.segments[0].t_start, 0);
    EXPECT_EQ(s.segments[0].t_end, 563200);
    EXPECT_EQ(s.segments[1].t_end, 972800);
    EXPECT_EQ(s.segments[2].t_end, 998400);
    EXPECT_EQ(s.segments[3].t_end, 1000000);
    EXPECT_DOUBLE_EQ(s.segments[1].scale, 640.0);
    EXPECT_EQ(std::get<TwoZoneControl>(s.segments[1].control).band, 160);
    EXPECT_EQ(std::get<TwoZoneControl>(s.segments[3].control).band, 10);
    EXPECT_DOUBLE_EQ(std::get<ConstantControl>(s.segments[0].control).u, 0.9);
}

TEST(LocalizationSchedule, RejectsDegenerateInputs) {
    EXPECT_THROW(multiscale_localization_schedule(0.9, 0.8, 1.0, 2, 4096), ParameterError);
    EXPECT_THROW(multiscale_localization_schedule(0.9, 0.0, 0.25, 2, 4096), ParameterError);
    EXPECT_THROW(multiscale_localization_schedule(0.9, 0.8, 0.25, 0.5, 4096), ParameterError);
    EXPECT_THROW(multiscale_localization_schedule(0.9, 0.8, 0.25, 2, 3), ParameterError);
    // T barely above K0^2 leaves no room for a scale.
    EXPECT_THROW(multiscale_localization_schedule(0.9, 0.8, 0.25, 2, 10), DegenerateScheduleError);
    // alpha so large the phases overrun the horizon.
    EXPECT_THROW(multiscale_localization_schedule(0.9, 50.0, 0.25, 2, 4096), DegenerateScheduleError);
}

TEST(Qto1Schedule, FormulaAndEffectiveScales) {
    EXPECT_EQ(qto1_scale_count(4, 4096), 5);
    const auto s = multiscale_qto1_schedule(0.95, 4, 4096);
    EXPECT_EQ(s.formula_scales, 5);
    EXPECT_EQ(s.scales, 4);
    ASSERT_EQ(s.segments.size(), 6u);
    EXPECT_EQ(s.segments[0].t_end, 2732);
    EXPECT_DOUBLE_EQ(std::get<ConstantControl>(s.segments[0].control).u, 0.0);
    EXPECT_EQ(s.segments[1].t_start, 2732);
    EXPECT_EQ(s.segments[1].t_end, 3756);
    EXPECT_DOUBLE_EQ(s.segments[1].scale, 16.0);
    EXPECT_EQ(s.segments.back().t_start, 4092);
    EXPECT_EQ(s.segments.back().t_end, 4096);
    for (std::size_t i = 1; i < s.segments.size(); ++i) {
        EXPECT_TRUE(s.segments[i].resets_flag);
        EXPECT_TRUE(std::holds_alternative<FastUntilZeroControl>(s.segments[i].control));
        EXPECT_EQ(s.segments[i].length(), static_cast<Step>(4 * std::pow(4.0, s.segments[i].scale_index)));
    }
    EXPECT_THROW(multiscale_qto1_schedule(0.95, 4, 4), DegenerateScheduleError);
    EXPECT_THROW(multiscale_qto1_schedule(0.95, 0.5, 100), ParameterError);
}

TEST(SchedulePolicy, SegmentsPartitionTheHorizon) {
    oracle::Cases cases(17);
    for (int c = 0; c < 20; ++c) {
        const double A = static_cast<double>(cases.integer(1, 16));
        const Step n = cases.integer(64, 20000);
        const auto s = multiscale_qto1_schedule(0.9, A, n);
        Step expect = 0;
        for (const auto& g : s.segments) {
            EXPECT_EQ(g.t_start, expect);
            EXPECT_GT(g.t_end, g.t_start);
            expect = g.t_end;
        }
        EXPECT_EQ(expect, n);
    }
}

TEST(SchedulePolicy, RejectsGaps) {
    ScheduleControl s{{ScheduleSegment{0, 5, ConstantControl{0.0}}, ScheduleSegment{6, 9, ConstantControl{0.0}}}};
    EXPECT_THROW(PolicySpec(0.5, s), ParameterError);
}

TEST(SchedulePolicy, ResetsFlagAtPhaseStart) {
    const auto p = schedule_policy(0.9, multiscale_qto1_schedule(0.9, 4, 4096));
    EXPECT_TRUE(p.resets_flag_at(2732));
    EXPECT_FALSE(p.resets_flag_at(2733));
    EXPECT_FALSE(p.resets_flag_at(0));
    EXPECT_THROW(p.evaluate(4096, 0, Flag::hit), ParameterError);
}

TEST(RegionBitmap, RunLengthRoundTrip) {
    oracle::Cases cases(23);
    for (int c = 0; c < 20; ++c) {
        const Step h = cases.integer(1, 20);
        RegionBitmap a(h, -cases.integer(0, 15), cases.integer(0, 15));
        for (Step t = 0; t < h; ++t)
            for (Site x = a.lo(); x <= a.hi(); ++x) a.set(t, x, cases.coin());
        RegionBitmap b(h, a.lo(), a.hi());
        for (Step t = 0; t < h; ++t) b.decode_row(t, a.encode_row(t));
        EXPECT_EQ(a, b);
    }
}

TEST(RegionBitmap, RowEncodingStartsWithZeros) {
    RegionBitmap r(1, -2, 2);
    r.set(0, -2, true);
    r.set(0, 1, true);
    EXPECT_EQ(r.encode_row(0), (std::vector<std::uint64_t>{0, 1, 2, 1, 1}));
    RegionBitmap bad(1, -2, 2);
    EXPECT_THROW(bad.decode_row(0, {2, 1}), ParameterError);
    EXPECT_THROW(bad.decode_row(0, {4, 3}), ParameterError);
}
