// Synthetic forecast and trajectory generator tests
#include <piml/pipeline.hpp>
#include <piml/synth.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

using namespace piml;
using namespace piml::synth;
namespace atm = piml::atmosphere;

namespace {

ScenarioConfig small_grid() {
    ScenarioConfig c;
    c.n_lat = 6;
    c.n_lon = 5;
    c.months = {3, 4};
    return c;
}

ScenarioConfig quiet() {
    ScenarioConfig c;
    for (auto& o : c.operators) o.thrust_effect = o.cas_effect = 0.0;
    for (auto& f : c.flight_types) f.thrust_effect = f.cas_effect = 0.0;
    c.thrust_fl_max_effect = 0.0;
    c.cas_wind_effect = 0.0;
    c.thrust_mode_sd = {0.0, 0.0, 0.0, 0.0};
    c.cas_offset_sd = c.cas_slope_sd = 0.0;
    c.rocd_noise = c.cas_noise = 0.0;
    return c;
}

const Dataset& benchmark() {
    static const Dataset d = gen_dataset(ScenarioConfig{}, 2000, 2024);
    return d;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) ma += a[i] / n, mb += b[i] / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(Forecast, ZeroAmplitudeIsCalmIsa) {
    auto c = small_grid();
    c.wind_speed = 0.0;
    c.temp_amplitude = 0.0;
    const auto g = gen_forecast(c, 3);
    for (std::size_t it = 0; it < g.time.size(); ++it)
        for (std::size_t il = 0; il < g.level.size(); ++il)
            for (std::size_t la = 0; la < g.lat.size(); ++la)
                for (std::size_t lo = 0; lo < g.lon.size(); ++lo) {
                    const std::size_t k = g.index(it, il, la, lo);
                    ASSERT_EQ(g.u[k], 0.0);
                    ASSERT_EQ(g.v[k], 0.0);
                    // Temperatures are stored to 0.01 K.
                    ASSERT_NEAR(g.temperature[k], atm::isa_temperature(g.level[il]), 0.005 + 1e-9);
                }
}

TEST(Forecast, SameSeedIsBitIdentical) {
    const auto c = small_grid();
    const auto a = gen_forecast(c, 9), b = gen_forecast(c, 9), d = gen_forecast(c, 10);
    EXPECT_EQ(a.time, b.time);
    EXPECT_EQ(a.u, b.u);
    EXPECT_EQ(a.v, b.v);
    EXPECT_EQ(a.temperature, b.temperature);
    EXPECT_NE(a.u, d.u);
}

TEST(Forecast, ResolutionAndCalendar) {
    const auto c = small_grid();
    const auto g = gen_forecast(c, 1);
    for (std::size_t i = 1; i < g.lat.size(); ++i) EXPECT_NEAR(g.lat[i] - g.lat[i - 1], 0.11, 1e-12);
    for (std::size_t i = 1; i < g.lon.size(); ++i) EXPECT_NEAR(g.lon[i] - g.lon[i - 1], 0.11, 1e-12);
    // Eight three-hourly steps on each of five days in each of two months.
    ASSERT_EQ(g.time.size(), 80u);
    for (std::size_t i = 1; i < g.time.size(); ++i) {
        if (i % 8 != 0) {
            EXPECT_EQ(g.time[i] - g.time[i - 1], 10800.0);
        }
    }
    std::map<int, std::set<int>> days;
    for (const auto& d : selected_days(c, 1)) {
        days[d.month].insert(d.day);
        EXPECT_GE(d.day_of_week, 1);
        EXPECT_LE(d.day_of_week, 7);
    }
    EXPECT_EQ(days[3].size(), 5u);
    EXPECT_EQ(days[4].size(), 5u);
    // 1 March 2023 was a Wednesday.
    ScenarioConfig one = c;
    one.months = {3};
    one.days_per_month = 28;
    const auto all = selected_days(one, 1);
    EXPECT_EQ(all.front().day, 1);
    EXPECT_EQ(all.front().day_of_week, 3);
    EXPECT_EQ(all.front().start, 59.0 * 86400.0);
}

TEST(Forecast, MeanWindMagnitudeMatchesTarget) {
    const ScenarioConfig c;
    const auto& g = benchmark().forecast;
    double s = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) s += std::hypot(g.u[k], g.v[k]);
    const double mean = s / static_cast<double>(g.size());
    EXPECT_NEAR(mean, c.wind_speed, 0.1 * c.wind_speed);
}

TEST(Forecast, FileRoundTrip) {
    const auto g = gen_forecast(small_grid(), 4);
    std::stringstream ss;
    features::write_forecast(ss, g);
    const auto r = features::read_forecast(ss);
    EXPECT_EQ(r.lat, g.lat);
    EXPECT_EQ(r.time, g.time);
    EXPECT_EQ(r.u, g.u);
    EXPECT_EQ(r.temperature, g.temperature);
}

TEST(Dataset, QuietScenarioGivesIdenticalClimbs) {
    auto c = quiet();
    c.wind_speed = 0.0;
    c.temp_amplitude = 0.0;
    c.heading_sd = 0.0;
    c.fl_start_min = c.fl_start_max = 170.0;
    c.fl_max_min = c.fl_max_max = 330.0;
    c.step_climb_rate = 0.0;
    c.n_lat = c.n_lon = 40;
    c.months = {6};
    const auto d = gen_dataset(c, 40, 5);
    const auto& ref = d.trajectories.front().blips;
    for (const auto& t : d.trajectories) {
        ASSERT_EQ(t.blips.size(), ref.size()) << t.id;
        for (std::size_t i = 0; i < ref.size(); ++i) {
            EXPECT_EQ(t.blips[i].h, ref[i].h);
            EXPECT_EQ(t.blips[i].rocd, ref[i].rocd);
            EXPECT_EQ(t.blips[i].v_cas, ref[i].v_cas);
            EXPECT_EQ(t.blips[i].t - t.blips[0].t, ref[i].t - ref[0].t);
        }
    }
}

TEST(Dataset, SameSeedIsIdentical) {
    const auto c = small_grid();
    const auto a = gen_dataset(c, 15, 8), b = gen_dataset(c, 15, 8);
    for (std::size_t i = 0; i < a.trajectories.size(); ++i) {
        ASSERT_EQ(a.trajectories[i].blips.size(), b.trajectories[i].blips.size());
        for (std::size_t k = 0; k < a.trajectories[i].blips.size(); ++k) {
            EXPECT_EQ(a.trajectories[i].blips[k].h, b.trajectories[i].blips[k].h);
            EXPECT_EQ(a.trajectories[i].blips[k].lat, b.trajectories[i].blips[k].lat);
            EXPECT_EQ(a.trajectories[i].blips[k].v_cas, b.trajectories[i].blips[k].v_cas);
        }
    }
}

TEST(Dataset, ContextsAreConsistent) {
    for (const auto& t : benchmark().trajectories) {
        const auto& c = t.context;
        EXPECT_GE(c.fl_min, 150.0);
        EXPECT_DOUBLE_EQ(c.fl_range, c.fl_max - c.fl_min);
        EXPECT_GE(c.month_of_year, 1);
        EXPECT_LE(c.month_of_year, 12);
        EXPECT_GE(c.time_of_day, 0);
        EXPECT_LE(c.time_of_day, 23);
        for (const auto& b : t.blips) ASSERT_GE(b.h, 150.0 * atm::kMetresPerFlightLevel - 1e-9) << t.id;
    }
}

TEST(Dataset, FilterRemovesOnlyLevelOffs) {
    const auto& d = benchmark();
    for (std::size_t i = 0; i < d.trajectories.size(); ++i) {
        const auto& t = d.trajectories[i];
        const auto f = rom::filter_climb_blips(t);
        ASSERT_EQ(f.blips.size(), t.blips.size() - d.truth[i].level_off_blips) << t.id;
    }
}

TEST(Dataset, StepClimbRateGivesOneAndAHalfSubTrajectories) {
    const auto& d = benchmark();
    const auto flights = pipeline::prepare(d.trajectories, d.forecast, "");
    std::size_t subs = 0;
    for (const auto& f : flights) subs += f.subs.size();
    const double ratio = static_cast<double>(subs) / static_cast<double>(d.trajectories.size());
    EXPECT_NEAR(ratio, 1.5, 0.1);
    EXPECT_GT(ratio, 1.0);
}

TEST(Dataset, TailwindLowersCas) {
    const auto& d = benchmark();
    const auto flights = pipeline::prepare(d.trajectories, d.forecast, "");
    std::vector<double> wind, cas;
    for (const auto& f : flights) {
        for (std::size_t k = 0; k < f.subs.size(); ++k) {
            double s = 0.0;
            for (const auto& b : f.subs[k].blips) s += b.v_cas;
            wind.push_back(f.stats[k].wind_along_mean);
            cas.push_back(s / static_cast<double>(f.subs[k].blips.size()));
        }
    }
    const double r = correlation(wind, cas);
    EXPECT_LT(r, -0.3);
}

TEST(Dataset, NoiseFreeThrustRoundTrip) {
    const auto c = quiet();
    ScenarioConfig planted = ScenarioConfig{};
    planted.rocd_noise = planted.cas_noise = 0.0;
    for (const ScenarioConfig* cfg : std::vector<const ScenarioConfig*>{&c, &planted}) {
        const auto d = gen_dataset(*cfg, 60, 17);
        const auto p = perf::surrogate("B738");
        double worst = 0.0;
        for (std::size_t i = 0; i < d.trajectories.size(); ++i) {
            const auto& truth = d.truth[i];
            const auto aug = rom::infer_thrust(rom::filter_climb_blips(d.trajectories[i]), p,
                                               [&](double) { return truth.delta_t; });
            ASSERT_EQ(aug.n_dropped, 0u);
            const double t_start = d.trajectories[i].blips.front().t;
            for (std::size_t k = 0; k < aug.thrust.size(); ++k) {
                const auto& b = aug.trajectory.blips[k];
                std::size_t s = 0;
                while (s + 1 < truth.segments.size() && b.t - t_start >= truth.segments[s + 1].t0 - 1e-9) ++s;
                const double want = truth.segments[s].thrust(b.h, p);
                worst = std::max(worst, std::abs(aug.thrust[k] - want) / want);
            }
        }
        EXPECT_LT(worst, 1e-6);
    }
}

TEST(Dataset, BadConfigThrows) {
    ScenarioConfig c;
    c.rocd_noise = -1.0;
    EXPECT_THROW(gen_forecast(c, 1), std::invalid_argument);
    c = ScenarioConfig{};
    c.aircraft = {"DH8D"};
    c.n_lat = c.n_lon = 3;
    c.months = {1};
    EXPECT_THROW(gen_dataset(c, 1, 1), std::invalid_argument);
    EXPECT_THROW(gen_dataset(ScenarioConfig{}, 0, 1), std::invalid_argument);
}
