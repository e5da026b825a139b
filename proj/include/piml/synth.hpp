// Synthetic ground truth: forecast fields and climb trajectories with planted
// feature effects, written in the same formats as observed data.
#pragma once

#include <piml/features.hpp>
#include <piml/perf.hpp>
#include <piml/prob.hpp>
#include <piml/trajectory.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace piml::synth {

namespace atm = piml::atmosphere;

/// A categorical level with its sampling weight and planted effects.
struct Category {
    std::string name;
    double weight = 1.0;
    double thrust_effect = 0.0;  ///< [N]
    double cas_effect = 0.0;     ///< [m/s]
};

struct Origin {
    std::string code;
    double lat = 0.0;
    double lon = 0.0;
    double weight = 1.0;
};

struct Intent {
    std::string code;
    double heading = 0.0;  ///< [deg]
    double weight = 1.0;
};

struct ScenarioConfig {
    std::vector<std::string> aircraft = {"B738"};
    std::vector<Category> operators = {
        {"BAW", 0.30, 400.0, 3.0},   {"EZY", 0.25, -300.0, -2.0}, {"RYR", 0.15, -500.0, -4.0},
        {"VIR", 0.10, 200.0, 1.0},   {"TOM", 0.08, 0.0, 0.0},     {"LOG", 0.06, 150.0, 2.0},
        {"AUR", 0.03, -100.0, -1.0}, {"JAA", 0.015, 0.0, 0.0},    {"KLX", 0.015, 0.0, 0.0},
    };
    std::vector<Origin> origins = {
        {"EGLL", 51.47, -0.45, 0.40}, {"EGKK", 51.15, -0.19, 0.25}, {"EGSS", 51.89, 0.24, 0.15},
        {"EGGW", 51.87, -0.37, 0.12}, {"EGLC", 51.50, 0.05, 0.08},
    };
    std::vector<Intent> intents = {
        {"BPK", 10.0, 0.15},  {"LAM", 60.0, 0.10},  {"DET", 100.0, 0.15}, {"DVR", 125.0, 0.15},
        {"MAY", 170.0, 0.10}, {"SAM", 220.0, 0.10}, {"CPT", 280.0, 0.15}, {"WOB", 330.0, 0.10},
    };
    std::vector<Category> flight_types = {
        {"domestic", 0.35, -500.0, 0.0}, {"superdomestic", 0.45, 0.0, 0.0}, {"longhaul", 0.20, 700.0, 0.0},
    };

    // Forecast grid
    double lat0 = 50.2;
    double lon0 = -1.5;
    int n_lat = 25;
    int n_lon = 25;
    double spacing = 0.11;  ///< [deg]
    std::vector<double> levels_fl = {140, 180, 220, 260, 300, 340, 380, 420};
    double time_step_h = 3.0;
    int year = 2023;
    std::vector<int> months = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
    int days_per_month = 5;
    double wind_speed = 25.0;        ///< grid-mean wind magnitude [m/s]
    double wind_variability = 0.3;   ///< relative magnitude modulation
    double wind_direction = 270.0;   ///< prevailing direction the wind blows from [deg]
    double wind_veer = 120.0;        ///< direction modulation amplitude [deg]
    double temp_amplitude = 4.0;     ///< [K]
    double temp_offset = 0.0;        ///< [K]

    // Flight profile
    double fl_start_min = 150.0, fl_start_max = 200.0;
    double fl_max_min = 260.0, fl_max_max = 370.0;
    double step_climb_rate = 0.5;
    double min_segment_fl = 30.0;
    double level_min_s = 60.0, level_max_s = 240.0;
    double radar_period = 6.0;  ///< [s]
    double heading_sd = 8.0;    ///< [deg]
    double min_rocd = 800.0;    ///< feasibility margin for the true profile [ft/min]

    // Thrust: factor * max climb thrust + planted effects + random modes
    double thrust_factor = 1.08;
    double thrust_fl_max_effect = 5000.0;  ///< [N] per standardised fl_max
    double fl_max_ref = 315.0, fl_max_scale = 32.0;
    std::array<double, 4> thrust_mode_sd = {1200.0, 1500.0, 2000.0, 800.0};  ///< offset, P1, P2, P3 [N]

    // CAS: target + planted effects + random offset/slope, capped at the transition Mach
    double cas_target = 150.0;       ///< [m/s]
    double cas_wind_effect = -0.35;  ///< CAS change per m/s of along-track wind
    double cas_offset_sd = 2.0;      ///< [m/s]
    double cas_slope_sd = 1.0;       ///< [m/s]

    // Measurement noise
    double rocd_noise = 50.0;  ///< [ft/min]
    double cas_noise = 2.0;    ///< [m/s]
};

inline void validate(const ScenarioConfig& c) {
    auto finite = [](double x) { return std::isfinite(x); };
    if (c.aircraft.empty() || c.operators.empty() || c.origins.empty() || c.intents.empty() ||
        c.flight_types.empty()) {
        throw std::invalid_argument("scenario: empty category list");
    }
    for (const auto& f : c.flight_types) flight_type_from_string(f.name);
    for (const auto& v : {c.operators, c.flight_types}) {
        for (const auto& k : v) {
            if (!finite(k.thrust_effect) || !finite(k.cas_effect) || !(k.weight > 0.0)) {
                throw std::invalid_argument("scenario: bad category '" + k.name + "'");
            }
        }
    }
    if (!(c.rocd_noise >= 0.0 && c.cas_noise >= 0.0 && c.cas_offset_sd >= 0.0 && c.cas_slope_sd >= 0.0)) {
        throw std::invalid_argument("scenario: noise scales must be non-negative");
    }
    for (double s : c.thrust_mode_sd) {
        if (!(s >= 0.0)) throw std::invalid_argument("scenario: thrust mode sd must be non-negative");
    }
    if (!finite(c.thrust_fl_max_effect) || !finite(c.cas_wind_effect) || !(c.fl_max_scale > 0.0)) {
        throw std::invalid_argument("scenario: effect sizes must be finite");
    }
    if (c.n_lat < 1 || c.n_lon < 1 || c.levels_fl.empty() || c.months.empty() || !(c.spacing > 0.0) ||
        !(c.time_step_h > 0.0)) {
        throw std::invalid_argument("scenario: empty forecast grid");
    }
    if (c.days_per_month < 1 || c.days_per_month > 28) {
        throw std::invalid_argument("scenario: days_per_month must lie in [1, 28]");
    }
    for (int m : c.months) {
        if (m < 1 || m > 12) throw std::invalid_argument("scenario: month outside 1..12");
    }
    if (!(150.0 <= c.fl_start_min && c.fl_start_min <= c.fl_start_max && c.fl_start_max < c.fl_max_min &&
          c.fl_max_min <= c.fl_max_max)) {
        throw std::invalid_argument("scenario: inconsistent flight level ranges");
    }
    if (!(c.radar_period > 0.0) || !(c.step_climb_rate >= 0.0 && c.step_climb_rate <= 1.0)) {
        throw std::invalid_argument("scenario: bad radar period or step-climb rate");
    }
}

namespace detail {

inline double uniform(std::mt19937_64& rng, double a, double b) {
    return a + (b - a) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

}  // namespace detail

// ============================================================================
// Calendar
// ============================================================================

struct Day {
    int month;
    int day;
    int day_of_week;  ///< 1 = Monday
    double start;     ///< seconds since 1 January of the scenario year
};

/// `days_per_month` distinct random days of every configured month.
inline std::vector<Day> selected_days(const ScenarioConfig& c, std::uint64_t seed) {
    using namespace std::chrono;
    std::mt19937_64 rng(prob::derive_seed(seed, 2));
    const sys_days jan1{year{c.year} / January / 1};
    std::vector<int> months = c.months;
    std::sort(months.begin(), months.end());
    months.erase(std::unique(months.begin(), months.end()), months.end());
    std::vector<Day> out;
    for (int m : months) {
        const year_month_day_last eom{year{c.year} / month{static_cast<unsigned>(m)} / std::chrono::last};
        std::vector<int> d(static_cast<unsigned>(eom.day()));
        std::iota(d.begin(), d.end(), 1);
        prob::shuffle(d, rng);
        d.resize(static_cast<std::size_t>(c.days_per_month));
        std::sort(d.begin(), d.end());
        for (int k : d) {
            const sys_days sd{year{c.year} / month{static_cast<unsigned>(m)} / day{static_cast<unsigned>(k)}};
            out.push_back({m, k, static_cast<int>(weekday{sd}.iso_encoding()),
                           static_cast<double>((sd - jan1).count()) * 86400.0});
        }
    }
    return out;
}

// ============================================================================
// Forecast
// ============================================================================

/// Sum of travelling plane waves with unit mean-square amplitude.
struct HarmonicField {
    struct Wave {
        double k_lat, k_lon, omega, phase, amp;
    };
    std::vector<Wave> waves;

    double operator()(double lat, double lon, double t) const {
        double s = 0.0;
        for (const auto& w : waves) s += w.amp * std::cos(w.k_lat * lat + w.k_lon * lon + w.omega * t + w.phase);
        return s;
    }

    static HarmonicField random(std::mt19937_64& rng, int n_waves = 4) {
        HarmonicField f;
        double ss = 0.0;
        for (int i = 0; i < n_waves; ++i) {
            const double kk = detail::uniform(rng, 0.4, 1.6), th = detail::uniform(rng, 0.0, 2.0 * M_PI);
            const double period = detail::uniform(rng, 0.8, 4.0) * 86400.0;
            const double a = 1.0 / (1.0 + i);
            f.waves.push_back({kk * std::cos(th), kk * std::sin(th), 2.0 * M_PI / period,
                               detail::uniform(rng, 0.0, 2.0 * M_PI), a});
            ss += 0.5 * a * a;
        }
        for (auto& w : f.waves) w.amp /= std::sqrt(ss);
        return f;
    }
};

// q must be 1/n; dividing by n keeps decimal quanta printable in shortest form.
inline double quantise(double x, double q) {
    const double n = std::round(1.0 / q);
    return std::round(x * n) / n;
}

/// Smooth random wind and temperature fields on the scenario grid, three-hourly
/// over the selected days. Values are quantised to 0.01 (m/s, K).
inline features::ForecastGrid gen_forecast(const ScenarioConfig& c, std::uint64_t seed) {
    validate(c);
    features::ForecastGrid g;
    for (int i = 0; i < c.n_lat; ++i) g.lat.push_back(quantise(c.lat0 + c.spacing * i, 1e-9));
    for (int i = 0; i < c.n_lon; ++i) g.lon.push_back(quantise(c.lon0 + c.spacing * i, 1e-9));
    std::vector<double> fl = c.levels_fl;
    std::sort(fl.begin(), fl.end());
    for (double l : fl) g.level.push_back(l * atm::kMetresPerFlightLevel);
    const int steps = static_cast<int>(std::floor(24.0 / c.time_step_h - 1e-9)) + 1;
    for (const auto& d : selected_days(c, seed)) {
        for (int k = 0; k < steps; ++k) g.time.push_back(d.start + k * c.time_step_h * 3600.0);
    }
    g.resize_fields();

    std::mt19937_64 rng(prob::derive_seed(seed, 1));
    const HarmonicField speed = HarmonicField::random(rng);
    const HarmonicField veer = HarmonicField::random(rng);
    const HarmonicField temp = HarmonicField::random(rng);
    // Wind strengthens with height; the level profile averages to one.
    std::vector<double> profile(g.level.size(), 1.0);
    if (g.level.size() > 1) {
        const double lo = g.level.front(), hi = g.level.back();
        for (std::size_t l = 0; l < g.level.size(); ++l) profile[l] = 0.6 + 0.8 * (g.level[l] - lo) / (hi - lo);
        const double m = std::accumulate(profile.begin(), profile.end(), 0.0) / static_cast<double>(profile.size());
        for (double& p : profile) p /= m;
    }
    const double from = c.wind_direction * M_PI / 180.0;
    for (std::size_t it = 0; it < g.time.size(); ++it) {
        for (std::size_t ila = 0; ila < g.lat.size(); ++ila) {
            for (std::size_t ilo = 0; ilo < g.lon.size(); ++ilo) {
                const double la = g.lat[ila], lo = g.lon[ilo], t = g.time[it];
                const double mag = c.wind_speed * std::max(0.0, 1.0 + c.wind_variability * speed(la, lo, t));
                const double dir = from + c.wind_veer * M_PI / 180.0 * veer(la, lo, t) / std::sqrt(2.0);
                const double dev = c.temp_offset + c.temp_amplitude * temp(la, lo, t);
                for (std::size_t il = 0; il < g.level.size(); ++il) {
                    const std::size_t k = g.index(it, il, ila, ilo);
                    // Blowing from `dir`: the vector points the opposite way.
                    g.u[k] = quantise(-mag * profile[il] * std::sin(dir), 0.01) + 0.0;
                    g.v[k] = quantise(-mag * profile[il] * std::cos(dir), 0.01) + 0.0;
                    g.temperature[k] = quantise(atm::isa_temperature(g.level[il]) + dev, 0.01);
                }
            }
        }
    }
    return g;
}

// ============================================================================
// Flights
// ============================================================================

inline constexpr double kMetresPerDegree = 111195.0;

/// Planted thrust and CAS laws of one climb segment.
struct SegmentTruth {
    double h0 = 0.0, h1 = 0.0;  ///< [m]
    double t0 = 0.0;            ///< start time relative to the first blip [s]
    double thrust_factor = 1.0;
    double thrust_offset = 0.0;           ///< planted effects plus random offset [N]
    std::array<double, 3> thrust_modes{};  ///< P1..P3 coefficients [N]
    double mode_lo = 0.0, mode_hi = 1.0;   ///< altitude range mapped to [-1, 1]
    double cas_level = 150.0;              ///< [m/s] below the Mach cap
    double cas_slope = 0.0;                ///< [m/s] over the mode range
    double wind_along = 0.0;               ///< along-track wind used for the CAS effect [m/s]

    double x(double h) const { return 2.0 * (h - mode_lo) / (mode_hi - mode_lo) - 1.0; }

    double thrust(double h, const perf::AircraftPerf& p) const {
        const double z = x(h);
        const double p2 = 0.5 * (3.0 * z * z - 1.0), p3 = 0.5 * (5.0 * z * z * z - 3.0 * z);
        return thrust_factor * perf::max_climb_thrust(h, p) + thrust_offset + thrust_modes[0] * z +
               thrust_modes[1] * p2 + thrust_modes[2] * p3;
    }

    double cas(double h, const perf::AircraftPerf& p, double delta_t) const {
        const auto s = atm::isa_state(h, delta_t);
        const double cap = atm::tas_to_cas(p.cas_mach_transition * s.speed_of_sound, s);
        return std::min(cas_level + cas_slope * x(h), cap);
    }
};

struct FlightTruth {
    std::string id;
    double delta_t = 0.0;  ///< ISA deviation flown [K]
    double heading = 0.0;
    std::vector<SegmentTruth> segments;
    double level_off_s = 0.0;  ///< 0 without a step climb
    std::size_t level_off_blips = 0;
};

struct Dataset {
    features::ForecastGrid forecast;
    std::vector<Trajectory> trajectories;
    std::vector<FlightTruth> truth;

    std::vector<RawContext> contexts() const {
        std::vector<RawContext> c;
        for (const auto& t : trajectories) c.push_back(t.context);
        return c;
    }
};

namespace detail {

template <class T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
    double total = 0.0;
    for (const auto& x : v) total += x.weight;
    double u = uniform(rng, 0.0, total);
    for (const auto& x : v) {
        if (u < x.weight) return x;
        u -= x.weight;
    }
    return v.back();
}

struct Segment {
    SegmentTruth truth;
    std::vector<perf::TrajectoryPoint> climb;
};

/// Altitude at time t along a climb, linear between integration nodes.
inline double altitude_at(const std::vector<perf::TrajectoryPoint>& c, double t) {
    if (t <= c.front().t) return c.front().h;
    if (t >= c.back().t) return c.back().h;
    const auto it = std::upper_bound(c.begin(), c.end(), t,
                                     [](double x, const perf::TrajectoryPoint& p) { return x < p.t; });
    const auto& b = *it;
    const auto& a = *(it - 1);
    return a.h + (t - a.t) / (b.t - a.t) * (b.h - a.h);
}

struct Flown {
    std::vector<Blip> blips;
    std::vector<std::size_t> segment_of;  ///< segment index, or npos on the level-off
};

inline constexpr std::size_t kLevel = static_cast<std::size_t>(-1);

/// Noise-free radar returns along the segments, with positions advanced by
/// ground speed through the forecast wind.
inline Flown fly_blips(const std::vector<Segment>& segs, const perf::AircraftPerf& p,
                       double delta_t, double heading, double lat, double lon, double t_start, double period,
                       const features::ForecastGrid& fc) {
    Flown out;
    const double th = heading * M_PI / 180.0;
    std::vector<double> seg_end;
    for (const auto& s : segs) seg_end.push_back(s.truth.t0 + s.climb.back().t);
    const double t_end = seg_end.back();
    for (long k = 0;; ++k) {
        const double t = static_cast<double>(k) * period;
        if (t > t_end + 1e-9) break;
        std::size_t si = kLevel;
        for (std::size_t j = 0; j < segs.size(); ++j) {
            if (t >= segs[j].truth.t0 - 1e-9 && t <= seg_end[j] + 1e-9) {
                si = j;
                break;
            }
        }
        Blip b{};
        b.t = t_start + t;
        b.heading = heading;
        b.lat = lat;
        b.lon = lon;
        double v_tas;
        if (si != kLevel) {
            const auto& s = segs[si];
            b.h = altitude_at(s.climb, t - s.truth.t0);
            b.v_cas = s.truth.cas(b.h, p, delta_t);
            const auto cs = perf::climb_state(p, b.h, s.truth.thrust(b.h, p), b.v_cas, delta_t);
            b.rocd = cs.rocd;
            v_tas = cs.v_tas;
        } else {
            b.h = segs.front().climb.back().h;
            b.v_cas = segs.front().truth.cas(b.h, p, delta_t);
            b.rocd = 0.0;
            v_tas = atm::cas_to_tas(b.v_cas, atm::isa_state(b.h, delta_t));
        }
        out.blips.push_back(b);
        out.segment_of.push_back(si);
        const auto w = features::sample_forecast(fc, lat, lon, b.h, b.t);
        const double east = v_tas * std::sin(th) + w.u, north = v_tas * std::cos(th) + w.v;
        lat += north * period / kMetresPerDegree;
        lon += east * period / (kMetresPerDegree * std::cos(lat * M_PI / 180.0));
    }
    return out;
}

/// Mean along-track wind over the blips of each segment (nearest-node sampling).
inline std::vector<double> segment_wind(const Flown& f, std::size_t n_seg, const features::ForecastGrid& fc) {
    std::vector<double> sum(n_seg, 0.0), cnt(n_seg, 0.0);
    for (std::size_t i = 0; i < f.blips.size(); ++i) {
        if (f.segment_of[i] == kLevel) continue;
        const auto& b = f.blips[i];
        const auto w = features::sample_forecast(fc, b.lat, b.lon, b.h, b.t);
        sum[f.segment_of[i]] += features::wind_components(w.u, w.v, b.heading).along;
        cnt[f.segment_of[i]] += 1.0;
    }
    for (std::size_t j = 0; j < n_seg; ++j) sum[j] = cnt[j] > 0.0 ? sum[j] / cnt[j] : 0.0;
    return sum;
}

inline double round_fl(double fl, double to) { return std::round(fl / to) * to; }

}  // namespace detail

/// One flight, deterministic in (config, seed, index).
inline std::pair<Trajectory, FlightTruth> gen_flight(const ScenarioConfig& c, const std::vector<Day>& days,
                                                      const features::ForecastGrid& fc, std::uint64_t seed,
                                                      std::size_t index) {
    using detail::uniform;
    std::mt19937_64 rng(prob::derive_seed(seed, 1000 + index));
    char id[32];
    std::snprintf(id, sizeof id, "F%06zu", index + 1);

    Trajectory tr;
    tr.id = id;
    tr.aircraft_type = c.aircraft[static_cast<std::size_t>(rng() % c.aircraft.size())];
    const perf::AircraftPerf p = perf::surrogate(tr.aircraft_type);
    if (p.engine != perf::EngineType::Jet) {
        throw std::invalid_argument("synth: only jet surrogates are supported, got " + tr.aircraft_type);
    }
    const double thrust_scale = p.thrust_c1 / perf::surrogate("B738").thrust_c1;

    const Category& op = detail::pick(c.operators, rng);
    const Origin& org = detail::pick(c.origins, rng);
    const Intent& intent = detail::pick(c.intents, rng);
    const Category& ft = detail::pick(c.flight_types, rng);
    const Day& day = days[static_cast<std::size_t>(rng() % days.size())];
    const int hour = 6 + static_cast<int>(rng() % 15);
    const double t_start = day.start + hour * 3600.0 + uniform(rng, 0.0, 3600.0);

    prob::Normal z(rng());
    double heading = std::fmod(intent.heading + c.heading_sd * z() + 360.0, 360.0);
    if (heading >= 360.0) heading -= 360.0;

    RawContext& ctx = tr.context;
    ctx.operator_code = op.name;
    ctx.origin = org.code;
    ctx.intent_code = intent.code;
    ctx.flight_type = flight_type_from_string(ft.name);
    ctx.month_of_year = day.month;
    ctx.day_of_week = day.day_of_week;
    ctx.time_of_day = hour;

    // Vertical profile: start, cruise and an optional intermediate level-off.
    const double fl0 = uniform(rng, c.fl_start_min, c.fl_start_max);
    double fl_top = detail::round_fl(uniform(rng, c.fl_max_min, c.fl_max_max), 10.0);
    fl_top = std::clamp(fl_top, c.fl_max_min, c.fl_max_max);
    std::vector<double> tops;
    const bool step = uniform(rng, 0.0, 1.0) < c.step_climb_rate && fl_top - fl0 >= 2.0 * c.min_segment_fl;
    double level_s = 0.0;
    if (step) {
        double fl_l = uniform(rng, fl0 + c.min_segment_fl, fl_top - c.min_segment_fl);
        const double r = detail::round_fl(fl_l, 10.0);
        if (r >= fl0 + c.min_segment_fl && r <= fl_top - c.min_segment_fl) fl_l = r;
        tops.push_back(fl_l);
        level_s = uniform(rng, c.level_min_s, c.level_max_s);
    }
    tops.push_back(fl_top);
    ctx.fl_min = fl0;
    ctx.fl_max = fl_top;
    ctx.fl_range = fl_top - fl0;

    // Start position: the aircraft has already flown out of the terminal area.
    const double th = heading * M_PI / 180.0;
    const double lat0 = org.lat + 40000.0 * std::cos(th) / kMetresPerDegree;
    const double lon0 = org.lon + 40000.0 * std::sin(th) / (kMetresPerDegree * std::cos(org.lat * M_PI / 180.0));
    const double mid_h = 0.5 * (fl0 + fl_top) * atm::kMetresPerFlightLevel;
    const auto s0 = features::sample_forecast(fc, lat0, lon0, mid_h, t_start);
    const double delta_t = s0.temperature - atm::isa_temperature(fc.level[features::nearest(fc.level, mid_h).index]);

    const double mode_lo = 150.0 * atm::kMetresPerFlightLevel;
    const double mode_hi = std::max(410.0, c.fl_max_max + 10.0) * atm::kMetresPerFlightLevel;

    FlightTruth truth;
    truth.id = tr.id;
    truth.delta_t = delta_t;
    truth.heading = heading;

    for (int attempt = 0;; ++attempt) {
        if (attempt == 200) throw std::runtime_error("synth: no feasible profile for flight " + tr.id);
        std::array<double, 4> m{};
        for (int k = 0; k < 4; ++k) m[static_cast<std::size_t>(k)] = c.thrust_mode_sd[static_cast<std::size_t>(k)] * thrust_scale * z();
        const double cas_off = c.cas_offset_sd * z(), cas_slope = c.cas_slope_sd * z();

        std::vector<detail::Segment> segs;
        double h_lo = fl0 * atm::kMetresPerFlightLevel;
        for (double top : tops) {
            SegmentTruth s;
            s.h0 = h_lo;
            s.h1 = top * atm::kMetresPerFlightLevel;
            s.thrust_factor = c.thrust_factor;
            s.thrust_offset = thrust_scale * (c.thrust_fl_max_effect * (top - c.fl_max_ref) / c.fl_max_scale +
                                              op.thrust_effect + ft.thrust_effect) + m[0];
            s.thrust_modes = {m[1], m[2], m[3]};
            s.mode_lo = mode_lo;
            s.mode_hi = mode_hi;
            s.cas_level = c.cas_target + op.cas_effect + ft.cas_effect + cas_off;
            s.cas_slope = cas_slope;
            segs.push_back({s, {}});
            h_lo = s.h1;
        }

        // Two passes: the wind effect needs the track, the track needs the speed.
        bool ok = true;
        detail::Flown flown;
        for (int pass = 0; pass < 2 && ok; ++pass) {
            double t0 = 0.0;
            for (std::size_t j = 0; j < segs.size() && ok; ++j) {
                auto& s = segs[j];
                s.truth.t0 = t0;
                try {
                    const SegmentTruth st = s.truth;
                    s.climb = perf::integrate_climb(
                        p, [&](double h) { return st.thrust(h, p); }, [&](double h) { return st.cas(h, p, delta_t); },
                        st.h0, st.h1, delta_t);
                } catch (const std::exception&) {
                    ok = false;
                    break;
                }
                for (const auto& q : s.climb) ok = ok && q.rocd >= c.min_rocd;
                // The level-off starts on the next radar return after reaching the level.
                t0 = t0 + s.climb.back().t;
                if (j == 0 && segs.size() > 1) {
                    t0 = std::ceil(t0 / c.radar_period) * c.radar_period + level_s;
                    t0 = std::ceil(t0 / c.radar_period - 1e-9) * c.radar_period;
                }
            }
            if (!ok) break;
            flown = detail::fly_blips(segs, p, delta_t, heading, lat0, lon0, t_start, c.radar_period, fc);
            if (pass == 0) {
                const auto along = detail::segment_wind(flown, segs.size(), fc);
                for (std::size_t j = 0; j < segs.size(); ++j) {
                    segs[j].truth.wind_along = along[j];
                    segs[j].truth.cas_level += c.cas_wind_effect * along[j];
                }
            }
        }
        if (!ok) continue;

        tr.blips = std::move(flown.blips);
        truth.segments.clear();
        for (const auto& s : segs) truth.segments.push_back(s.truth);
        truth.level_off_s = segs.size() > 1 ? segs[1].truth.t0 - (segs[0].truth.t0 + segs[0].climb.back().t) : 0.0;
        truth.level_off_blips = static_cast<std::size_t>(
            std::count(flown.segment_of.begin(), flown.segment_of.end(), detail::kLevel));
        break;
    }

    for (auto& b : tr.blips) {
        if (c.rocd_noise > 0.0) b.rocd += c.rocd_noise * z();
        if (c.cas_noise > 0.0) b.v_cas += c.cas_noise * z();
    }
    return {std::move(tr), std::move(truth)};
}

/// Forecast plus n flights.
inline Dataset gen_dataset(const ScenarioConfig& c, std::size_t n_flights, std::uint64_t seed) {
    if (n_flights < 1) throw std::invalid_argument("gen_dataset: n_flights must be >= 1");
    Dataset d;
    d.forecast = gen_forecast(c, seed);
    const auto days = selected_days(c, seed);
    for (std::size_t i = 0; i < n_flights; ++i) {
        auto [t, truth] = gen_flight(c, days, d.forecast, seed, i);
        d.trajectories.push_back(std::move(t));
        d.truth.push_back(std::move(truth));
    }
    return d;
}

}  // namespace piml::synth
