// Point-mass total-energy performance model: thrust and drag laws, rate of
// climb and altitude-stepped climb integration.
#pragma once

#include <piml/atmosphere.hpp>

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace piml::perf {

namespace atm = piml::atmosphere;

enum class EngineType { Jet, Turboprop };

inline std::string to_string(EngineType e) { return e == EngineType::Jet ? "Jet" : "Turboprop"; }

inline EngineType engine_from_string(const std::string& s) {
    if (s == "Jet") return EngineType::Jet;
    if (s == "Turboprop") return EngineType::Turboprop;
    throw std::invalid_argument("unknown engine type '" + s + "'");
}

/// Per-type performance parameters.
///
/// Jet:       T_max(h) = c1 (1 - h/c2 + c3 h^2)        c1 [N], c2 [m], c3 [1/m^2]
/// Turboprop: T_max(h, V) = c1 / V (1 - h/c2) + c3     c1 [W], c2 [m], c3 [N]
struct AircraftPerf {
    std::string type_code;
    double mass = 0.0;       ///< [kg]
    double wing_area = 0.0;  ///< [m^2]
    double cd0 = 0.0;
    double induced_k = 0.0;
    double thrust_c1 = 0.0;
    double thrust_c2 = 0.0;
    double thrust_c3 = 0.0;
    EngineType engine = EngineType::Jet;
    double cas_mach_transition = 0.78;
    double service_ceiling = 12500.0;  ///< [m]
};

struct TrajectoryPoint {
    double t;      ///< [s]
    double h;      ///< [m]
    double rocd;   ///< [ft/min]
    double v_cas;  ///< [m/s]
    double v_tas;  ///< [m/s]
    double mach;
};

/// Raised when the climb cannot progress: non-positive rate of climb.
class IntegrationStall : public std::runtime_error {
public:
    explicit IntegrationStall(double altitude)
        : std::runtime_error("climb stalls at " + std::to_string(altitude) + " m"),
          altitude_(altitude) {}
    double altitude() const noexcept { return altitude_; }

private:
    double altitude_;
};

using ScalarFn = std::function<double(double)>;

// ============================================================================
// Thrust, drag, ROCD
// ============================================================================

/// Maximum climb thrust. Turboprop types need the true airspeed.
inline double max_climb_thrust(double h, const AircraftPerf& perf, double v_tas = 0.0) {
    if (h < 0.0 || h > perf.service_ceiling) {
        throw atm::DomainError("max_climb_thrust: altitude outside [0, service ceiling]");
    }
    if (perf.engine == EngineType::Jet) {
        return perf.thrust_c1 * (1.0 - h / perf.thrust_c2 + perf.thrust_c3 * h * h);
    }
    if (!(v_tas > 0.0)) {
        throw atm::DomainError("max_climb_thrust: turboprop surrogate needs v_tas > 0");
    }
    return perf.thrust_c1 / v_tas * (1.0 - h / perf.thrust_c2) + perf.thrust_c3;
}

inline void validate(const AircraftPerf& p) {
    if (!(p.mass > 0 && p.wing_area > 0 && p.cd0 > 0 && p.induced_k > 0 && p.thrust_c1 > 0)) {
        throw std::invalid_argument("AircraftPerf '" + p.type_code + "': non-positive coefficient");
    }
    if (!(p.cas_mach_transition > 0 && p.cas_mach_transition < 1)) {
        throw std::invalid_argument("AircraftPerf '" + p.type_code + "': bad transition Mach");
    }
    // Reference speed for the power-limited law: the transition Mach at altitude.
    for (double h = 0.0; h <= p.service_ceiling; h += 50.0) {
        const double v = p.cas_mach_transition * atm::isa_state(h).speed_of_sound;
        if (!(max_climb_thrust(h, p, v) > 0.0)) {
            throw std::invalid_argument("AircraftPerf '" + p.type_code +
                                        "': non-positive thrust below ceiling");
        }
    }
}

struct DragBreakdown {
    double parasitic;
    double induced;
    double total() const { return parasitic + induced; }
};

inline DragBreakdown drag_terms(double density, double v_tas, const AircraftPerf& perf) {
    const double qs = 0.5 * density * v_tas * v_tas * perf.wing_area;
    const double cl = perf.mass * atm::kG0 / qs;
    return {qs * perf.cd0, qs * perf.induced_k * cl * cl};
}

/// Drag polar with level-flight lift coefficient.
inline double drag(double h, double v_tas, const AircraftPerf& perf, double delta_t = 0.0) {
    if (!(v_tas > 0.0)) throw atm::DomainError("drag: v_tas must be positive");
    return drag_terms(atm::isa_state(h, delta_t).density, v_tas, perf).total();
}

/// Rate of climb [ft/min]; the temperature correction prefactor is 1.
inline double rocd(double h, double t_hr, double v_tas, const AircraftPerf& perf,
                   atm::SpeedRegime regime, double delta_t = 0.0) {
    if (!(v_tas > 0.0)) throw atm::DomainError("rocd: v_tas must be positive");
    const atm::AtmosphereState s = atm::isa_state(h, delta_t);
    const double d = drag_terms(s.density, v_tas, perf).total();
    const double f = atm::energy_share_factor(v_tas / s.speed_of_sound, regime);
    return (t_hr - d) * v_tas / (perf.mass * atm::kG0) * f * atm::kFtPerMinPerMps;
}

// ============================================================================
// Climb integration
// ============================================================================

struct ClimbState {
    double v_tas;
    double mach;
    atm::SpeedRegime regime;
    double rocd;  ///< [ft/min]
};

/// Local state given the commanded CAS. Above the transition Mach the
/// constant-Mach law applies.
inline ClimbState climb_state(const AircraftPerf& perf, double h, double thrust,
                              double v_cas, double delta_t) {
    const atm::AtmosphereState s = atm::isa_state(h, delta_t);
    ClimbState c{};
    c.v_tas = atm::cas_to_tas(v_cas, s);
    c.mach = c.v_tas / s.speed_of_sound;
    c.regime = atm::select_regime(h, c.mach >= perf.cas_mach_transition - 1e-6);
    const double d = drag_terms(s.density, c.v_tas, perf).total();
    const double f = atm::energy_share_factor(c.mach, c.regime);
    c.rocd = (thrust - d) * c.v_tas / (perf.mass * atm::kG0) * f * atm::kFtPerMinPerMps;
    return c;
}

inline constexpr double kDefaultStep = 100.0 / atm::kFeetPerMetre;  // 100 ft

/// Altitude-stepped integration of dt = dh / rocd with the midpoint rule.
/// Nodes sit at h0 + k*step with the last node at h1 exactly. A step that
/// crosses a speed-regime boundary is split at the boundary (located by
/// bisection) so the energy share factor jump does not spoil convergence.
inline std::vector<TrajectoryPoint> integrate_climb(const AircraftPerf& perf,
                                                    const ScalarFn& thrust_fn,
                                                    const ScalarFn& cas_fn, double h0,
                                                    double h1, double delta_t = 0.0,
                                                    double step = kDefaultStep) {
    if (!(h0 <= h1)) throw std::invalid_argument("integrate_climb: h0 must not exceed h1");
    if (h1 > perf.service_ceiling + 1e-9) {
        throw atm::DomainError("integrate_climb: h1 above service ceiling");
    }
    if (!(step > 0.0)) throw std::invalid_argument("integrate_climb: step must be positive");

    auto state_at = [&](double h) {
        const ClimbState c = climb_state(perf, h, thrust_fn(h), cas_fn(h), delta_t);
        if (!(c.rocd > 0.0)) throw IntegrationStall(h);
        return c;
    };
    auto midpoint_dt = [&](double ha, double hb) {
        const ClimbState mid = state_at(0.5 * (ha + hb));
        return (hb - ha) / (mid.rocd / atm::kFtPerMinPerMps);
    };

    std::vector<TrajectoryPoint> out;
    const auto n_steps = static_cast<std::size_t>(std::ceil((h1 - h0) / step - 1e-9));
    out.reserve(n_steps + 1);
    ClimbState prev = state_at(h0);
    out.push_back({0.0, h0, prev.rocd, cas_fn(h0), prev.v_tas, prev.mach});
    double t = 0.0;
    for (std::size_t k = 1; k <= n_steps; ++k) {
        const double ha = out.back().h;
        const double hb = (k == n_steps) ? h1 : h0 + static_cast<double>(k) * step;
        const ClimbState next = state_at(hb);
        if (next.regime == prev.regime) {
            t += midpoint_dt(ha, hb);
        } else {
            double lo = ha, hi = hb;
            for (int it = 0; it < 40; ++it) {
                const double mid = 0.5 * (lo + hi);
                const auto r = climb_state(perf, mid, thrust_fn(mid), cas_fn(mid), delta_t).regime;
                (r == prev.regime ? lo : hi) = mid;
            }
            const double hs = 0.5 * (lo + hi);
            t += midpoint_dt(ha, hs) + midpoint_dt(hs, hb);
        }
        out.push_back({t, hb, next.rocd, cas_fn(hb), next.v_tas, next.mach});
        prev = next;
    }
    return out;
}

// ============================================================================
// Surrogate parameter sets and the performance parameter file
// ============================================================================

/// Documented surrogate coefficients (public-domain approximations, not
/// licensed tables).
inline std::vector<AircraftPerf> surrogate_fleet() {
    return {
        {"B738", 65300.0, 124.65, 0.025452, 0.035815, 146590.0, 16420.1856, 3.27793e-10,
         EngineType::Jet, 0.78, 12497.0},
        {"A320", 64000.0, 122.6, 0.024, 0.0375, 136000.0, 15922.0, 6.78e-10,
         EngineType::Jet, 0.78, 12131.0},
        {"E190", 43000.0, 92.5, 0.023, 0.045, 100000.0, 15500.0, 4.0e-10,
         EngineType::Jet, 0.75, 12497.0},
        {"DH8D", 26000.0, 63.08, 0.027, 0.037, 6.0e6, 15000.0, 3000.0,
         EngineType::Turboprop, 0.55, 7620.0},
    };
}

inline AircraftPerf surrogate(const std::string& type_code) {
    for (const auto& p : surrogate_fleet()) {
        if (p.type_code == type_code) return p;
    }
    throw std::invalid_argument("no surrogate performance set for '" + type_code + "'");
}

inline constexpr const char* kPerfFileHeader = "# piml-perf v1";

inline std::string format_perf_file(const std::vector<AircraftPerf>& fleet) {
    std::ostringstream os;
    os.precision(17);
    os << kPerfFileHeader << '\n'
       << "# type_code mass wing_area cd0 induced_k thrust_c1 thrust_c2 thrust_c3 engine "
          "cas_mach_transition service_ceiling\n";
    for (const auto& p : fleet) {
        os << p.type_code << ' ' << p.mass << ' ' << p.wing_area << ' ' << p.cd0 << ' '
           << p.induced_k << ' ' << p.thrust_c1 << ' ' << p.thrust_c2 << ' ' << p.thrust_c3
           << ' ' << to_string(p.engine) << ' ' << p.cas_mach_transition << ' '
           << p.service_ceiling << '\n';
    }
    return os.str();
}

inline std::vector<AircraftPerf> parse_perf_file(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kPerfFileHeader) {
        throw std::runtime_error("performance file: missing '" + std::string(kPerfFileHeader) +
                                 "' header");
    }
    std::vector<AircraftPerf> fleet;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        AircraftPerf p;
        std::string engine;
        if (!(is >> p.type_code >> p.mass >> p.wing_area >> p.cd0 >> p.induced_k >>
              p.thrust_c1 >> p.thrust_c2 >> p.thrust_c3 >> engine >> p.cas_mach_transition >>
              p.service_ceiling)) {
            throw std::runtime_error("performance file: malformed record '" + line + "'");
        }
        p.engine = engine_from_string(engine);
        validate(p);
        fleet.push_back(p);
    }
    return fleet;
}

inline std::vector<AircraftPerf> load_perf_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open performance file " + path);
    return parse_perf_file(in);
}

}  // namespace piml::perf
