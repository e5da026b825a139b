// International Standard Atmosphere, airspeed conversions and the energy
// share factor of the total-energy climb equation.
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace piml::atmosphere {

// ============================================================================
// Constants
// ============================================================================

inline constexpr double kKappa = 1.4;              ///< adiabatic index of air
inline constexpr double kGasConstant = 287.05287;  ///< [J/(kg K)]
inline constexpr double kG0 = 9.80665;             ///< [m/s^2]
inline constexpr double kT0 = 288.15;              ///< sea-level ISA temperature [K]
inline constexpr double kP0 = 101325.0;            ///< sea-level ISA pressure [Pa]
inline constexpr double kRho0 = kP0 / (kGasConstant * kT0);
inline constexpr double kLapseRate = -0.0065;      ///< below tropopause [K/m]
inline constexpr double kTropopause = 11000.0;     ///< geopotential [m]
inline constexpr double kTTrop = kT0 + kLapseRate * kTropopause;  // 216.65 K
inline constexpr double kMinAltitude = -1000.0;
inline constexpr double kMaxAltitude = 25000.0;
inline constexpr double kMu = (kKappa - 1.0) / kKappa;

inline constexpr double kFeetPerMetre = 3.28084;
inline constexpr double kFtPerMinPerMps = kFeetPerMetre * 60.0;
inline constexpr double kMetresPerFlightLevel = 100.0 / kFeetPerMetre;

/// Thrown for inputs outside the model's physical validity.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct AtmosphereState {
    double altitude;        ///< geopotential [m]
    double temperature;     ///< [K]
    double pressure;        ///< [Pa]
    double density;         ///< [kg/m^3]
    double speed_of_sound;  ///< [m/s]
};

enum class SpeedRegime {
    ConstantCASBelowTropopause,
    ConstantCASAboveTropopause,
    ConstantMachBelowTropopause,
    ConstantMachAboveTropopause,
};

inline SpeedRegime select_regime(double h, bool constant_mach) {
    const bool above = h >= kTropopause;
    if (constant_mach) {
        return above ? SpeedRegime::ConstantMachAboveTropopause
                     : SpeedRegime::ConstantMachBelowTropopause;
    }
    return above ? SpeedRegime::ConstantCASAboveTropopause
                 : SpeedRegime::ConstantCASBelowTropopause;
}

// ============================================================================
// ISA
// ============================================================================

/// Pressure of the standard (delta_T = 0) profile. Temperature offsets do not
/// alter the pressure profile.
inline double isa_pressure(double h) {
    if (h < kTropopause) {
        const double ratio = (kT0 + kLapseRate * h) / kT0;
        return kP0 * std::pow(ratio, -kG0 / (kLapseRate * kGasConstant));
    }
    const double p_trop =
        kP0 * std::pow(kTTrop / kT0, -kG0 / (kLapseRate * kGasConstant));
    return p_trop * std::exp(-kG0 / (kGasConstant * kTTrop) * (h - kTropopause));
}

/// Standard-day temperature at altitude h (no offset).
inline double isa_temperature(double h) {
    return h < kTropopause ? kT0 + kLapseRate * h : kTTrop;
}

inline AtmosphereState isa_state(double h, double delta_t = 0.0) {
    if (!(h >= kMinAltitude && h <= kMaxAltitude)) {
        throw DomainError("isa_state: altitude " + std::to_string(h) +
                          " m outside [-1000, 25000]");
    }
    AtmosphereState s{};
    s.altitude = h;
    s.temperature = isa_temperature(h) + delta_t;
    if (!(s.temperature > 0.0)) {
        throw DomainError("isa_state: non-positive temperature");
    }
    s.pressure = isa_pressure(h);
    s.density = s.pressure / (kGasConstant * s.temperature);
    s.speed_of_sound = std::sqrt(kKappa * kGasConstant * s.temperature);
    return s;
}

// ============================================================================
// Airspeed conversions
// ============================================================================

enum class SpeedConversion { CasToTas, TasToCas };

/// Compressible CAS <-> TAS conversion through impact pressure, given an
/// already evaluated atmosphere state.
inline double cas_to_tas(double v_cas, const AtmosphereState& s) {
    if (!(v_cas > 0.0)) throw DomainError("cas_to_tas: speed must be positive");
    const double qc_term =
        std::pow(1.0 + kMu * kRho0 * v_cas * v_cas / (2.0 * kP0), 1.0 / kMu) - 1.0;
    const double inner = std::pow(1.0 + kP0 / s.pressure * qc_term, kMu) - 1.0;
    const double v_tas = std::sqrt(2.0 * s.pressure / (kMu * s.density) * inner);
    if (v_tas >= s.speed_of_sound) {
        throw DomainError("cas_to_tas: supersonic result outside validity");
    }
    return v_tas;
}

inline double tas_to_cas(double v_tas, const AtmosphereState& s) {
    if (!(v_tas > 0.0)) throw DomainError("tas_to_cas: speed must be positive");
    if (v_tas >= s.speed_of_sound) {
        throw DomainError("tas_to_cas: supersonic input outside validity");
    }
    const double qc_term =
        std::pow(1.0 + kMu * s.density * v_tas * v_tas / (2.0 * s.pressure), 1.0 / kMu) -
        1.0;
    const double inner = std::pow(1.0 + s.pressure / kP0 * qc_term, kMu) - 1.0;
    return std::sqrt(2.0 * kP0 / (kMu * kRho0) * inner);
}

inline double cas_tas_convert(double speed, double h, double delta_t,
                              SpeedConversion direction) {
    const AtmosphereState s = isa_state(h, delta_t);
    return direction == SpeedConversion::CasToTas ? cas_to_tas(speed, s)
                                                  : tas_to_cas(speed, s);
}

inline double mach(double v_tas, double h, double delta_t = 0.0) {
    if (v_tas < 0.0) throw DomainError("mach: negative speed");
    return v_tas / isa_state(h, delta_t).speed_of_sound;
}

// ============================================================================
// Energy share factor
// ============================================================================

/// Fraction of excess power spent on climbing for a given Mach number and
/// speed regime (standard total-energy closed forms, ISA lapse rate).
inline double energy_share_factor(double m, SpeedRegime regime) {
    if (!(m >= 0.0 && m < 1.0)) {
        throw DomainError("energy_share_factor: Mach must lie in [0, 1)");
    }
    const double lapse_term =
        kKappa * kGasConstant * kLapseRate / (2.0 * kG0) * m * m;
    const double base = 1.0 + 0.5 * (kKappa - 1.0) * m * m;
    const double compress_term =
        std::pow(base, -1.0 / (kKappa - 1.0)) *
        (std::pow(base, kKappa / (kKappa - 1.0)) - 1.0);
    switch (regime) {
        case SpeedRegime::ConstantMachAboveTropopause:
            return 1.0;
        case SpeedRegime::ConstantMachBelowTropopause:
            return 1.0 / (1.0 + lapse_term);
        case SpeedRegime::ConstantCASBelowTropopause:
            return 1.0 / (1.0 + lapse_term + compress_term);
        case SpeedRegime::ConstantCASAboveTropopause:
            return 1.0 / (1.0 + compress_term);
    }
    return 1.0;
}

}  // namespace piml::atmosphere
