// Observational data types shared by the reduced-order, feature and
// synthetic-data modules.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace piml {

/// One radar return.
struct Blip {
    double t;        ///< [s]
    double h;        ///< [m]
    double rocd;     ///< [ft/min]
    double v_cas;    ///< [m/s]
    double heading;  ///< [deg from north]
    double lat;      ///< [deg]
    double lon;      ///< [deg]
};

enum class FlightType { Domestic, Superdomestic, Longhaul };

inline std::string to_string(FlightType f) {
    switch (f) {
        case FlightType::Domestic: return "domestic";
        case FlightType::Superdomestic: return "superdomestic";
        case FlightType::Longhaul: return "longhaul";
    }
    return "domestic";
}

inline FlightType flight_type_from_string(const std::string& s) {
    if (s == "domestic") return FlightType::Domestic;
    if (s == "superdomestic") return FlightType::Superdomestic;
    if (s == "longhaul") return FlightType::Longhaul;
    throw std::invalid_argument("unknown flight type '" + s + "'");
}

/// Operational context of a flight (or of one of its climbs).
struct RawContext {
    std::string operator_code;
    std::string origin;
    std::string intent_code;
    FlightType flight_type = FlightType::Domestic;
    int month_of_year = 1;  ///< 1..12
    int day_of_week = 1;    ///< 1..7
    int time_of_day = 0;    ///< hour 0..23
    double fl_min = 150.0;
    double fl_max = 150.0;
    double fl_range = 0.0;
};

struct Trajectory {
    std::string id;
    std::string aircraft_type;
    std::vector<Blip> blips;
    RawContext context;
};

/// Trajectory with the thrust inferred at each retained blip.
struct AugmentedTrajectory {
    Trajectory trajectory;
    std::vector<double> thrust;   ///< [N], one per blip
    std::size_t n_dropped = 0;    ///< blips whose inference failed
};

/// Contiguous climbing slice with uniform radar cadence.
struct SubTrajectory {
    std::string parent_id;
    std::size_t index = 0;  ///< position within the parent
    std::string aircraft_type;
    std::vector<Blip> blips;
    std::vector<double> thrust;
    double h_min = 0.0;
    double h_max = 0.0;
    RawContext context;  ///< parent context with flight levels of this slice

    std::string id() const { return parent_id + "#" + std::to_string(index); }
};

}  // namespace piml
