// Data preparation shared by the command-line tool and the benchmark:
// filtering, thrust inference, sub-trajectory split, met statistics,
// flight-level train/test split and projection onto a basis.
#pragma once

#include <piml/features.hpp>
#include <piml/metrics.hpp>
#include <piml/models.hpp>
#include <piml/rom.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

namespace piml::pipeline {

namespace atm = piml::atmosphere;

struct PrepOptions {
    double refresh_s = 0.0;  ///< radar period; 0 = median blip gap of each trajectory
    rom::SplitOptions split;
};

/// One trajectory after preparation. The ISA deviation is the forecast
/// temperature deviation averaged over the climbing blips.
struct PreparedFlight {
    AugmentedTrajectory aug;
    double delta_t = 0.0;
    std::vector<SubTrajectory> subs;
    std::vector<features::MetStats> stats;  ///< one per sub-trajectory
};

struct PrepSummary {
    std::size_t trajectories = 0;
    std::size_t no_climb = 0;        ///< nothing left after the climb filter
    std::size_t blips_filtered = 0;  ///< below the minimum climb rate
    std::size_t blips_dropped = 0;   ///< thrust inference undefined
    std::size_t no_subtrajectory = 0;
    std::size_t subtrajectories = 0;
};

inline double median_gap(const std::vector<Blip>& blips) {
    std::vector<double> g;
    for (std::size_t i = 1; i < blips.size(); ++i) g.push_back(blips[i].t - blips[i - 1].t);
    if (g.empty()) return 0.0;
    std::nth_element(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(g.size() / 2), g.end());
    return g[g.size() / 2];
}

inline std::optional<PreparedFlight> prepare_flight(const Trajectory& raw, const perf::AircraftPerf& p,
                                                    const features::ForecastGrid& fc, const PrepOptions& opt,
                                                    PrepSummary* sum = nullptr) {
    PrepSummary local;
    PrepSummary& s = sum ? *sum : local;
    ++s.trajectories;
    if (raw.blips.empty()) {
        ++s.no_climb;
        return std::nullopt;
    }
    Trajectory climb;
    try {
        climb = rom::filter_climb_blips(raw);
    } catch (const rom::EmptyAfterFilter&) {
        ++s.no_climb;
        return std::nullopt;
    }
    s.blips_filtered += raw.blips.size() - climb.blips.size();
    PreparedFlight f;
    f.delta_t = climb.blips.size() >= 2 ? features::met_stats(climb.blips, fc).temp_dev_mean : 0.0;
    const double dt = f.delta_t;
    f.aug = rom::infer_thrust(climb, p, [dt](double) { return dt; });
    s.blips_dropped += f.aug.n_dropped;
    const double period = opt.refresh_s > 0.0 ? opt.refresh_s : median_gap(raw.blips);
    if (period > 0.0) f.subs = rom::split_subtrajectories(f.aug, period, opt.split);
    if (f.subs.empty()) {
        ++s.no_subtrajectory;
        return std::nullopt;
    }
    for (const auto& sub : f.subs) f.stats.push_back(features::met_stats(sub, fc));
    s.subtrajectories += f.subs.size();
    return f;
}

/// Prepares every trajectory of `type` (all types when empty).
inline std::vector<PreparedFlight> prepare(const std::vector<Trajectory>& trajs, const features::ForecastGrid& fc,
                                           const std::string& type, const PrepOptions& opt = {},
                                           PrepSummary* sum = nullptr) {
    std::vector<PreparedFlight> out;
    std::map<std::string, perf::AircraftPerf> perfs;
    for (const auto& t : trajs) {
        if (!type.empty() && t.aircraft_type != type) continue;
        auto it = perfs.find(t.aircraft_type);
        if (it == perfs.end()) it = perfs.emplace(t.aircraft_type, perf::surrogate(t.aircraft_type)).first;
        if (auto f = prepare_flight(t, it->second, fc, opt, sum)) out.push_back(std::move(*f));
    }
    return out;
}

/// Deterministic flight-level split: a shuffled order of the ids, the first
/// `train_fraction` of which train.
inline std::vector<bool> train_mask(const std::vector<PreparedFlight>& flights, double train_fraction,
                                    std::uint64_t seed) {
    std::vector<std::size_t> order(flights.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return flights[a].aug.trajectory.id < flights[b].aug.trajectory.id;
    });
    std::mt19937_64 rng(prob::derive_seed(seed, 11));
    prob::shuffle(order, rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(flights.size())));
    std::vector<bool> mask(flights.size(), false);
    for (std::size_t k = 0; k < n_train && k < order.size(); ++k) mask[order[k]] = true;
    return mask;
}

/// Widest grid in whole multiples of `step_fl` flight levels whose end nodes
/// are covered by at least `min_count` trajectories.
inline std::pair<double, double> covered_span(const std::vector<AugmentedTrajectory>& augs, double step_fl = 10.0,
                                              std::size_t min_count = 10) {
    std::vector<double> lo, hi;
    for (const auto& a : augs) {
        if (a.trajectory.blips.empty()) continue;
        double l = a.trajectory.blips.front().h, h = l;
        for (const auto& b : a.trajectory.blips) {
            l = std::min(l, b.h);
            h = std::max(h, b.h);
        }
        lo.push_back(l);
        hi.push_back(h);
    }
    if (lo.size() < min_count || min_count == 0) throw rom::InsufficientData("covered_span: too few trajectories");
    std::sort(lo.begin(), lo.end());
    std::sort(hi.begin(), hi.end(), std::greater<>());
    const double step = step_fl * atm::kMetresPerFlightLevel;
    const double a = std::ceil(lo[min_count - 1] / step - 1e-9) * step;
    const double b = std::floor(hi[min_count - 1] / step + 1e-9) * step;
    if (!(b > a)) throw rom::InsufficientData("covered_span: no common altitude band");
    return {a, b};
}

struct BasisOptions {
    double h_lo = 0.0, h_hi = 0.0;  ///< 0, 0 = covered span
    double step = perf::kDefaultStep;
    rom::FitBasisOptions fit;
};

inline rom::BasisSet fit_basis(const std::vector<PreparedFlight>& flights, const std::vector<bool>& use,
                               const BasisOptions& opt = {}) {
    std::vector<AugmentedTrajectory> augs;
    for (std::size_t i = 0; i < flights.size(); ++i) {
        if (use.empty() || use[i]) augs.push_back(flights[i].aug);
    }
    double lo = opt.h_lo, hi = opt.h_hi;
    if (!(hi > lo)) std::tie(lo, hi) = covered_span(augs);
    return rom::fit_basis(augs, rom::make_grid(lo, hi, opt.step), opt.fit);
}

/// Rows of the selected flights projected onto `basis`. Sub-trajectories that
/// cover fewer than two grid nodes are skipped and counted.
inline std::vector<metrics::TestRow> make_rows(const std::vector<PreparedFlight>& flights, const std::vector<bool>& use,
                                               bool value, const rom::BasisSet& basis, std::size_t* skipped = nullptr) {
    std::vector<metrics::TestRow> rows;
    for (std::size_t i = 0; i < flights.size(); ++i) {
        if (!use.empty() && use[i] != value) continue;
        const auto& f = flights[i];
        for (std::size_t k = 0; k < f.subs.size(); ++k) {
            metrics::TestRow r;
            try {
                r.row.weights = rom::project(f.subs[k], basis);
            } catch (const rom::SpanTooShort&) {
                if (skipped) ++*skipped;
                continue;
            }
            r.row.id = f.subs[k].id();
            r.row.context = f.subs[k].context;
            r.row.stats = f.stats[k];
            r.delta_t = f.delta_t;
            rows.push_back(std::move(r));
        }
    }
    return rows;
}

inline std::vector<models::Row> model_rows(const std::vector<metrics::TestRow>& rows) {
    std::vector<models::Row> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.row);
    return out;
}

/// One-hot design matrix and leading coefficients for the importance study.
struct FIDesign {
    Eigen::MatrixXd X;
    Eigen::MatrixXd Y;  ///< columns: alpha_1, beta_1
    std::vector<std::string> columns;
    std::vector<std::string> groups;
    std::vector<std::string> targets = {"alpha_1", "beta_1"};
};

inline FIDesign fi_design(const std::vector<models::Row>& rows, double other_threshold = 0.02) {
    if (rows.empty()) throw std::invalid_argument("fi_design: no rows");
    features::EncoderOptions eo;
    eo.categorical = features::CategoricalEncoding::OneHot;
    eo.standardise = true;
    eo.other_threshold = other_threshold;
    const auto er = models::encoder_rows(rows);
    const auto enc = features::fit_encoder(er, eo);
    FIDesign d;
    d.X = features::encode_inference(er, enc);
    d.columns = features::feature_names(enc);
    d.groups = features::feature_groups(enc);
    d.Y.resize(static_cast<Eigen::Index>(rows.size()), 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& w = rows[i].weights;
        if (w.alpha.size() == 0 || w.beta.size() == 0) throw std::invalid_argument("fi_design: empty weight vector");
        d.Y(static_cast<Eigen::Index>(i), 0) = w.alpha[0];
        d.Y(static_cast<Eigen::Index>(i), 1) = w.beta[0];
    }
    return d;
}

}  // namespace piml::pipeline
