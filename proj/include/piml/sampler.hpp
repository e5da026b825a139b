// Probabilistic trajectory generation: weight samples are rebuilt into thrust
// and CAS functions, flown through the climb integrator and screened against
// the minimum climb rate.
#pragma once

#include <piml/perf.hpp>
#include <piml/prob.hpp>
#include <piml/rom.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace piml::sampler {

namespace atm = piml::atmosphere;

using Climb = std::vector<perf::TrajectoryPoint>;

class AllRejected : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TooFewSamples : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct GenerationResult {
    std::vector<Climb> accepted;
    std::vector<int> accepted_index;  ///< sample index of each accepted climb
    Eigen::MatrixXd weights;          ///< every drawn sample, one per row
    int n_requested = 0;
    int n_rejected = 0;
    double rejection_rate = 0.0;  ///< [%]
    double h0 = 0.0;
    double h1 = 0.0;
};

struct GenerateOptions {
    double delta_t = 0.0;  ///< ISA temperature deviation [K]
    double min_rocd = rom::kMinClimbRate;
    double step = perf::kDefaultStep;
};

/// Flies one weight sample. Returns an empty climb if it is rejected.
inline Climb fly(const Eigen::Ref<const Eigen::VectorXd>& y, const rom::BasisSet& basis,
                 const perf::AircraftPerf& perf, double h0, double h1, const GenerateOptions& opt = {}) {
    const auto curves = rom::reconstruct(rom::WeightVector::from_stacked(y, basis.n_alpha(), h0, h1), basis);
    Climb c;
    try {
        c = perf::integrate_climb(perf, curves.thrust_fn(), curves.cas_fn(), h0, h1, opt.delta_t, opt.step);
    } catch (const perf::IntegrationStall&) {
        return {};
    } catch (const atm::DomainError&) {
        return {};
    }
    for (const auto& p : c)
        if (!(p.rocd >= opt.min_rocd) || !std::isfinite(p.t)) return {};
    return c;
}

/// Screens and flies the given weight samples (rows of Y).
inline GenerationResult generate(const Eigen::MatrixXd& Y, const rom::BasisSet& basis,
                                 const perf::AircraftPerf& perf, double h0, double h1,
                                 const GenerateOptions& opt = {}) {
    if (!(h0 < h1)) throw std::invalid_argument("generate: h0 must be below h1");
    if (Y.cols() != basis.n_y()) throw std::invalid_argument("generate: weight dimension mismatch");
    GenerationResult r;
    r.weights = Y;
    r.h0 = h0;
    r.h1 = h1;
    r.n_requested = static_cast<int>(Y.rows());
    for (Eigen::Index i = 0; i < Y.rows(); ++i) {
        Climb c = fly(Y.row(i).transpose(), basis, perf, h0, h1, opt);
        if (c.empty()) {
            ++r.n_rejected;
            continue;
        }
        r.accepted.push_back(std::move(c));
        r.accepted_index.push_back(static_cast<int>(i));
    }
    r.rejection_rate = r.n_requested > 0 ? 100.0 * r.n_rejected / r.n_requested : 0.0;
    if (r.accepted.empty()) {
        std::ostringstream os;
        os << "generate: all " << r.n_requested << " samples rejected between " << h0 << " m and " << h1
           << " m (minimum climb rate " << opt.min_rocd << " ft/min)";
        throw AllRejected(os.str());
    }
    return r;
}

inline GenerationResult generate(const prob::PredictiveDistribution& d, const rom::BasisSet& basis,
                                 const perf::AircraftPerf& perf, double h0, double h1, int n,
                                 std::uint64_t seed, const GenerateOptions& opt = {}) {
    return generate(prob::sample_y(d, n, seed), basis, perf, h0, h1, opt);
}

inline GenerationResult generate(const prob::GaussianBaseline& b, const rom::BasisSet& basis,
                                 const perf::AircraftPerf& perf, double h0, double h1, int n,
                                 std::uint64_t seed, const GenerateOptions& opt = {}) {
    return generate(prob::sample_y(b, n, seed), basis, perf, h0, h1, opt);
}

// ============================================================================
// Credible bands
// ============================================================================

/// Empirical percentile with linear interpolation between order statistics.
inline double percentile(std::vector<double> v, double p) {
    if (v.empty()) throw std::invalid_argument("percentile: empty sample");
    std::sort(v.begin(), v.end());
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct Band {
    double lo = 0.0, median = 0.0, hi = 0.0;
};

struct CredibleBands {
    std::vector<double> levels;  ///< [m]
    std::vector<Band> time;      ///< [s]
    std::vector<Band> cas;       ///< [m/s]
};

/// Time and CAS at altitude h along a climb, linear between nodes.
inline std::pair<double, double> crossing(const Climb& c, double h) {
    auto it = std::lower_bound(c.begin(), c.end(), h,
                               [](const perf::TrajectoryPoint& p, double v) { return p.h < v; });
    if (it == c.end()) --it;
    if (it == c.begin() || it->h == h) return {it->t, it->v_cas};
    const auto& a = *(it - 1);
    const auto& b = *it;
    const double f = (h - a.h) / (b.h - a.h);
    return {a.t + f * (b.t - a.t), a.v_cas + f * (b.v_cas - a.v_cas)};
}

inline constexpr std::size_t kMinBandSamples = 20;

/// 95% bands of crossing time and CAS every `fl_step` flight levels from h0.
inline CredibleBands credible_bands(const GenerationResult& r, double fl_step = 10.0) {
    if (r.accepted.size() < kMinBandSamples) {
        throw TooFewSamples("credible_bands: need at least 20 accepted trajectories, have " +
                            std::to_string(r.accepted.size()));
    }
    const double dh = fl_step * atm::kMetresPerFlightLevel;
    CredibleBands b;
    for (int k = 0;; ++k) {
        const double h = r.h0 + k * dh;
        if (h > r.h1 + 1e-9) break;
        std::vector<double> ts, vs;
        for (const auto& c : r.accepted) {
            const auto [t, v] = crossing(c, h);
            ts.push_back(t);
            vs.push_back(v);
        }
        b.levels.push_back(h);
        b.time.push_back({percentile(ts, 0.025), percentile(ts, 0.5), percentile(ts, 0.975)});
        b.cas.push_back({percentile(vs, 0.025), percentile(vs, 0.5), percentile(vs, 0.975)});
    }
    return b;
}

// ============================================================================
// Tabular export
// ============================================================================

inline void write_ensemble_csv(std::ostream& os, const GenerationResult& r) {
    os << "sample,t_s,h_m,cas_mps,rocd_ftmin\n";
    char buf[160];
    for (std::size_t k = 0; k < r.accepted.size(); ++k) {
        for (const auto& p : r.accepted[k]) {
            std::snprintf(buf, sizeof buf, "%d,%.6f,%.3f,%.4f,%.3f\n", r.accepted_index[k], p.t, p.h,
                          p.v_cas, p.rocd);
            os << buf;
        }
    }
}

inline void write_bands_csv(std::ostream& os, const CredibleBands& b) {
    os << "flight_level,time_lo_s,time_median_s,time_hi_s,cas_lo_mps,cas_median_mps,cas_hi_mps\n";
    char buf[200];
    for (std::size_t i = 0; i < b.levels.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.1f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f\n",
                      b.levels[i] / atm::kMetresPerFlightLevel, b.time[i].lo, b.time[i].median,
                      b.time[i].hi, b.cas[i].lo, b.cas[i].median, b.cas[i].hi);
        os << buf;
    }
}

}  // namespace piml::sampler
