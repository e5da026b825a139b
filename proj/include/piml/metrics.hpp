// Forecast verification: empirical CRPS, skill scores and the six-metric
// suite (time to climb, mean climb rate, mean CAS; each as RMSE and CRPS).
#pragma once

#include <piml/models.hpp>
#include <piml/sampler.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace piml::metrics {

namespace atm = piml::atmosphere;

/// CRPS of the empirical CDF of `samples` against the observation tau.
inline double crps_empirical(std::vector<double> x, double tau) {
    if (x.empty()) throw std::invalid_argument("crps_empirical: no samples");
    std::sort(x.begin(), x.end());
    const auto n = static_cast<double>(x.size());
    double abs_err = 0.0, spread = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        abs_err += std::abs(x[i] - tau);
        // sum_{i,j} |x_i - x_j| = 2 sum_i (2i - n + 1) x_(i) over sorted values
        spread += (2.0 * static_cast<double>(i) - n + 1.0) * x[i];
    }
    const double s = abs_err / n - spread / (n * n);
    return s > 0.0 ? s : 0.0;
}

/// S = 1 - sum(model) / sum(baseline).
inline double skill_score(const std::vector<double>& model, const std::vector<double>& baseline) {
    if (model.size() != baseline.size() || model.empty()) {
        throw std::invalid_argument("skill_score: score lists must be non-empty and of equal length");
    }
    const double m = std::accumulate(model.begin(), model.end(), 0.0);
    const double b = std::accumulate(baseline.begin(), baseline.end(), 0.0);
    if (b == 0.0) throw std::invalid_argument("skill_score: baseline scores sum to zero");
    return 1.0 - m / b;
}

/// Skill on root-mean-square aggregates of per-row squared errors.
inline double rmse_skill(const std::vector<double>& model_sq, const std::vector<double>& baseline_sq) {
    if (model_sq.size() != baseline_sq.size() || model_sq.empty()) {
        throw std::invalid_argument("rmse_skill: score lists must be non-empty and of equal length");
    }
    const double m = std::accumulate(model_sq.begin(), model_sq.end(), 0.0);
    const double b = std::accumulate(baseline_sq.begin(), baseline_sq.end(), 0.0);
    if (b == 0.0) throw std::invalid_argument("rmse_skill: baseline error is zero");
    return 1.0 - std::sqrt(m / b);
}

// ============================================================================
// Climb quantities
// ============================================================================

enum Quantity { kTime = 0, kRoc = 1, kCas = 2 };
inline constexpr int kNumQuantities = 3;

inline const std::array<std::string, kNumQuantities>& quantity_names() {
    static const std::array<std::string, kNumQuantities> n = {"time", "roc", "cas"};
    return n;
}

/// Time to climb [s], mean climb rate [ft/min] and time-weighted mean CAS [m/s].
inline std::array<double, kNumQuantities> climb_quantities(const sampler::Climb& c) {
    if (c.size() < 2) throw std::invalid_argument("climb_quantities: need at least two nodes");
    const double T = c.back().t - c.front().t;
    const double dh = c.back().h - c.front().h;
    double cas_int = 0.0;
    for (std::size_t i = 1; i < c.size(); ++i) cas_int += 0.5 * (c[i].v_cas + c[i - 1].v_cas) * (c[i].t - c[i - 1].t);
    return {T, dh * atm::kFeetPerMetre / (T / 60.0), cas_int / T};
}

// ============================================================================
// Evaluation suite
// ============================================================================

struct TestRow {
    models::Row row;
    double delta_t = 0.0;  ///< ISA deviation flown [K]
};

struct ModelScores {
    std::string name;
    std::array<double, kNumQuantities> rmse{};
    std::array<double, kNumQuantities> crps{};         ///< summed over rows
    std::array<double, kNumQuantities> rmse_skill{};
    std::array<double, kNumQuantities> crps_skill{};
    long n_requested = 0;
    long n_rejected = 0;
    int rows_all_rejected = 0;  ///< rows where every sample was rejected

    double rejection_rate() const { return n_requested ? 100.0 * n_rejected / n_requested : 0.0; }
    double mean_skill() const {
        double s = 0.0;
        for (int q = 0; q < kNumQuantities; ++q) s += rmse_skill[q] + crps_skill[q];
        return s / (2.0 * kNumQuantities);
    }
};

struct RowResult {
    std::string id;
    std::array<double, kNumQuantities> observed{};
    std::vector<std::array<double, kNumQuantities>> ensemble_mean;  ///< per model
    std::vector<std::array<double, kNumQuantities>> crps;           ///< per model
};

struct MetricReport {
    std::string aircraft_type;
    std::vector<ModelScores> models;  ///< first entry is the reference
    std::vector<RowResult> rows;      ///< rows used in the aggregates
    int rows_excluded = 0;            ///< any model rejected all samples
    int rows_unobservable = 0;        ///< the observation itself cannot be flown
};

struct NamedModel {
    std::string name;
    const models::Model* model;
};

struct SuiteOptions {
    int n_samples = 500;
    std::uint64_t seed = 0;
    double step = perf::kDefaultStep;
    /// Called with every generation result (model name, row id).
    std::function<void(const std::string&, const std::string&, const sampler::GenerationResult&)> on_generation;
};

inline std::uint64_t id_hash(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

/// Scores every model on the test rows; the first model is the reference for
/// skill. Sampling seeds depend on the row id only, so results are invariant
/// to row order and identical model objects score identically.
inline MetricReport evaluate_suite(const std::vector<NamedModel>& ms, const std::vector<TestRow>& test,
                                   const rom::BasisSet& basis, const perf::AircraftPerf& perf,
                                   const SuiteOptions& opt = {}) {
    if (ms.empty()) throw std::invalid_argument("evaluate_suite: no models");
    if (test.empty()) throw std::invalid_argument("evaluate_suite: empty test set");
    MetricReport rep;
    rep.aircraft_type = basis.aircraft_type;
    const std::size_t nm = ms.size();
    for (const auto& m : ms) rep.models.push_back({m.name});

    std::vector<TestRow> order = test;
    std::sort(order.begin(), order.end(), [](const TestRow& a, const TestRow& b) { return a.row.id < b.row.id; });

    std::vector<std::array<std::vector<double>, kNumQuantities>> sq(nm), cr(nm);
    for (const auto& tr : order) {
        const auto& w = tr.row.weights;
        sampler::GenerateOptions go;
        go.delta_t = tr.delta_t;
        go.step = opt.step;
        const sampler::Climb obs_climb = sampler::fly(w.stacked(), basis, perf, w.h_min, w.h_max, go);
        if (obs_climb.size() < 2) {
            ++rep.rows_unobservable;
            continue;
        }
        RowResult rr;
        rr.id = tr.row.id;
        rr.observed = climb_quantities(obs_climb);
        const std::uint64_t seed = prob::derive_seed(opt.seed, id_hash(tr.row.id));
        bool excluded = false;
        for (std::size_t k = 0; k < nm; ++k) {
            const Eigen::MatrixXd Y =
                models::sample(*ms[k].model, tr.row.context, tr.row.stats, opt.n_samples, seed);
            auto& sc = rep.models[k];
            sc.n_requested += opt.n_samples;
            sampler::GenerationResult g;
            try {
                g = sampler::generate(Y, basis, perf, w.h_min, w.h_max, go);
            } catch (const sampler::AllRejected&) {
                sc.n_rejected += opt.n_samples;
                ++sc.rows_all_rejected;
                excluded = true;
                continue;
            }
            sc.n_rejected += g.n_rejected;
            if (opt.on_generation) opt.on_generation(ms[k].name, tr.row.id, g);
            if (excluded) continue;
            std::array<std::vector<double>, kNumQuantities> draws;
            for (const auto& c : g.accepted) {
                const auto q = climb_quantities(c);
                for (int j = 0; j < kNumQuantities; ++j) draws[j].push_back(q[j]);
            }
            std::array<double, kNumQuantities> mean{}, crps{};
            for (int j = 0; j < kNumQuantities; ++j) {
                mean[j] = std::accumulate(draws[j].begin(), draws[j].end(), 0.0) / static_cast<double>(draws[j].size());
                crps[j] = crps_empirical(draws[j], rr.observed[j]);
            }
            rr.ensemble_mean.push_back(mean);
            rr.crps.push_back(crps);
        }
        if (excluded) {
            ++rep.rows_excluded;
            continue;
        }
        for (std::size_t k = 0; k < nm; ++k) {
            for (int j = 0; j < kNumQuantities; ++j) {
                const double e = rr.ensemble_mean[k][j] - rr.observed[j];
                sq[k][j].push_back(e * e);
                cr[k][j].push_back(rr.crps[k][j]);
            }
        }
        rep.rows.push_back(std::move(rr));
    }
    if (rep.rows.empty()) throw std::runtime_error("evaluate_suite: no test row could be scored");

    for (std::size_t k = 0; k < nm; ++k) {
        auto& sc = rep.models[k];
        for (int j = 0; j < kNumQuantities; ++j) {
            const double n = static_cast<double>(sq[k][j].size());
            sc.rmse[j] = std::sqrt(std::accumulate(sq[k][j].begin(), sq[k][j].end(), 0.0) / n);
            sc.crps[j] = std::accumulate(cr[k][j].begin(), cr[k][j].end(), 0.0);
            sc.rmse_skill[j] = rmse_skill(sq[k][j], sq[0][j]);
            sc.crps_skill[j] = skill_score(cr[k][j], cr[0][j]);
        }
    }
    return rep;
}

// ============================================================================
// Tabular export
// ============================================================================

/// One line per (model, metric): aggregate score and skill against the reference.
inline void write_report_csv(std::ostream& os, const MetricReport& r) {
    os << "aircraft,model,metric,score,skill\n";
    char buf[256];
    for (const auto& m : r.models) {
        for (int kind = 0; kind < 2; ++kind) {
            for (int j = 0; j < kNumQuantities; ++j) {
                const double score = kind == 0 ? m.rmse[j] : m.crps[j];
                const double skill = kind == 0 ? m.rmse_skill[j] : m.crps_skill[j];
                std::snprintf(buf, sizeof buf, "%s,%s,%s_%s,%.9g,%.9g\n", r.aircraft_type.c_str(), m.name.c_str(),
                              quantity_names()[static_cast<std::size_t>(j)].c_str(), kind == 0 ? "rmse" : "crps",
                              score, skill);
                os << buf;
            }
        }
    }
}

inline void write_rejection_csv(std::ostream& os, const MetricReport& r) {
    os << "aircraft,model,requested,rejected,rejection_rate_pct,rows_all_rejected\n";
    char buf[256];
    for (const auto& m : r.models) {
        std::snprintf(buf, sizeof buf, "%s,%s,%ld,%ld,%.6f,%d\n", r.aircraft_type.c_str(), m.name.c_str(),
                      m.n_requested, m.n_rejected, m.rejection_rate(), m.rows_all_rejected);
        os << buf;
    }
}

/// Per-row observations, ensemble means and CRPS of every model.
inline void write_rows_csv(std::ostream& os, const MetricReport& r) {
    os << "id,model,quantity,observed,ensemble_mean,crps\n";
    char buf[256];
    for (const auto& row : r.rows) {
        for (std::size_t k = 0; k < r.models.size(); ++k) {
            for (int j = 0; j < kNumQuantities; ++j) {
                std::snprintf(buf, sizeof buf, "%s,%s,%s,%.9g,%.9g,%.9g\n", row.id.c_str(), r.models[k].name.c_str(),
                              quantity_names()[static_cast<std::size_t>(j)].c_str(), row.observed[j],
                              row.ensemble_mean[k][j], row.crps[k][j]);
                os << buf;
            }
        }
    }
}

}  // namespace piml::metrics
