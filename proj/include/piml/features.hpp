// Contextual features: forecast sampling, wind decomposition, met statistics
// along a sub-trajectory, and the categorical / cyclic / numeric encoders that
// turn a context into the model input vector.
#pragma once

#include <piml/atmosphere.hpp>
#include <piml/trajectory.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace piml::features {

namespace atm = piml::atmosphere;

// ============================================================================
// Forecast grid
// ============================================================================

/// Gridded forecast of wind (u east, v north) and temperature. Values are
/// stored with lon varying fastest, then lat, level and time.
struct ForecastGrid {
    std::vector<double> lat;    ///< [deg]
    std::vector<double> lon;    ///< [deg]
    std::vector<double> level;  ///< altitude [m]
    std::vector<double> time;   ///< [s]
    std::vector<double> u;      ///< [m/s]
    std::vector<double> v;      ///< [m/s]
    std::vector<double> temperature;  ///< [K]

    std::size_t size() const { return lat.size() * lon.size() * level.size() * time.size(); }
    std::size_t index(std::size_t it, std::size_t il, std::size_t ila, std::size_t ilo) const {
        return ((it * level.size() + il) * lat.size() + ila) * lon.size() + ilo;
    }
    void resize_fields() {
        u.assign(size(), 0.0);
        v.assign(size(), 0.0);
        temperature.assign(size(), 0.0);
    }
};

inline void validate(const ForecastGrid& g) {
    auto check_axis = [](const std::vector<double>& a, const char* name) {
        if (a.empty()) throw std::invalid_argument(std::string("forecast grid: empty axis ") + name);
        for (std::size_t i = 1; i < a.size(); ++i) {
            if (!(a[i] > a[i - 1])) {
                throw std::invalid_argument(std::string("forecast grid: axis ") + name +
                                            " not strictly increasing");
            }
        }
    };
    check_axis(g.lat, "lat");
    check_axis(g.lon, "lon");
    check_axis(g.level, "level");
    check_axis(g.time, "time");
    if (g.u.size() != g.size() || g.v.size() != g.size() || g.temperature.size() != g.size()) {
        throw std::invalid_argument("forecast grid: field size does not match the axes");
    }
}

struct NearestIndex {
    std::size_t index;
    bool clamped;
};

/// Nearest node of an increasing axis. Exact midpoints go to the lower index.
inline NearestIndex nearest(const std::vector<double>& axis, double x) {
    if (x <= axis.front()) return {0, x < axis.front()};
    if (x >= axis.back()) return {axis.size() - 1, x > axis.back()};
    const auto hi = static_cast<std::size_t>(std::lower_bound(axis.begin(), axis.end(), x) -
                                             axis.begin());
    const std::size_t lo = hi - 1;
    return {(x - axis[lo] <= axis[hi] - x) ? lo : hi, false};
}

struct ForecastSample {
    double u;
    double v;
    double temperature;
    bool clamped;  ///< query fell outside the grid hull on some axis
};

/// Zero-order (nearest-neighbour) interpolation on all four axes.
inline ForecastSample sample_forecast(const ForecastGrid& g, double lat, double lon, double h,
                                      double t) {
    if (g.size() == 0 || g.u.size() != g.size()) {
        throw std::invalid_argument("sample_forecast: empty grid");
    }
    const auto ila = nearest(g.lat, lat);
    const auto ilo = nearest(g.lon, lon);
    const auto il = nearest(g.level, h);
    const auto it = nearest(g.time, t);
    const std::size_t k = g.index(it.index, il.index, ila.index, ilo.index);
    return {g.u[k], g.v[k], g.temperature[k],
            ila.clamped || ilo.clamped || il.clamped || it.clamped};
}

struct WindComponents {
    double along;  ///< tailwind positive [m/s]
    double cross;  ///< positive toward the left of track [m/s]
};

inline WindComponents wind_components(double u, double v, double heading_deg) {
    const double th = heading_deg * M_PI / 180.0;
    const double s = std::sin(th), c = std::cos(th);
    return {u * s + v * c, v * s - u * c};
}

// ============================================================================
// Met statistics
// ============================================================================

struct MetStats {
    double wind_magnitude_time_grad = 0.0;  ///< [(m/s)/s]
    double wind_along_mean = 0.0;           ///< [m/s]
    double wind_along_time_grad = 0.0;      ///< [(m/s)/s]
    double temp_dev_mean = 0.0;             ///< [K]
    double temp_dev_std = 0.0;              ///< [K]
    double temp_dev_time_grad = 0.0;        ///< [K/s]
};

/// Ordinary least-squares slope of y against t.
inline double ols_slope(const std::vector<double>& t, const std::vector<double>& y) {
    const auto n = static_cast<double>(t.size());
    const double tm = std::accumulate(t.begin(), t.end(), 0.0) / n;
    const double ym = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sty = 0.0, stt = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        sty += (t[i] - tm) * (y[i] - ym);
        stt += (t[i] - tm) * (t[i] - tm);
    }
    if (!(stt > 0.0)) throw std::invalid_argument("ols_slope: all samples at one time");
    return sty / stt;
}

inline MetStats met_stats(const std::vector<Blip>& blips, const ForecastGrid& g) {
    if (blips.size() < 2) throw std::invalid_argument("met_stats: need at least 2 blips");
    std::vector<double> t, mag, along, dev;
    for (const Blip& b : blips) {
        const ForecastSample s = sample_forecast(g, b.lat, b.lon, b.h, b.t);
        t.push_back(b.t);
        mag.push_back(std::hypot(s.u, s.v));
        along.push_back(wind_components(s.u, s.v, b.heading).along);
        dev.push_back(s.temperature - atm::isa_temperature(b.h));
    }
    const auto n = static_cast<double>(t.size());
    MetStats m;
    m.wind_magnitude_time_grad = ols_slope(t, mag);
    m.wind_along_mean = std::accumulate(along.begin(), along.end(), 0.0) / n;
    m.wind_along_time_grad = ols_slope(t, along);
    m.temp_dev_mean = std::accumulate(dev.begin(), dev.end(), 0.0) / n;
    double ss = 0.0;
    for (double d : dev) ss += (d - m.temp_dev_mean) * (d - m.temp_dev_mean);
    m.temp_dev_std = std::sqrt(ss / n);
    m.temp_dev_time_grad = ols_slope(t, dev);
    return m;
}

inline MetStats met_stats(const SubTrajectory& sub, const ForecastGrid& g) {
    return met_stats(sub.blips, g);
}

// ============================================================================
// Forecast grid file
// ============================================================================

inline constexpr const char* kForecastHeader = "# piml-forecast v1";

namespace detail {
/// Shortest decimal form that reads back to the same double.
inline std::string fmt(double x) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}
}  // namespace detail

/// `comments` become "# ..." lines between the header and the axes.
inline void write_forecast(std::ostream& os, const ForecastGrid& g, const std::vector<std::string>& comments = {}) {
    validate(g);
    os << kForecastHeader << '\n';
    for (const auto& c : comments) os << "# " << c << '\n';
    auto axis = [&](const char* name, const std::vector<double>& a) {
        os << name << ' ' << a.size();
        for (double x : a) os << ' ' << detail::fmt(x);
        os << '\n';
    };
    axis("lat", g.lat);
    axis("lon", g.lon);
    axis("level", g.level);
    axis("time", g.time);
    for (std::size_t k = 0; k < g.size(); ++k) {
        os << detail::fmt(g.u[k]) << ' ' << detail::fmt(g.v[k]) << ' '
           << detail::fmt(g.temperature[k]) << '\n';
    }
}

inline ForecastGrid read_forecast(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kForecastHeader) {
        throw std::runtime_error("forecast file: missing header");
    }
    while (is.peek() == '#') std::getline(is, line);
    ForecastGrid g;
    for (auto* a : {&g.lat, &g.lon, &g.level, &g.time}) {
        std::string name;
        std::size_t n = 0;
        if (!(is >> name >> n)) throw std::runtime_error("forecast file: bad axis line");
        a->resize(n);
        for (double& x : *a)
            if (!(is >> x)) throw std::runtime_error("forecast file: truncated axis " + name);
    }
    g.resize_fields();
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (!(is >> g.u[k] >> g.v[k] >> g.temperature[k])) {
            throw std::runtime_error("forecast file: truncated field records");
        }
    }
    validate(g);
    return g;
}

// ============================================================================
// Encoding
// ============================================================================

enum class CategoricalEncoding { Target, OneHot };

struct EncoderOptions {
    CategoricalEncoding categorical = CategoricalEncoding::Target;
    bool standardise = true;
    int folds = 3;
    double other_threshold = 0.02;  ///< fraction of rows below which a category is 'other'
    std::uint64_t seed = 0;
};

inline constexpr const char* kOtherLabel = "other";
inline constexpr int kNumCategoricals = 4;
inline constexpr int kNumNumeric = 9;

inline const std::vector<std::string>& categorical_names() {
    static const std::vector<std::string> n = {"operator", "origin", "intent_code", "flight_type"};
    return n;
}

inline const std::vector<std::string>& numeric_names() {
    static const std::vector<std::string> n = {
        "fl_min",          "fl_max",        "fl_range",
        "wind_magnitude_time_grad", "wind_along_mean", "wind_along_time_grad",
        "temp_dev_mean",   "temp_dev_std",  "temp_dev_time_grad"};
    return n;
}

inline std::string categorical_value(const RawContext& c, int k) {
    switch (k) {
        case 0: return c.operator_code;
        case 1: return c.origin;
        case 2: return c.intent_code;
        default: return to_string(c.flight_type);
    }
}

inline std::array<double, kNumNumeric> numeric_values(const RawContext& c, const MetStats& m) {
    return {c.fl_min,          c.fl_max,           c.fl_range,
            m.wind_magnitude_time_grad, m.wind_along_mean, m.wind_along_time_grad,
            m.temp_dev_mean,   m.temp_dev_std,     m.temp_dev_time_grad};
}

struct EncoderRow {
    RawContext context;
    MetStats stats;
    std::vector<double> target;  ///< target-encoding target (may be empty for one-hot)
};

using CategoryTable = std::map<std::string, std::vector<double>>;

struct EncoderState {
    EncoderOptions options;
    std::size_t n_targets = 0;
    std::array<std::vector<std::string>, kNumCategoricals> vocab;  ///< sorted, excludes 'other'
    std::vector<double> prior;                                     ///< full-data target mean
    std::vector<double> target_mean;                               ///< standardisation of encoded targets
    std::vector<double> target_scale;
    std::array<CategoryTable, kNumCategoricals> table;             ///< full-data means
    std::vector<int> fold_of;                                      ///< per training row
    std::vector<std::vector<double>> fold_prior;                   ///< out-of-fold prior
    std::vector<std::array<CategoryTable, kNumCategoricals>> fold_table;
    std::array<double, kNumNumeric> mean{};
    std::array<double, kNumNumeric> scale{};
    std::array<std::map<std::string, int>, kNumCategoricals> seen_rare;  ///< rare category counts

    /// Vocabulary bucket of a raw category: itself, 'other', or empty if unseen.
    std::string bucket(int k, const std::string& value) const {
        const auto& v = vocab[static_cast<std::size_t>(k)];
        if (std::binary_search(v.begin(), v.end(), value)) return value;
        return seen_rare[static_cast<std::size_t>(k)].count(value) ? kOtherLabel : "";
    }
};

inline std::vector<std::string> feature_names(const EncoderState& e) {
    std::vector<std::string> names;
    for (int k = 0; k < kNumCategoricals; ++k) {
        const std::string& base = categorical_names()[static_cast<std::size_t>(k)];
        if (e.options.categorical == CategoricalEncoding::Target) {
            for (std::size_t j = 0; j < e.n_targets; ++j)
                names.push_back(base + ":te" + std::to_string(j));
        } else {
            for (const auto& c : e.vocab[static_cast<std::size_t>(k)])
                names.push_back(base + "=" + c);
            names.push_back(base + "=" + kOtherLabel);
        }
    }
    names.push_back("month_sin");
    names.push_back("month_cos");
    for (const auto& n : numeric_names()) names.push_back(n);
    return names;
}

/// Original feature each column belongs to (categoricals aggregate their columns).
inline std::vector<std::string> feature_groups(const EncoderState& e) {
    std::vector<std::string> g;
    for (const auto& n : feature_names(e)) {
        const auto cut = n.find_first_of(":=");
        if (cut != std::string::npos) g.push_back(n.substr(0, cut));
        else if (n.rfind("month_", 0) == 0) g.push_back("month_of_year");
        else g.push_back(n);
    }
    return g;
}

/// FNV-1a hash of the column schema.
inline std::uint64_t schema_hash(const std::vector<std::string>& names) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& n : names) {
        for (unsigned char ch : n) {
            h ^= ch;
            h *= 1099511628211ULL;
        }
        h ^= 0x1f;
        h *= 1099511628211ULL;
    }
    return h;
}

namespace detail {

inline std::array<CategoryTable, kNumCategoricals> category_means(
    const std::vector<EncoderRow>& rows, const std::vector<std::size_t>& idx,
    const EncoderState& e) {
    std::array<CategoryTable, kNumCategoricals> out;
    std::array<std::map<std::string, double>, kNumCategoricals> counts;
    for (std::size_t i : idx) {
        for (int k = 0; k < kNumCategoricals; ++k) {
            const std::string b = e.bucket(k, categorical_value(rows[i].context, k));
            auto& acc = out[static_cast<std::size_t>(k)][b];
            acc.resize(e.n_targets, 0.0);
            for (std::size_t j = 0; j < e.n_targets; ++j) acc[j] += rows[i].target[j];
            counts[static_cast<std::size_t>(k)][b] += 1.0;
        }
    }
    for (int k = 0; k < kNumCategoricals; ++k) {
        for (auto& [cat, acc] : out[static_cast<std::size_t>(k)]) {
            for (double& x : acc) x /= counts[static_cast<std::size_t>(k)][cat];
        }
    }
    return out;
}

inline std::vector<double> target_mean(const std::vector<EncoderRow>& rows,
                                       const std::vector<std::size_t>& idx, std::size_t nt) {
    std::vector<double> m(nt, 0.0);
    for (std::size_t i : idx)
        for (std::size_t j = 0; j < nt; ++j) m[j] += rows[i].target[j];
    for (double& x : m) x /= std::max<double>(1.0, static_cast<double>(idx.size()));
    return m;
}

}  // namespace detail

/// Vocabularies with 'other' bucketing, K-fold target-encoding tables and
/// standardisation moments.
inline EncoderState fit_encoder(const std::vector<EncoderRow>& rows,
                                const EncoderOptions& opt = {}) {
    if (rows.empty()) throw std::invalid_argument("fit_encoder: empty dataset");
    EncoderState e;
    e.options = opt;
    e.n_targets = rows.front().target.size();
    for (const auto& r : rows) {
        if (r.target.size() != e.n_targets) {
            throw std::invalid_argument("fit_encoder: inconsistent target length");
        }
    }
    if (opt.categorical == CategoricalEncoding::Target && e.n_targets == 0) {
        throw std::invalid_argument("fit_encoder: target encoding needs a target");
    }
    const auto n = static_cast<double>(rows.size());
    for (int k = 0; k < kNumCategoricals; ++k) {
        std::map<std::string, int> freq;
        for (const auto& r : rows) ++freq[categorical_value(r.context, k)];
        for (const auto& [cat, c] : freq) {
            if (static_cast<double>(c) >= opt.other_threshold * n && cat != kOtherLabel) {
                e.vocab[static_cast<std::size_t>(k)].push_back(cat);
            } else {
                e.seen_rare[static_cast<std::size_t>(k)][cat] = c;
            }
        }
    }

    std::vector<std::size_t> all(rows.size());
    std::iota(all.begin(), all.end(), 0);
    if (e.n_targets > 0) {
        e.prior = detail::target_mean(rows, all, e.n_targets);
        e.target_mean.assign(e.n_targets, 0.0);
        e.target_scale.assign(e.n_targets, 1.0);
        if (opt.standardise) {
            for (std::size_t j = 0; j < e.n_targets; ++j) {
                double ss = 0.0;
                for (const auto& r : rows) ss += (r.target[j] - e.prior[j]) * (r.target[j] - e.prior[j]);
                const double sd = std::sqrt(ss / n);
                e.target_mean[j] = e.prior[j];
                e.target_scale[j] = sd > 1e-12 ? sd : 1.0;
            }
        }
        e.table = detail::category_means(rows, all, e);

        const int folds = std::max(1, opt.folds);
        std::vector<std::size_t> perm = all;
        std::mt19937_64 rng(opt.seed);
        std::shuffle(perm.begin(), perm.end(), rng);
        e.fold_of.assign(rows.size(), 0);
        for (std::size_t p = 0; p < perm.size(); ++p) {
            e.fold_of[perm[p]] = static_cast<int>(p % static_cast<std::size_t>(folds));
        }
        for (int f = 0; f < folds; ++f) {
            std::vector<std::size_t> others;
            for (std::size_t i = 0; i < rows.size(); ++i)
                if (e.fold_of[i] != f) others.push_back(i);
            e.fold_prior.push_back(others.empty() ? e.prior
                                                  : detail::target_mean(rows, others, e.n_targets));
            e.fold_table.push_back(detail::category_means(rows, others, e));
        }
    }

    for (int j = 0; j < kNumNumeric; ++j) {
        double s = 0.0, ss = 0.0;
        for (const auto& r : rows) s += numeric_values(r.context, r.stats)[static_cast<std::size_t>(j)];
        const double m = s / n;
        for (const auto& r : rows) {
            const double d = numeric_values(r.context, r.stats)[static_cast<std::size_t>(j)] - m;
            ss += d * d;
        }
        const double sd = std::sqrt(ss / n);
        e.mean[static_cast<std::size_t>(j)] = opt.standardise ? m : 0.0;
        e.scale[static_cast<std::size_t>(j)] = opt.standardise && sd > 1e-12 ? sd : 1.0;
    }
    return e;
}

/// Encodes one context. `fold` >= 0 selects the out-of-fold tables of a
/// training row; -1 encodes for inference.
inline Eigen::VectorXd encode(const RawContext& ctx, const MetStats& stats, const EncoderState& e,
                              int fold = -1) {
    std::vector<double> x;
    for (int k = 0; k < kNumCategoricals; ++k) {
        const std::string b = e.bucket(k, categorical_value(ctx, k));
        if (e.options.categorical == CategoricalEncoding::Target) {
            const bool oof = fold >= 0 && static_cast<std::size_t>(fold) < e.fold_table.size();
            const auto& tab = oof ? e.fold_table[static_cast<std::size_t>(fold)][static_cast<std::size_t>(k)]
                                  : e.table[static_cast<std::size_t>(k)];
            const auto& prior = oof ? e.fold_prior[static_cast<std::size_t>(fold)] : e.prior;
            const auto it = b.empty() ? tab.end() : tab.find(b);
            const auto& vals = it == tab.end() ? prior : it->second;
            for (std::size_t j = 0; j < vals.size(); ++j) {
                const bool st = j < e.target_mean.size();
                x.push_back(st ? (vals[j] - e.target_mean[j]) / e.target_scale[j] : vals[j]);
            }
        } else {
            const auto& v = e.vocab[static_cast<std::size_t>(k)];
            for (const auto& c : v) x.push_back(c == b ? 1.0 : 0.0);
            x.push_back(std::binary_search(v.begin(), v.end(), b) ? 0.0 : 1.0);
        }
    }
    const double ang = 2.0 * M_PI * ctx.month_of_year / 12.0;
    x.push_back(std::sin(ang));
    x.push_back(std::cos(ang));
    const auto num = numeric_values(ctx, stats);
    for (int j = 0; j < kNumNumeric; ++j) {
        const auto u = static_cast<std::size_t>(j);
        x.push_back((num[u] - e.mean[u]) / e.scale[u]);
    }
    return Eigen::Map<Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

/// Design matrix of the training rows, each encoded out-of-fold.
inline Eigen::MatrixXd encode_training(const std::vector<EncoderRow>& rows, const EncoderState& e) {
    const auto names = feature_names(e);
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int fold = e.fold_of.empty() ? -1 : e.fold_of[i];
        X.row(static_cast<Eigen::Index>(i)) = encode(rows[i].context, rows[i].stats, e, fold).transpose();
    }
    return X;
}

inline Eigen::MatrixXd encode_inference(const std::vector<EncoderRow>& rows, const EncoderState& e) {
    const auto names = feature_names(e);
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        X.row(static_cast<Eigen::Index>(i)) = encode(rows[i].context, rows[i].stats, e).transpose();
    return X;
}

}  // namespace piml::features
