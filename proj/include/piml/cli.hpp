// Command orchestration: run configuration, key=value config files, the
// pipeline commands, manifests and error records.
#pragma once

#include <piml/fi.hpp>
#include <piml/io.hpp>
#include <piml/pipeline.hpp>
#include <piml/sampler.hpp>
#include <piml/synth.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace piml::cli {

namespace atm = piml::atmosphere;

inline constexpr const char* kVersion = "0.1.0";

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct RunConfig {
    std::string out_dir = "run";
    std::string data_dir, basis_dir, models_dir, reports_dir;  ///< empty = out_dir
    std::string aircraft = "B738";
    std::uint64_t seed = 2024;
    std::string model = "gp";
    double train_fraction = 0.8;
    int samples = 500;
    int n_flights = 2000;
    pipeline::PrepOptions prep;
    pipeline::BasisOptions basis;
    models::ModelConfig models;
    fi::RFConfig rf;
    int fi_repeats = fi::kPermutationRepeats;
    int generate_rows = 5;
    std::vector<std::string> evaluate_models = {"gp", "de"};
    synth::ScenarioConfig scenario;

    std::string dir(const std::string& d) const { return d.empty() ? out_dir : d; }
};

// ============================================================================
// Key registry
// ============================================================================

namespace detail {

inline std::string fmt(double x) { return features::detail::fmt(x); }

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    T x{};
    const char* b = v.data();
    const char* e = b + v.size();
    const auto r = std::from_chars(b, e, x);
    if (r.ec != std::errc() || r.ptr != e) throw ConfigError("config key '" + key + "': bad number '" + v + "'");
    return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(v);
    while (std::getline(is, cur, ',')) {
        const auto a = cur.find_first_not_of(" \t"), b = cur.find_last_not_of(" \t");
        if (a != std::string::npos) out.push_back(cur.substr(a, b - a + 1));
    }
    return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        if constexpr (std::is_same_v<T, std::string>) {
            s += v[i];
        } else if constexpr (std::is_floating_point_v<T>) {
            s += fmt(v[i]);
        } else {
            s += std::to_string(v[i]);
        }
    }
    return s;
}

}  // namespace detail

struct Key {
    std::string name;
    bool hashed = true;  ///< paths do not enter the config hash
    std::function<std::string()> get;
    std::function<void(const std::string&)> set;
};

namespace detail {

inline Key num(const std::string& name, double& x) {
    return {name, true, [&x] { return fmt(x); }, [&x, name](const std::string& v) { x = parse_number<double>(name, v); }};
}
template <class I>
Key integer(const std::string& name, I& x) {
    return {name, true, [&x] { return std::to_string(x); },
            [&x, name](const std::string& v) { x = parse_number<I>(name, v); }};
}
inline Key flag(const std::string& name, bool& x) {
    return {name, true, [&x] { return std::string(x ? "true" : "false"); },
            [&x, name](const std::string& v) { x = parse_bool(name, v); }};
}
inline Key text(const std::string& name, std::string& x, bool hashed = true) {
    return {name, hashed, [&x] { return x; }, [&x](const std::string& v) { x = v; }};
}
inline Key strings(const std::string& name, std::vector<std::string>& x) {
    return {name, true, [&x] { return join(x); }, [&x](const std::string& v) { x = split_list(v); }};
}
inline Key numbers(const std::string& name, std::vector<double>& x) {
    return {name, true, [&x] { return join(x); },
            [&x, name](const std::string& v) {
                x.clear();
                for (const auto& s : split_list(v)) x.push_back(parse_number<double>(name, s));
            }};
}
inline Key ints(const std::string& name, std::vector<int>& x) {
    return {name, true, [&x] { return join(x); },
            [&x, name](const std::string& v) {
                x.clear();
                for (const auto& s : split_list(v)) x.push_back(parse_number<int>(name, s));
            }};
}

}  // namespace detail

/// Every configurable key, bound to `c`. Keys are listed in canonical order.
inline std::vector<Key> keys(RunConfig& c) {
    using namespace detail;
    std::vector<Key> k = {
        text("paths.out", c.out_dir, false),
        text("paths.data", c.data_dir, false),
        text("paths.basis", c.basis_dir, false),
        text("paths.models", c.models_dir, false),
        text("paths.reports", c.reports_dir, false),
        text("aircraft", c.aircraft),
        integer("seed", c.seed),
        text("model", c.model),
        num("split.train_fraction", c.train_fraction),
        integer("samples", c.samples),
        integer("synth.n_flights", c.n_flights),
        num("prep.refresh_s", c.prep.refresh_s),
        num("prep.tolerance", c.prep.split.tolerance),
        integer("prep.min_blips", c.prep.split.min_blips),
        num("basis.h_lo_m", c.basis.h_lo),
        num("basis.h_hi_m", c.basis.h_hi),
        num("basis.step_m", c.basis.step),
        num("basis.threshold", c.basis.fit.threshold),
        integer("basis.min_count", c.basis.fit.min_count),
        num("encoder.other_threshold", c.models.other_threshold),
        integer("encoder.folds", c.models.folds),
        integer("gp.iterations", c.models.gp.iterations),
        num("gp.learning_rate", c.models.gp.learning_rate),
        integer("gp.exact_max", c.models.gp.exact_max),
        integer("gp.inducing", c.models.gp.inducing),
        num("gp.noise_floor", c.models.gp.noise_floor),
        num("gp.jitter", c.models.gp.jitter),
        flag("gp.optimise", c.models.gp.optimise),
        integer("de.members", c.models.de.members),
        ints("de.hidden", c.models.de.hidden),
        integer("de.epochs", c.models.de.epochs),
        integer("de.batch", c.models.de.batch),
        num("de.learning_rate", c.models.de.learning_rate),
        num("de.variance_floor", c.models.de.variance_floor),
        num("de.validation_fraction", c.models.de.validation_fraction),
        integer("fi.trees", c.rf.n_trees),
        integer("fi.min_leaf", c.rf.min_leaf),
        num("fi.feature_fraction", c.rf.feature_fraction),
        integer("fi.max_depth", c.rf.max_depth),
        flag("fi.bootstrap", c.rf.bootstrap),
        integer("fi.repeats", c.fi_repeats),
        integer("generate.rows", c.generate_rows),
        strings("evaluate.models", c.evaluate_models),
    };
    auto& s = c.scenario;
    const std::vector<Key> sk = {
        strings("scenario.aircraft", s.aircraft),
        num("scenario.lat0", s.lat0),
        num("scenario.lon0", s.lon0),
        integer("scenario.n_lat", s.n_lat),
        integer("scenario.n_lon", s.n_lon),
        num("scenario.spacing", s.spacing),
        numbers("scenario.levels_fl", s.levels_fl),
        num("scenario.time_step_h", s.time_step_h),
        integer("scenario.year", s.year),
        ints("scenario.months", s.months),
        integer("scenario.days_per_month", s.days_per_month),
        num("scenario.wind_speed", s.wind_speed),
        num("scenario.wind_variability", s.wind_variability),
        num("scenario.wind_direction", s.wind_direction),
        num("scenario.wind_veer", s.wind_veer),
        num("scenario.temp_amplitude", s.temp_amplitude),
        num("scenario.temp_offset", s.temp_offset),
        num("scenario.fl_start_min", s.fl_start_min),
        num("scenario.fl_start_max", s.fl_start_max),
        num("scenario.fl_max_min", s.fl_max_min),
        num("scenario.fl_max_max", s.fl_max_max),
        num("scenario.step_climb_rate", s.step_climb_rate),
        num("scenario.min_segment_fl", s.min_segment_fl),
        num("scenario.level_min_s", s.level_min_s),
        num("scenario.level_max_s", s.level_max_s),
        num("scenario.radar_period", s.radar_period),
        num("scenario.heading_sd", s.heading_sd),
        num("scenario.min_rocd", s.min_rocd),
        num("scenario.thrust_factor", s.thrust_factor),
        num("scenario.thrust_fl_max_effect", s.thrust_fl_max_effect),
        num("scenario.fl_max_ref", s.fl_max_ref),
        num("scenario.fl_max_scale", s.fl_max_scale),
        num("scenario.thrust_offset_sd", s.thrust_mode_sd[0]),
        num("scenario.thrust_p1_sd", s.thrust_mode_sd[1]),
        num("scenario.thrust_p2_sd", s.thrust_mode_sd[2]),
        num("scenario.thrust_p3_sd", s.thrust_mode_sd[3]),
        num("scenario.cas_target", s.cas_target),
        num("scenario.cas_wind_effect", s.cas_wind_effect),
        num("scenario.cas_offset_sd", s.cas_offset_sd),
        num("scenario.cas_slope_sd", s.cas_slope_sd),
        num("scenario.rocd_noise", s.rocd_noise),
        num("scenario.cas_noise", s.cas_noise),
    };
    k.insert(k.end(), sk.begin(), sk.end());
    for (auto& o : s.operators) {
        const std::string p = "scenario.operator." + o.name + ".";
        k.push_back(num(p + "weight", o.weight));
        k.push_back(num(p + "thrust_effect", o.thrust_effect));
        k.push_back(num(p + "cas_effect", o.cas_effect));
    }
    for (auto& f : s.flight_types) {
        const std::string p = "scenario.flight_type." + f.name + ".";
        k.push_back(num(p + "weight", f.weight));
        k.push_back(num(p + "thrust_effect", f.thrust_effect));
        k.push_back(num(p + "cas_effect", f.cas_effect));
    }
    return k;
}

inline void set_key(RunConfig& c, const std::string& key, const std::string& value) {
    for (auto& k : keys(c)) {
        if (k.name == key) {
            k.set(value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

/// "key = value" lines; '#' starts a comment; blank lines are ignored.
inline void apply_config_text(RunConfig& c, const std::string& text, const std::string& source = "config") {
    std::istringstream is(text);
    std::string line;
    int n = 0;
    while (std::getline(is, line)) {
        ++n;
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        const auto a = line.find_first_not_of(" \t\r");
        if (a == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(n) + ": expected key = value");
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r"), e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        try {
            set_key(c, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(n) + ": " + e.what());
        }
    }
}

inline void validate(const RunConfig& c) {
    if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) throw ConfigError("split.train_fraction must be in (0, 1)");
    if (c.samples < 1) throw ConfigError("samples must be >= 1");
    if (c.n_flights < 1) throw ConfigError("synth.n_flights must be >= 1");
    if (c.generate_rows < 0) throw ConfigError("generate.rows must be >= 0");
    if (c.fi_repeats < 1) throw ConfigError("fi.repeats must be >= 1");
    if (c.rf.n_trees < 1 || c.rf.min_leaf < 1) throw ConfigError("fi.trees and fi.min_leaf must be >= 1");
    models::kind_from_string(c.model);
    for (const auto& m : c.evaluate_models) models::kind_from_string(m);
    synth::validate(c.scenario);
}

/// Canonical "key=value" listing of the hashed keys.
inline std::map<std::string, std::string> canonical(const RunConfig& c) {
    RunConfig copy = c;
    std::map<std::string, std::string> out;
    for (const auto& k : keys(copy))
        if (k.hashed) out[k.name] = k.get();
    return out;
}

inline std::string config_hash(const RunConfig& c) {
    std::string s;
    for (const auto& [k, v] : canonical(c)) s += k + "=" + v + "\n";
    return io::hex(io::fnv1a(s));
}

inline std::string dump_config(const RunConfig& c) {
    RunConfig copy = c;
    std::string s;
    for (const auto& k : keys(copy)) s += k.name + " = " + k.get() + "\n";
    return s;
}

// ============================================================================
// Commands
// ============================================================================

/// Files read and written by one command, for its manifest.
class Session {
public:
    Session(const RunConfig& cfg, std::string command)
        : cfg_(cfg), command_(std::move(command)), stamp_{config_hash(cfg), cfg.seed} {}

    const RunConfig& cfg() const { return cfg_; }
    const io::Stamp& stamp() const { return stamp_; }
    const std::string& command() const { return command_; }

    std::string path(const std::string& dir, const std::string& name) const {
        return (std::filesystem::path(cfg_.dir(dir)) / name).string();
    }
    std::string data(const std::string& n) const { return path(cfg_.data_dir, n); }
    std::string basis(const std::string& n) const { return path(cfg_.basis_dir, n); }
    std::string model(const std::string& n) const { return path(cfg_.models_dir, n); }
    std::string report(const std::string& n) const { return path(cfg_.reports_dir, n); }

    std::string read(const std::string& p) {
        std::string s = io::read_file(p);
        inputs_.emplace_back(std::filesystem::path(p).filename().string(), io::hex(io::fnv1a(s)));
        return s;
    }
    void write(const std::string& p, const std::string& content) {
        std::filesystem::create_directories(std::filesystem::path(p).parent_path().empty()
                                                ? std::filesystem::path(".")
                                                : std::filesystem::path(p).parent_path());
        io::write_file(p, content);
        outputs_.emplace_back(std::filesystem::path(p).filename().string(), io::hex(io::fnv1a(content)));
    }
    /// CSV artifacts start with a stamp comment.
    void write_csv(const std::string& p, const std::string& body) {
        write(p, "# " + io::stamp_comment(stamp_) + "\n" + body);
    }

    io::json manifest() const {
        io::json in = io::json::array(), out = io::json::array();
        for (const auto& [n, h] : inputs_) in.push_back({{"file", n}, {"fnv1a", h}});
        for (const auto& [n, h] : outputs_) out.push_back({{"file", n}, {"fnv1a", h}});
        io::json cfg = io::json::object();
        for (const auto& [k, v] : canonical(cfg_)) cfg[k] = v;
        io::json j = {{"command", command_}, {"version", kVersion}, {"config", cfg}, {"inputs", in}, {"outputs", out}};
        j.update(io::stamp_json(stamp_));
        return j;
    }

private:
    RunConfig cfg_;
    std::string command_;
    io::Stamp stamp_;
    std::vector<std::pair<std::string, std::string>> inputs_, outputs_;
};

namespace detail {

inline std::uint64_t stage_seed(const RunConfig& c, std::uint64_t stage) { return prob::derive_seed(c.seed, stage); }

inline features::ForecastGrid load_forecast(Session& s) {
    std::istringstream is(s.read(s.data("forecast.txt")));
    return features::read_forecast(is);
}

inline io::RowSet load_rows(Session& s) {
    std::istringstream is(s.read(s.data("rows.jsonl")));
    return io::read_rows(is);
}

inline rom::BasisSet load_basis(Session& s) { return io::basis_from(io::json::parse(s.read(s.basis("basis.json")))); }

inline models::Model load_model(Session& s, const std::string& kind) {
    return io::model_from(io::json::parse(s.read(s.model("model_" + kind + ".json"))));
}

inline std::string csv_num(double x) { return fmt(x); }

}  // namespace detail

inline void cmd_synth(Session& s) {
    const auto& c = s.cfg();
    const auto d = synth::gen_dataset(c.scenario, static_cast<std::size_t>(c.n_flights), c.seed);
    std::ostringstream t, f;
    io::write_trajectories(t, d.trajectories, s.stamp());
    features::write_forecast(f, d.forecast, {io::stamp_comment(s.stamp())});
    s.write(s.data("trajectories.jsonl"), t.str());
    s.write(s.data("forecast.txt"), f.str());
}

inline void cmd_prep(Session& s) {
    const auto& c = s.cfg();
    std::istringstream ts(s.read(s.data("trajectories.jsonl")));
    const auto trajs = io::read_trajectories(ts);
    const auto fc = detail::load_forecast(s);
    pipeline::PrepSummary sum;
    const auto flights = pipeline::prepare(trajs, fc, c.aircraft, c.prep, &sum);
    if (flights.empty()) throw rom::InsufficientData("prep: no trajectory of type '" + c.aircraft + "' survived");
    const auto mask = pipeline::train_mask(flights, c.train_fraction, c.seed);
    std::ostringstream p;
    io::write_prepared(p, flights, mask, s.stamp());
    s.write(s.data("prepared.jsonl"), p.str());
    std::ostringstream r;
    std::size_t n_train = 0;
    for (bool m : mask) n_train += m;
    r << "aircraft,trajectories,no_climb,blips_filtered,blips_dropped,no_subtrajectory,prepared,subtrajectories,"
         "train_flights,test_flights\n"
      << c.aircraft << ',' << sum.trajectories << ',' << sum.no_climb << ',' << sum.blips_filtered << ','
      << sum.blips_dropped << ',' << sum.no_subtrajectory << ',' << flights.size() << ',' << sum.subtrajectories
      << ',' << n_train << ',' << flights.size() - n_train << '\n';
    s.write_csv(s.report("prep_summary.csv"), r.str());
}

inline void cmd_basis(Session& s) {
    const auto& c = s.cfg();
    std::vector<bool> mask;
    std::istringstream ps(s.read(s.data("prepared.jsonl")));
    const auto flights = io::read_prepared(ps, mask);
    auto basis = pipeline::fit_basis(flights, mask, c.basis);
    basis.aircraft_type = c.aircraft;
    std::size_t skipped_train = 0, skipped_test = 0;
    io::RowSet rows{pipeline::make_rows(flights, mask, true, basis, &skipped_train),
                    pipeline::make_rows(flights, mask, false, basis, &skipped_test)};
    s.write(s.basis("basis.json"), io::basis_json(basis, s.stamp()).dump() + "\n");
    std::ostringstream r;
    io::write_rows(r, rows, s.stamp());
    s.write(s.data("rows.jsonl"), r.str());
    std::ostringstream e;
    e << "function,component,cumulative_explained_variance,retained\n";
    for (std::size_t k = 0; k < basis.explained_variance_thrust.size(); ++k)
        e << "thrust," << k + 1 << ',' << detail::csv_num(basis.explained_variance_thrust[k]) << ','
          << (static_cast<Eigen::Index>(k) < basis.n_alpha()) << '\n';
    for (std::size_t k = 0; k < basis.explained_variance_cas.size(); ++k)
        e << "cas," << k + 1 << ',' << detail::csv_num(basis.explained_variance_cas[k]) << ','
          << (static_cast<Eigen::Index>(k) < basis.n_beta()) << '\n';
    s.write_csv(s.report("explained_variance.csv"), e.str());
    std::ostringstream m;
    m << "aircraft,grid_lo_fl,grid_hi_fl,grid_nodes,n_alpha,n_beta,train_rows,test_rows,skipped_train,skipped_test\n"
      << c.aircraft << ',' << detail::csv_num(basis.grid[0] / atm::kMetresPerFlightLevel) << ','
      << detail::csv_num(basis.grid[basis.grid.size() - 1] / atm::kMetresPerFlightLevel) << ',' << basis.grid.size()
      << ',' << basis.n_alpha() << ',' << basis.n_beta() << ',' << rows.train.size() << ',' << rows.test.size()
      << ',' << skipped_train << ',' << skipped_test << '\n';
    s.write_csv(s.report("basis_summary.csv"), m.str());
}

inline void cmd_features(Session& s) {
    const auto& c = s.cfg();
    const auto rows = detail::load_rows(s);
    if (rows.train.empty()) throw rom::InsufficientData("features: no training rows");
    const auto kind = models::kind_from_string(c.model);
    features::EncoderOptions eo;
    eo.categorical = kind == models::Kind::GP ? features::CategoricalEncoding::Target : features::CategoricalEncoding::OneHot;
    eo.standardise = true;
    eo.folds = c.models.folds;
    eo.other_threshold = c.models.other_threshold;
    eo.seed = detail::stage_seed(c, 10);
    const auto tr = models::encoder_rows(pipeline::model_rows(rows.train));
    const auto te = models::encoder_rows(pipeline::model_rows(rows.test));
    const auto enc = features::fit_encoder(tr, eo);
    const Eigen::MatrixXd Xtr = features::encode_training(tr, enc);
    const Eigen::MatrixXd Xte = te.empty() ? Eigen::MatrixXd(0, Xtr.cols()) : features::encode_inference(te, enc);
    const std::string tag = eo.categorical == features::CategoricalEncoding::Target ? "target" : "onehot";
    io::json ej = {{"format", "piml-encoder"}, {"version", io::kFormatVersion}, {"encoder", io::encoder_json(enc)},
                   {"feature_names", features::feature_names(enc)},
                   {"schema_hash", io::hex(features::schema_hash(features::feature_names(enc)))}};
    ej.update(io::stamp_json(s.stamp()));
    s.write(s.data("encoder_" + tag + ".json"), ej.dump() + "\n");
    std::ostringstream f;
    f << "id,split";
    for (const auto& n : features::feature_names(enc)) f << ',' << n;
    f << '\n';
    auto emit = [&](const std::vector<metrics::TestRow>& rs, const Eigen::MatrixXd& X, const char* split) {
        for (std::size_t i = 0; i < rs.size(); ++i) {
            f << rs[i].row.id << ',' << split;
            for (Eigen::Index j = 0; j < X.cols(); ++j) f << ',' << detail::csv_num(X(static_cast<Eigen::Index>(i), j));
            f << '\n';
        }
    };
    emit(rows.train, Xtr, "train");
    emit(rows.test, Xte, "test");
    s.write_csv(s.data("features_" + tag + ".csv"), f.str());
}

inline void cmd_train(Session& s) {
    const auto& c = s.cfg();
    const auto kind = models::kind_from_string(c.model);
    const auto rows = detail::load_rows(s);
    if (rows.train.empty()) throw rom::InsufficientData("train: no training rows");
    const auto m = models::train(kind, pipeline::model_rows(rows.train), c.models,
                                 detail::stage_seed(c, 100 + static_cast<std::uint64_t>(kind)), c.aircraft);
    s.write(s.model("model_" + c.model + ".json"), io::model_json(m, s.stamp()).dump() + "\n");
}

inline void cmd_generate(Session& s) {
    const auto& c = s.cfg();
    const auto basis = detail::load_basis(s);
    const auto model = detail::load_model(s, c.model);
    auto rows = detail::load_rows(s).test;
    if (rows.empty()) throw rom::InsufficientData("generate: no test rows");
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.row.id < b.row.id; });
    if (static_cast<int>(rows.size()) > c.generate_rows) rows.resize(static_cast<std::size_t>(c.generate_rows));
    const auto p = perf::surrogate(basis.aircraft_type);
    const std::uint64_t seed = detail::stage_seed(c, 300);
    std::ostringstream ens, bands, summary;
    ens << "row_id,sample,t_s,h_m,cas_mps,rocd_ftmin\n";
    bands << "row_id,flight_level,time_lo_s,time_median_s,time_hi_s,cas_lo_mps,cas_median_mps,cas_hi_mps\n";
    summary << "row_id,requested,rejected,rejection_rate_pct,status\n";
    for (const auto& r : rows) {
        const auto& w = r.row.weights;
        sampler::GenerateOptions go;
        go.delta_t = r.delta_t;
        const Eigen::MatrixXd Y =
            models::sample(model, r.row.context, r.row.stats, c.samples, prob::derive_seed(seed, metrics::id_hash(r.row.id)));
        sampler::GenerationResult g;
        try {
            g = sampler::generate(Y, basis, p, w.h_min, w.h_max, go);
        } catch (const sampler::AllRejected&) {
            summary << r.row.id << ',' << c.samples << ',' << c.samples << ",100,all_rejected\n";
            continue;
        }
        std::string status = "ok";
        std::ostringstream e, b;
        sampler::write_ensemble_csv(e, g);
        try {
            sampler::write_bands_csv(b, sampler::credible_bands(g));
        } catch (const sampler::TooFewSamples&) {
            status = "too_few_for_bands";
        }
        // Prefix the row id to every data line of the per-row tables.
        auto prefix = [&](std::ostringstream& dst, const std::string& src) {
            std::istringstream is(src);
            std::string line;
            std::getline(is, line);
            while (std::getline(is, line)) dst << r.row.id << ',' << line << '\n';
        };
        prefix(ens, e.str());
        if (status == "ok") prefix(bands, b.str());
        char rate[32];
        std::snprintf(rate, sizeof rate, "%.6f", g.rejection_rate);
        summary << r.row.id << ',' << g.n_requested << ',' << g.n_rejected << ',' << rate << ',' << status << '\n';
    }
    s.write_csv(s.report("ensemble_" + c.model + ".csv"), ens.str());
    s.write_csv(s.report("bands_" + c.model + ".csv"), bands.str());
    s.write_csv(s.report("generate_" + c.model + ".csv"), summary.str());
}

inline void cmd_evaluate(Session& s) {
    const auto& c = s.cfg();
    const auto basis = detail::load_basis(s);
    const auto rows = detail::load_rows(s);
    std::vector<models::Model> ms;
    std::vector<std::string> names = {"baseline"};
    for (const auto& m : c.evaluate_models)
        if (m != "baseline") names.push_back(m);
    for (const auto& n : names) ms.push_back(detail::load_model(s, n));
    std::vector<metrics::NamedModel> named;
    for (std::size_t k = 0; k < ms.size(); ++k) named.push_back({names[k], &ms[k]});
    metrics::SuiteOptions so;
    so.n_samples = c.samples;
    so.seed = detail::stage_seed(c, 200);
    const auto rep = metrics::evaluate_suite(named, rows.test, basis, perf::surrogate(basis.aircraft_type), so);
    std::ostringstream a, b, r, m;
    metrics::write_report_csv(a, rep);
    metrics::write_rejection_csv(b, rep);
    metrics::write_rows_csv(r, rep);
    m << "aircraft,model,mean_skill,rows_scored,rows_excluded,rows_unobservable\n";
    for (const auto& sc : rep.models) {
        m << rep.aircraft_type << ',' << sc.name << ',' << detail::csv_num(sc.mean_skill()) << ',' << rep.rows.size()
          << ',' << rep.rows_excluded << ',' << rep.rows_unobservable << '\n';
    }
    s.write_csv(s.report("report.csv"), a.str());
    s.write_csv(s.report("rejection.csv"), b.str());
    s.write_csv(s.report("evaluation_rows.csv"), r.str());
    s.write_csv(s.report("skill_summary.csv"), m.str());
}

inline void cmd_fi(Session& s) {
    const auto& c = s.cfg();
    const auto rows = detail::load_rows(s);
    std::vector<models::Row> all = pipeline::model_rows(rows.train);
    const auto te = pipeline::model_rows(rows.test);
    all.insert(all.end(), te.begin(), te.end());
    const auto d = pipeline::fi_design(all, c.models.other_threshold);
    fi::StudyOptions o;
    o.rf = c.rf;
    o.train_fraction = c.train_fraction;
    o.permutation_repeats = c.fi_repeats;
    o.seed = detail::stage_seed(c, 400);
    const auto reps = fi::run_fi_study(d.X, d.Y, d.columns, d.groups, d.targets, o);
    std::ostringstream f, col, sum;
    fi::write_fi_csv(f, reps);
    col << "target,column,gini\n";
    sum << "target,r2_test,rows\n";
    for (const auto& r : reps) {
        for (std::size_t k = 0; k < r.columns.size(); ++k)
            col << r.target << ',' << r.columns[k] << ',' << detail::csv_num(r.gini_column[static_cast<Eigen::Index>(k)])
                << '\n';
        sum << r.target << ',' << detail::csv_num(r.r2_test) << ',' << d.X.rows() << '\n';
    }
    s.write_csv(s.report("fi.csv"), f.str());
    s.write_csv(s.report("fi_columns.csv"), col.str());
    s.write_csv(s.report("fi_summary.csv"), sum.str());
}

/// Plot-ready tables: basis functions, dataset counts and the skill table.
inline void cmd_report(Session& s) {
    const auto basis = detail::load_basis(s);
    std::ostringstream bf;
    bf << "flight_level,mu_thrust_n,mu_cas_mps";
    for (Eigen::Index k = 0; k < basis.n_alpha(); ++k) bf << ",phi_" << k + 1;
    for (Eigen::Index k = 0; k < basis.n_beta(); ++k) bf << ",psi_" << k + 1;
    bf << '\n';
    for (Eigen::Index i = 0; i < basis.grid.size(); ++i) {
        bf << detail::csv_num(basis.grid[i] / atm::kMetresPerFlightLevel) << ',' << detail::csv_num(basis.mu_thrust[i])
           << ',' << detail::csv_num(basis.mu_cas[i]);
        for (Eigen::Index k = 0; k < basis.n_alpha(); ++k) bf << ',' << detail::csv_num(basis.phi(i, k));
        for (Eigen::Index k = 0; k < basis.n_beta(); ++k) bf << ',' << detail::csv_num(basis.psi(i, k));
        bf << '\n';
    }
    s.write_csv(s.report("basis_functions.csv"), bf.str());

    std::vector<bool> mask;
    std::istringstream ps(s.read(s.data("prepared.jsonl")));
    const auto flights = io::read_prepared(ps, mask);
    std::size_t subs = 0;
    for (const auto& f : flights) subs += f.subs.size();
    std::ostringstream ds;
    ds << "aircraft,trajectories,subtrajectories,subtrajectories_per_trajectory\n"
       << basis.aircraft_type << ',' << flights.size() << ',' << subs << ','
       << detail::csv_num(flights.empty() ? 0.0 : static_cast<double>(subs) / static_cast<double>(flights.size()))
       << '\n';
    s.write_csv(s.report("dataset_summary.csv"), ds.str());

    // Wide skill table from the evaluation report.
    std::istringstream rs(s.read(s.report("report.csv")));
    std::string line;
    std::map<std::string, std::map<std::string, std::string>> skill;
    std::vector<std::string> order;
    while (std::getline(rs, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("aircraft,", 0) == 0) continue;
        std::vector<std::string> f;
        std::istringstream ls(line);
        std::string x;
        while (std::getline(ls, x, ',')) f.push_back(x);
        if (f.size() != 5) throw io::FormatError("report.csv: expected 5 columns");
        const std::string key = f[0] + "," + f[1];
        if (!skill.count(key)) order.push_back(key);
        skill[key][f[2]] = f[4];
    }
    const std::vector<std::string> cols = {"time_crps", "roc_crps", "cas_crps", "time_rmse", "roc_rmse", "cas_rmse"};
    std::ostringstream st;
    st << "aircraft,model";
    for (const auto& m : cols) st << ',' << m << "_skill";
    st << '\n';
    for (const auto& k : order) {
        st << k;
        for (const auto& m : cols) st << ',' << skill[k][m];
        st << '\n';
    }
    s.write_csv(s.report("skill_table.csv"), st.str());
}

inline const std::vector<std::string>& command_names() {
    static const std::vector<std::string> n = {"synth", "prep",     "basis", "features", "train",
                                               "generate", "evaluate", "fi",    "report",   "all"};
    return n;
}

inline std::string error_kind(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return "config";
    if (dynamic_cast<const models::SchemaMismatch*>(&e)) return "schema_mismatch";
    if (dynamic_cast<const io::FormatError*>(&e)) return "format";
    if (dynamic_cast<const nlohmann::json::exception*>(&e)) return "format";
    if (dynamic_cast<const sampler::AllRejected*>(&e)) return "all_rejected";
    if (dynamic_cast<const rom::InsufficientData*>(&e)) return "insufficient_data";
    if (dynamic_cast<const std::invalid_argument*>(&e)) return "invalid_argument";
    return "runtime";
}

/// Runs one command (or "all"). Returns 0 on success; on failure writes
/// error_<command>.json to the output directory and returns 1.
inline int run_pipeline(const std::string& command, const RunConfig& cfg, std::ostream& log = std::cerr) {
    if (command == "all") {
        RunConfig c = cfg;
        for (const char* step : {"synth", "prep", "basis", "features"}) {
            if (int rc = run_pipeline(step, c, log)) return rc;
        }
        for (const char* m : {"baseline", "gp", "de"}) {
            c.model = m;
            if (int rc = run_pipeline("train", c, log)) return rc;
        }
        c.model = cfg.model;
        for (const char* step : {"evaluate", "generate", "fi", "report"}) {
            if (int rc = run_pipeline(step, c, log)) return rc;
        }
        return 0;
    }
    const std::filesystem::path out(cfg.out_dir);
    const std::string err_path = (out / ("error_" + command + ".json")).string();
    std::string hash = "";
    try {
        validate(cfg);
        hash = config_hash(cfg);
        Session s(cfg, command);
        if (command == "synth") cmd_synth(s);
        else if (command == "prep") cmd_prep(s);
        else if (command == "basis") cmd_basis(s);
        else if (command == "features") cmd_features(s);
        else if (command == "train") cmd_train(s);
        else if (command == "generate") cmd_generate(s);
        else if (command == "evaluate") cmd_evaluate(s);
        else if (command == "fi") cmd_fi(s);
        else if (command == "report") cmd_report(s);
        else throw ConfigError("unknown command '" + command + "'");
        const std::string name = command == "train" || command == "generate" ? command + "_" + cfg.model : command;
        std::filesystem::create_directories(out);
        io::write_file((out / ("manifest_" + name + ".json")).string(), s.manifest().dump(2) + "\n");
        std::error_code ec;
        std::filesystem::remove(err_path, ec);
        log << command << (command == "train" || command == "generate" ? " " + cfg.model : "") << ": ok\n";
        return 0;
    } catch (const std::exception& e) {
        io::json rec = {{"command", command}, {"error", error_kind(e)}, {"message", e.what()},
                        {"config_hash", hash}, {"seed", cfg.seed}};
        try {
            std::filesystem::create_directories(out);
            io::write_file(err_path, rec.dump(2) + "\n");
        } catch (const std::exception&) {
        }
        log << rec.dump() << '\n';
        return 1;
    }
}

}  // namespace piml::cli
