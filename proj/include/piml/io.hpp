// Persistence: trajectory and row JSONL, basis and model JSON, prepared
// flights, content hashes. Doubles are written in shortest round-trip form,
// so a write/read cycle is exact and reruns are byte-identical.
#pragma once

#include <piml/features.hpp>
#include <piml/metrics.hpp>
#include <piml/models.hpp>
#include <piml/pipeline.hpp>
#include <piml/rom.hpp>

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace piml::io {

using nlohmann::json;

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ============================================================================
// Hashing and provenance
// ============================================================================

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Config hash and seed stamped on every artifact.
struct Stamp {
    std::string config_hash;
    std::uint64_t seed = 0;
};

inline json stamp_json(const Stamp& s) { return {{"config_hash", s.config_hash}, {"seed", s.seed}}; }

/// "# config_hash=... seed=..." first line of CSV artifacts.
inline std::string stamp_comment(const Stamp& s) {
    return "config_hash=" + s.config_hash + " seed=" + std::to_string(s.seed);
}

inline std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "' for reading");
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os << content;
    if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

// ============================================================================
// Eigen and small types
// ============================================================================

inline json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const Eigen::VectorXd r = m.row(i).transpose();
        rows.push_back(to_json(r));
    }
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

inline Eigen::VectorXd vector_from(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Eigen::MatrixXd matrix_from(const json& j) {
    const auto r = j.at("rows").get<Eigen::Index>(), c = j.at("cols").get<Eigen::Index>();
    Eigen::MatrixXd m(r, c);
    const auto& d = j.at("data");
    if (static_cast<Eigen::Index>(d.size()) != r) throw FormatError("matrix: row count mismatch");
    for (Eigen::Index i = 0; i < r; ++i) {
        const auto row = vector_from(d[static_cast<std::size_t>(i)]);
        if (row.size() != c) throw FormatError("matrix: column count mismatch");
        m.row(i) = row.transpose();
    }
    return m;
}

inline json context_json(const RawContext& c) {
    return {{"operator", c.operator_code}, {"origin", c.origin},          {"intent_code", c.intent_code},
            {"flight_type", to_string(c.flight_type)},                  {"month_of_year", c.month_of_year},
            {"day_of_week", c.day_of_week},  {"time_of_day", c.time_of_day}, {"fl_min", c.fl_min},
            {"fl_max", c.fl_max},            {"fl_range", c.fl_range}};
}

inline RawContext context_from(const json& j) {
    RawContext c;
    c.operator_code = j.at("operator").get<std::string>();
    c.origin = j.at("origin").get<std::string>();
    c.intent_code = j.at("intent_code").get<std::string>();
    c.flight_type = flight_type_from_string(j.at("flight_type").get<std::string>());
    c.month_of_year = j.at("month_of_year").get<int>();
    c.day_of_week = j.at("day_of_week").get<int>();
    c.time_of_day = j.at("time_of_day").get<int>();
    c.fl_min = j.at("fl_min").get<double>();
    c.fl_max = j.at("fl_max").get<double>();
    c.fl_range = j.at("fl_range").get<double>();
    return c;
}

inline json stats_json(const features::MetStats& m) {
    return {{"wind_magnitude_time_grad", m.wind_magnitude_time_grad},
            {"wind_along_mean", m.wind_along_mean},
            {"wind_along_time_grad", m.wind_along_time_grad},
            {"temp_dev_mean", m.temp_dev_mean},
            {"temp_dev_std", m.temp_dev_std},
            {"temp_dev_time_grad", m.temp_dev_time_grad}};
}

inline features::MetStats stats_from(const json& j) {
    features::MetStats m;
    m.wind_magnitude_time_grad = j.at("wind_magnitude_time_grad").get<double>();
    m.wind_along_mean = j.at("wind_along_mean").get<double>();
    m.wind_along_time_grad = j.at("wind_along_time_grad").get<double>();
    m.temp_dev_mean = j.at("temp_dev_mean").get<double>();
    m.temp_dev_std = j.at("temp_dev_std").get<double>();
    m.temp_dev_time_grad = j.at("temp_dev_time_grad").get<double>();
    return m;
}

/// Blip as [t, h, rocd, v_cas, heading, lat, lon].
inline json blip_json(const Blip& b) { return json::array({b.t, b.h, b.rocd, b.v_cas, b.heading, b.lat, b.lon}); }

inline Blip blip_from(const json& j) {
    if (!j.is_array() || j.size() != 7) throw FormatError("blip: expected 7 numbers");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>(),
            j[4].get<double>(), j[5].get<double>(), j[6].get<double>()};
}

// ============================================================================
// JSONL files
// ============================================================================

inline constexpr const char* kTrajectoryFormat = "piml-trajectories";
inline constexpr const char* kPreparedFormat = "piml-prepared";
inline constexpr const char* kRowsFormat = "piml-rows";
inline constexpr int kFormatVersion = 1;

/// The first line of every JSONL file names its format and carries the stamp.
inline std::string jsonl_header(const char* format, const Stamp& s) {
    json h = {{"format", format}, {"version", kFormatVersion}};
    h.update(stamp_json(s));
    return h.dump() + "\n";
}

inline std::vector<json> read_jsonl(std::istream& is, const char* format, Stamp* stamp = nullptr) {
    std::string line;
    if (!std::getline(is, line)) throw FormatError(std::string(format) + ": empty file");
    json h;
    try {
        h = json::parse(line);
    } catch (const json::exception& e) {
        throw FormatError(std::string(format) + ": bad header: " + e.what());
    }
    if (!h.is_object() || h.value("format", "") != format) {
        throw FormatError(std::string("expected a '") + format + "' file");
    }
    if (h.value("version", 0) != kFormatVersion) throw FormatError(std::string(format) + ": unsupported version");
    if (stamp) *stamp = {h.value("config_hash", ""), h.value("seed", std::uint64_t{0})};
    std::vector<json> out;
    std::size_t n = 1;
    while (std::getline(is, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw FormatError(std::string(format) + ": line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

// ---- trajectories ----------------------------------------------------------

inline json trajectory_json(const Trajectory& t) {
    json b = json::array();
    for (const auto& x : t.blips) b.push_back(blip_json(x));
    return {{"id", t.id}, {"aircraft_type", t.aircraft_type}, {"context", context_json(t.context)}, {"blips", b}};
}

inline Trajectory trajectory_from(const json& j) {
    Trajectory t;
    t.id = j.at("id").get<std::string>();
    t.aircraft_type = j.at("aircraft_type").get<std::string>();
    t.context = context_from(j.at("context"));
    for (const auto& b : j.at("blips")) t.blips.push_back(blip_from(b));
    return t;
}

inline void write_trajectories(std::ostream& os, const std::vector<Trajectory>& ts, const Stamp& s) {
    os << jsonl_header(kTrajectoryFormat, s);
    for (const auto& t : ts) os << trajectory_json(t).dump() << '\n';
}

inline std::vector<Trajectory> read_trajectories(std::istream& is, Stamp* s = nullptr) {
    std::vector<Trajectory> out;
    for (const auto& j : read_jsonl(is, kTrajectoryFormat, s)) out.push_back(trajectory_from(j));
    return out;
}

// ---- prepared flights ------------------------------------------------------

/// Index of the first blip of `sub` within its parent.
inline std::size_t sub_offset(const AugmentedTrajectory& aug, const SubTrajectory& sub) {
    const auto& b = aug.trajectory.blips;
    for (std::size_t i = 0; i < b.size(); ++i)
        if (b[i].t == sub.blips.front().t) return i;
    throw std::logic_error("sub_offset: sub-trajectory not found in its parent");
}

inline json prepared_json(const pipeline::PreparedFlight& f, bool train) {
    const auto& tr = f.aug.trajectory;
    json j = trajectory_json(tr);
    j["train"] = train;
    j["delta_t"] = f.delta_t;
    j["thrust"] = f.aug.thrust;
    j["n_dropped"] = f.aug.n_dropped;
    json subs = json::array();
    for (std::size_t k = 0; k < f.subs.size(); ++k) {
        const std::size_t first = sub_offset(f.aug, f.subs[k]);
        subs.push_back({{"index", f.subs[k].index},
                        {"first", first},
                        {"last", first + f.subs[k].blips.size() - 1},
                        {"stats", stats_json(f.stats[k])}});
    }
    j["subs"] = subs;
    return j;
}

inline pipeline::PreparedFlight prepared_from(const json& j, bool* train = nullptr) {
    pipeline::PreparedFlight f;
    f.aug.trajectory = trajectory_from(j);
    f.aug.thrust = j.at("thrust").get<std::vector<double>>();
    f.aug.n_dropped = j.at("n_dropped").get<std::size_t>();
    if (f.aug.thrust.size() != f.aug.trajectory.blips.size()) throw FormatError("prepared flight: thrust length");
    f.delta_t = j.at("delta_t").get<double>();
    for (const auto& s : j.at("subs")) {
        const auto first = s.at("first").get<std::size_t>(), last = s.at("last").get<std::size_t>();
        if (last < first || last >= f.aug.thrust.size()) throw FormatError("prepared flight: bad sub range");
        f.subs.push_back(rom::make_subtrajectory(f.aug, first, last, s.at("index").get<std::size_t>()));
        f.stats.push_back(stats_from(s.at("stats")));
    }
    if (train) *train = j.at("train").get<bool>();
    return f;
}

inline void write_prepared(std::ostream& os, const std::vector<pipeline::PreparedFlight>& fs,
                           const std::vector<bool>& train, const Stamp& s) {
    os << jsonl_header(kPreparedFormat, s);
    for (std::size_t i = 0; i < fs.size(); ++i) os << prepared_json(fs[i], train[i]).dump() << '\n';
}

inline std::vector<pipeline::PreparedFlight> read_prepared(std::istream& is, std::vector<bool>& train,
                                                           Stamp* s = nullptr) {
    std::vector<pipeline::PreparedFlight> out;
    train.clear();
    for (const auto& j : read_jsonl(is, kPreparedFormat, s)) {
        bool t = false;
        out.push_back(prepared_from(j, &t));
        train.push_back(t);
    }
    return out;
}

// ---- projected rows --------------------------------------------------------

inline json row_json(const metrics::TestRow& r, bool train) {
    const auto& w = r.row.weights;
    return {{"id", r.row.id},          {"split", train ? "train" : "test"}, {"context", context_json(r.row.context)},
            {"stats", stats_json(r.row.stats)}, {"delta_t", r.delta_t},         {"alpha", to_json(w.alpha)},
            {"beta", to_json(w.beta)}, {"h_min", w.h_min},                  {"h_max", w.h_max}};
}

inline metrics::TestRow row_from(const json& j, bool* train = nullptr) {
    metrics::TestRow r;
    r.row.id = j.at("id").get<std::string>();
    r.row.context = context_from(j.at("context"));
    r.row.stats = stats_from(j.at("stats"));
    r.delta_t = j.at("delta_t").get<double>();
    r.row.weights.alpha = vector_from(j.at("alpha"));
    r.row.weights.beta = vector_from(j.at("beta"));
    r.row.weights.h_min = j.at("h_min").get<double>();
    r.row.weights.h_max = j.at("h_max").get<double>();
    const auto split = j.at("split").get<std::string>();
    if (split != "train" && split != "test") throw FormatError("row '" + r.row.id + "': split must be train or test");
    if (train) *train = split == "train";
    return r;
}

struct RowSet {
    std::vector<metrics::TestRow> train;
    std::vector<metrics::TestRow> test;
};

inline void write_rows(std::ostream& os, const RowSet& rows, const Stamp& s) {
    os << jsonl_header(kRowsFormat, s);
    for (const auto& r : rows.train) os << row_json(r, true).dump() << '\n';
    for (const auto& r : rows.test) os << row_json(r, false).dump() << '\n';
}

inline RowSet read_rows(std::istream& is, Stamp* s = nullptr) {
    RowSet out;
    for (const auto& j : read_jsonl(is, kRowsFormat, s)) {
        bool train = false;
        auto r = row_from(j, &train);
        (train ? out.train : out.test).push_back(std::move(r));
    }
    return out;
}

// ============================================================================
// Basis
// ============================================================================

inline constexpr const char* kBasisFormat = "piml-basis";

inline json basis_json(const rom::BasisSet& b, const Stamp& s) {
    json j = {{"format", kBasisFormat},
              {"version", kFormatVersion},
              {"aircraft_type", b.aircraft_type},
              {"grid", to_json(b.grid)},
              {"quad_weights", to_json(b.quad_weights)},
              {"mu_thrust", to_json(b.mu_thrust)},
              {"mu_cas", to_json(b.mu_cas)},
              {"phi", to_json(b.phi)},
              {"psi", to_json(b.psi)},
              {"explained_variance_thrust", b.explained_variance_thrust},
              {"explained_variance_cas", b.explained_variance_cas}};
    j.update(stamp_json(s));
    return j;
}

inline rom::BasisSet basis_from(const json& j) {
    if (j.value("format", "") != kBasisFormat) throw FormatError("expected a 'piml-basis' file");
    rom::BasisSet b;
    b.aircraft_type = j.at("aircraft_type").get<std::string>();
    b.grid = vector_from(j.at("grid"));
    b.quad_weights = vector_from(j.at("quad_weights"));
    b.mu_thrust = vector_from(j.at("mu_thrust"));
    b.mu_cas = vector_from(j.at("mu_cas"));
    b.phi = matrix_from(j.at("phi"));
    b.psi = matrix_from(j.at("psi"));
    b.explained_variance_thrust = j.at("explained_variance_thrust").get<std::vector<double>>();
    b.explained_variance_cas = j.at("explained_variance_cas").get<std::vector<double>>();
    const auto n = b.grid.size();
    if (b.quad_weights.size() != n || b.mu_thrust.size() != n || b.mu_cas.size() != n || b.phi.rows() != n ||
        b.psi.rows() != n) {
        throw FormatError("basis: inconsistent grid sizes");
    }
    return b;
}

// ============================================================================
// Encoder and models
// ============================================================================

inline constexpr const char* kModelFormat = "piml-model";

inline json table_json(const features::CategoryTable& t) {
    json j = json::object();
    for (const auto& [k, v] : t) j[k] = v;
    return j;
}

inline features::CategoryTable table_from(const json& j) {
    features::CategoryTable t;
    for (const auto& [k, v] : j.items()) t[k] = v.get<std::vector<double>>();
    return t;
}

template <class T, std::size_t N, class F>
json array_json(const std::array<T, N>& a, F f) {
    json j = json::array();
    for (const auto& x : a) j.push_back(f(x));
    return j;
}

inline json encoder_json(const features::EncoderState& e) {
    const auto& o = e.options;
    json fold_tables = json::array();
    for (const auto& ft : e.fold_table) fold_tables.push_back(array_json(ft, table_json));
    json rare = json::array();
    for (const auto& m : e.seen_rare) {
        json r = json::object();
        for (const auto& [k, n] : m) r[k] = n;
        rare.push_back(r);
    }
    return {{"options",
             {{"categorical", o.categorical == features::CategoricalEncoding::Target ? "target" : "onehot"},
              {"standardise", o.standardise},
              {"folds", o.folds},
              {"other_threshold", o.other_threshold},
              {"seed", o.seed}}},
            {"n_targets", e.n_targets},
            {"vocab", array_json(e.vocab, [](const std::vector<std::string>& v) { return json(v); })},
            {"prior", e.prior},
            {"target_mean", e.target_mean},
            {"target_scale", e.target_scale},
            {"table", array_json(e.table, table_json)},
            {"fold_of", e.fold_of},
            {"fold_prior", e.fold_prior},
            {"fold_table", fold_tables},
            {"mean", e.mean},
            {"scale", e.scale},
            {"seen_rare", rare}};
}

inline features::EncoderState encoder_from(const json& j) {
    features::EncoderState e;
    const auto& o = j.at("options");
    const auto cat = o.at("categorical").get<std::string>();
    if (cat != "target" && cat != "onehot") throw FormatError("encoder: unknown categorical encoding '" + cat + "'");
    e.options.categorical = cat == "target" ? features::CategoricalEncoding::Target : features::CategoricalEncoding::OneHot;
    e.options.standardise = o.at("standardise").get<bool>();
    e.options.folds = o.at("folds").get<int>();
    e.options.other_threshold = o.at("other_threshold").get<double>();
    e.options.seed = o.at("seed").get<std::uint64_t>();
    e.n_targets = j.at("n_targets").get<std::size_t>();
    const auto& vocab = j.at("vocab");
    const auto& table = j.at("table");
    const auto& rare = j.at("seen_rare");
    if (vocab.size() != features::kNumCategoricals || table.size() != features::kNumCategoricals ||
        rare.size() != features::kNumCategoricals) {
        throw FormatError("encoder: wrong number of categorical features");
    }
    for (std::size_t k = 0; k < features::kNumCategoricals; ++k) {
        e.vocab[k] = vocab[k].get<std::vector<std::string>>();
        e.table[k] = table_from(table[k]);
        for (const auto& [name, n] : rare[k].items()) e.seen_rare[k][name] = n.get<int>();
    }
    e.prior = j.at("prior").get<std::vector<double>>();
    e.target_mean = j.at("target_mean").get<std::vector<double>>();
    e.target_scale = j.at("target_scale").get<std::vector<double>>();
    e.fold_of = j.at("fold_of").get<std::vector<int>>();
    e.fold_prior = j.at("fold_prior").get<std::vector<std::vector<double>>>();
    for (const auto& ft : j.at("fold_table")) {
        if (ft.size() != features::kNumCategoricals) throw FormatError("encoder: bad fold table");
        std::array<features::CategoryTable, features::kNumCategoricals> a;
        for (std::size_t k = 0; k < features::kNumCategoricals; ++k) a[k] = table_from(ft[k]);
        e.fold_table.push_back(std::move(a));
    }
    e.mean = j.at("mean").get<std::array<double, features::kNumNumeric>>();
    e.scale = j.at("scale").get<std::array<double, features::kNumNumeric>>();
    return e;
}

inline json scaler_json(const prob::TargetScaler& s) { return {{"mean", to_json(s.mean)}, {"scale", to_json(s.scale)}}; }

inline prob::TargetScaler scaler_from(const json& j) {
    return {vector_from(j.at("mean")), vector_from(j.at("scale"))};
}

inline json gp_json(const gp::GPModel& m) {
    json comps = json::array();
    for (const auto& c : m.components) {
        comps.push_back({{"log_lengthscale", to_json(c.hyper.log_lengthscale)},
                         {"log_signal", c.hyper.log_signal},
                         {"log_noise", c.hyper.log_noise},
                         {"mean", c.hyper.mean},
                         {"sparse", c.sparse},
                         {"jitter", c.jitter},
                         {"y", to_json(c.y)}});
    }
    // Training and inducing inputs are shared by all components.
    const Eigen::MatrixXd X = m.components.empty() ? Eigen::MatrixXd() : m.components.front().X;
    const Eigen::MatrixXd Z = m.components.empty() ? Eigen::MatrixXd() : m.components.front().Z;
    return {{"n_features", m.n_features}, {"scaler", scaler_json(m.scaler)}, {"X", to_json(X)},
            {"Z", to_json(Z)},           {"components", comps}};
}

inline gp::GPModel gp_from(const json& j) {
    gp::GPModel m;
    m.n_features = j.at("n_features").get<Eigen::Index>();
    m.scaler = scaler_from(j.at("scaler"));
    const Eigen::MatrixXd X = matrix_from(j.at("X"));
    const Eigen::MatrixXd Z = matrix_from(j.at("Z"));
    for (const auto& c : j.at("components")) {
        gp::GPComponent g;
        g.hyper.log_lengthscale = vector_from(c.at("log_lengthscale"));
        g.hyper.log_signal = c.at("log_signal").get<double>();
        g.hyper.log_noise = c.at("log_noise").get<double>();
        g.hyper.mean = c.at("mean").get<double>();
        g.sparse = c.at("sparse").get<bool>();
        g.jitter = c.at("jitter").get<double>();
        g.X = X;
        g.Z = Z;
        g.y = vector_from(c.at("y"));
        if (g.y.size() != X.rows() || (X.rows() > 0 && g.hyper.log_lengthscale.size() != X.cols())) {
            throw FormatError("gp: component shapes do not match the training inputs");
        }
        g.rebuild();
        m.components.push_back(std::move(g));
    }
    return m;
}

inline json de_json(const de::DeepEnsemble& e) {
    json members = json::array();
    for (const auto& m : e.members) {
        members.push_back({{"sizes", m.net.sizes}, {"params", to_json(m.net.params)}, {"loss_history", m.loss_history}});
    }
    return {{"n_features", e.n_features},
            {"n_outputs", e.n_outputs},
            {"variance_floor", e.variance_floor},
            {"scaler", scaler_json(e.scaler)},
            {"members", members}};
}

inline de::DeepEnsemble de_from(const json& j) {
    de::DeepEnsemble e;
    e.n_features = j.at("n_features").get<Eigen::Index>();
    e.n_outputs = j.at("n_outputs").get<Eigen::Index>();
    e.variance_floor = j.at("variance_floor").get<double>();
    e.scaler = scaler_from(j.at("scaler"));
    for (const auto& m : j.at("members")) {
        de::Member mem;
        mem.net.sizes = m.at("sizes").get<std::vector<int>>();
        mem.net.params = vector_from(m.at("params"));
        mem.loss_history = m.at("loss_history").get<std::vector<double>>();
        if (mem.net.sizes.size() < 2 || mem.net.params.size() != de::Mlp::count(mem.net.sizes)) {
            throw FormatError("de: parameter count does not match the layer sizes");
        }
        e.members.push_back(std::move(mem));
    }
    return e;
}

inline json model_json(const models::Model& m, const Stamp& s) {
    json j = {{"format", kModelFormat},
              {"version", kFormatVersion},
              {"kind", models::to_string(m.kind)},
              {"aircraft_type", m.aircraft_type},
              {"n_alpha", m.n_alpha},
              {"n_beta", m.n_beta},
              {"train_seed", m.seed}};
    j.update(stamp_json(s));
    if (m.kind == models::Kind::Baseline) {
        j["baseline"] = {{"mean", to_json(m.baseline.mean)},
                         {"covariance", to_json(m.baseline.covariance)},
                         {"chol", to_json(m.baseline.chol)}};
        return j;
    }
    j["schema_hash"] = hex(m.schema_hash);
    j["feature_names"] = features::feature_names(m.encoder);
    j["encoder"] = encoder_json(m.encoder);
    if (m.kind == models::Kind::GP) {
        j["gp"] = gp_json(m.gp);
    } else {
        j["de"] = de_json(m.de);
    }
    return j;
}

/// Refuses models whose encoder does not reproduce the stored feature schema.
inline models::Model model_from(const json& j) {
    if (j.value("format", "") != kModelFormat) throw FormatError("expected a 'piml-model' file");
    models::Model m;
    m.kind = models::kind_from_string(j.at("kind").get<std::string>());
    m.aircraft_type = j.at("aircraft_type").get<std::string>();
    m.n_alpha = j.at("n_alpha").get<Eigen::Index>();
    m.n_beta = j.at("n_beta").get<Eigen::Index>();
    m.seed = j.at("train_seed").get<std::uint64_t>();
    if (m.kind == models::Kind::Baseline) {
        const auto& b = j.at("baseline");
        m.baseline.mean = vector_from(b.at("mean"));
        m.baseline.covariance = matrix_from(b.at("covariance"));
        m.baseline.chol = matrix_from(b.at("chol"));
        if (m.baseline.mean.size() != m.n_y()) throw FormatError("baseline: dimension mismatch");
        return m;
    }
    m.encoder = encoder_from(j.at("encoder"));
    const auto names = features::feature_names(m.encoder);
    const auto stored = j.at("feature_names").get<std::vector<std::string>>();
    m.schema_hash = features::schema_hash(names);
    if (names != stored || hex(m.schema_hash) != j.at("schema_hash").get<std::string>()) {
        throw models::SchemaMismatch("model '" + models::to_string(m.kind) +
                                     "': stored feature schema does not match its encoder");
    }
    const auto d = static_cast<Eigen::Index>(names.size());
    if (m.kind == models::Kind::GP) {
        m.gp = gp_from(j.at("gp"));
        if (m.gp.n_features != d || static_cast<Eigen::Index>(m.gp.components.size()) != m.n_y()) {
            throw models::SchemaMismatch("gp model: feature or output dimension mismatch");
        }
    } else {
        m.de = de_from(j.at("de"));
        if (m.de.n_features != d || m.de.n_outputs != m.n_y()) {
            throw models::SchemaMismatch("de model: feature or output dimension mismatch");
        }
    }
    return m;
}

}  // namespace piml::io
