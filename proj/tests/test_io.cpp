#include <piml/cli.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace piml;
namespace fs = std::filesystem;

namespace {

struct Fixture {
    synth::Dataset data;
    std::vector<pipeline::PreparedFlight> flights;
    std::vector<bool> mask;
    rom::BasisSet basis;
    io::RowSet rows;
    models::ModelConfig cfg;
    io::Stamp stamp{"0123456789abcdef", 7};
};

const Fixture& fixture() {
    static const Fixture f = [] {
        Fixture x;
        x.data = synth::gen_dataset(synth::ScenarioConfig{}, 120, 11);
        x.flights = pipeline::prepare(x.data.trajectories, x.data.forecast, "B738");
        x.mask = pipeline::train_mask(x.flights, 0.8, 3);
        x.basis = pipeline::fit_basis(x.flights, x.mask);
        x.basis.aircraft_type = "B738";
        x.rows.train = pipeline::make_rows(x.flights, x.mask, true, x.basis);
        x.rows.test = pipeline::make_rows(x.flights, x.mask, false, x.basis);
        x.cfg.gp.iterations = 10;
        x.cfg.de.members = 2;
        x.cfg.de.epochs = 5;
        x.cfg.de.hidden = {16, 16};
        return x;
    }();
    return f;
}

void expect_blips_eq(const std::vector<Blip>& a, const std::vector<Blip>& b) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].t, b[i].t);
        EXPECT_EQ(a[i].h, b[i].h);
        EXPECT_EQ(a[i].rocd, b[i].rocd);
        EXPECT_EQ(a[i].v_cas, b[i].v_cas);
        EXPECT_EQ(a[i].heading, b[i].heading);
        EXPECT_EQ(a[i].lat, b[i].lat);
        EXPECT_EQ(a[i].lon, b[i].lon);
    }
}

void expect_context_eq(const RawContext& a, const RawContext& b) {
    EXPECT_EQ(a.operator_code, b.operator_code);
    EXPECT_EQ(a.origin, b.origin);
    EXPECT_EQ(a.intent_code, b.intent_code);
    EXPECT_EQ(a.flight_type, b.flight_type);
    EXPECT_EQ(a.month_of_year, b.month_of_year);
    EXPECT_EQ(a.day_of_week, b.day_of_week);
    EXPECT_EQ(a.time_of_day, b.time_of_day);
    EXPECT_EQ(a.fl_min, b.fl_min);
    EXPECT_EQ(a.fl_max, b.fl_max);
    EXPECT_EQ(a.fl_range, b.fl_range);
}

void expect_stats_eq(const features::MetStats& a, const features::MetStats& b) {
    EXPECT_EQ(a.wind_magnitude_time_grad, b.wind_magnitude_time_grad);
    EXPECT_EQ(a.wind_along_mean, b.wind_along_mean);
    EXPECT_EQ(a.wind_along_time_grad, b.wind_along_time_grad);
    EXPECT_EQ(a.temp_dev_mean, b.temp_dev_mean);
    EXPECT_EQ(a.temp_dev_std, b.temp_dev_std);
    EXPECT_EQ(a.temp_dev_time_grad, b.temp_dev_time_grad);
}

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("piml_test_io_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

cli::RunConfig small_run(const fs::path& out) {
    cli::RunConfig c;
    cli::apply_config_text(c,
                           "synth.n_flights = 80\n"
                           "samples = 20\n"
                           "gp.iterations = 5\n"
                           "de.members = 2\n"
                           "de.epochs = 3\n"
                           "de.hidden = 16,16\n"
                           "fi.trees = 10\n"
                           "fi.repeats = 1\n"
                           "generate.rows = 1\n");
    c.out_dir = out.string();
    return c;
}

}  // namespace

// ---- serialisation ---------------------------------------------------------

TEST(Io, TrajectoriesRoundTrip) {
    const auto& f = fixture();
    std::stringstream ss;
    io::write_trajectories(ss, f.data.trajectories, f.stamp);
    io::Stamp st;
    const auto back = io::read_trajectories(ss, &st);
    EXPECT_EQ(st.config_hash, f.stamp.config_hash);
    EXPECT_EQ(st.seed, f.stamp.seed);
    ASSERT_EQ(back.size(), f.data.trajectories.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(back[i].id, f.data.trajectories[i].id);
        EXPECT_EQ(back[i].aircraft_type, f.data.trajectories[i].aircraft_type);
        expect_context_eq(back[i].context, f.data.trajectories[i].context);
        expect_blips_eq(back[i].blips, f.data.trajectories[i].blips);
    }
}

TEST(Io, WrongFormatHeaderIsRejected) {
    const auto& f = fixture();
    std::stringstream ss;
    io::write_trajectories(ss, f.data.trajectories, f.stamp);
    EXPECT_THROW(io::read_rows(ss), io::FormatError);
    std::stringstream garbage("not json\n");
    EXPECT_THROW(io::read_trajectories(garbage), io::FormatError);
}

TEST(Io, PreparedFlightsRoundTrip) {
    const auto& f = fixture();
    std::stringstream ss;
    io::write_prepared(ss, f.flights, f.mask, f.stamp);
    std::vector<bool> mask;
    const auto back = io::read_prepared(ss, mask);
    EXPECT_EQ(mask, f.mask);
    ASSERT_EQ(back.size(), f.flights.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        const auto& a = f.flights[i];
        const auto& b = back[i];
        EXPECT_EQ(a.delta_t, b.delta_t);
        EXPECT_EQ(a.aug.thrust, b.aug.thrust);
        EXPECT_EQ(a.aug.n_dropped, b.aug.n_dropped);
        ASSERT_EQ(a.subs.size(), b.subs.size());
        for (std::size_t k = 0; k < a.subs.size(); ++k) {
            EXPECT_EQ(a.subs[k].id(), b.subs[k].id());
            EXPECT_EQ(a.subs[k].thrust, b.subs[k].thrust);
            expect_blips_eq(a.subs[k].blips, b.subs[k].blips);
            expect_stats_eq(a.stats[k], b.stats[k]);
        }
    }
}

TEST(Io, RowsRoundTrip) {
    const auto& f = fixture();
    std::stringstream ss;
    io::write_rows(ss, f.rows, f.stamp);
    const auto back = io::read_rows(ss);
    ASSERT_EQ(back.train.size(), f.rows.train.size());
    ASSERT_EQ(back.test.size(), f.rows.test.size());
    for (std::size_t i = 0; i < back.train.size(); ++i) {
        const auto& a = f.rows.train[i];
        const auto& b = back.train[i];
        EXPECT_EQ(a.row.id, b.row.id);
        EXPECT_EQ(a.delta_t, b.delta_t);
        EXPECT_EQ(a.row.weights.alpha, b.row.weights.alpha);
        EXPECT_EQ(a.row.weights.beta, b.row.weights.beta);
        EXPECT_EQ(a.row.weights.h_min, b.row.weights.h_min);
        EXPECT_EQ(a.row.weights.h_max, b.row.weights.h_max);
        expect_context_eq(a.row.context, b.row.context);
        expect_stats_eq(a.row.stats, b.row.stats);
    }
}

TEST(Io, BasisRoundTripProjectsIdentically) {
    const auto& f = fixture();
    const auto back = io::basis_from(io::basis_json(f.basis, f.stamp));
    EXPECT_EQ(back.aircraft_type, "B738");
    EXPECT_EQ(back.grid, f.basis.grid);
    EXPECT_EQ(back.phi, f.basis.phi);
    EXPECT_EQ(back.psi, f.basis.psi);
    const auto& sub = f.flights.front().subs.front();
    const auto a = rom::project(sub, f.basis), b = rom::project(sub, back);
    EXPECT_EQ(a.alpha, b.alpha);
    EXPECT_EQ(a.beta, b.beta);
}

TEST(Io, ForecastWithCommentsRoundTrip) {
    const auto& g = fixture().data.forecast;
    std::stringstream ss;
    features::write_forecast(ss, g, {"config_hash=abc seed=1", "second line"});
    const std::string text = ss.str();
    EXPECT_EQ(text.rfind("# piml-forecast v1\n# config_hash=abc seed=1\n# second line\n", 0), 0u);
    const auto back = features::read_forecast(ss);
    EXPECT_EQ(back.lat, g.lat);
    EXPECT_EQ(back.lon, g.lon);
    EXPECT_EQ(back.level, g.level);
    EXPECT_EQ(back.time, g.time);
    EXPECT_EQ(back.u, g.u);
    EXPECT_EQ(back.v, g.v);
    EXPECT_EQ(back.temperature, g.temperature);
}

class ModelRoundTrip : public ::testing::TestWithParam<models::Kind> {};

TEST_P(ModelRoundTrip, PredictionsAreIdentical) {
    const auto& f = fixture();
    const auto m = models::train(GetParam(), pipeline::model_rows(f.rows.train), f.cfg, 5, "B738");
    const auto text = io::model_json(m, f.stamp).dump();
    const auto back = io::model_from(io::json::parse(text));
    EXPECT_EQ(back.kind, m.kind);
    EXPECT_EQ(back.aircraft_type, "B738");
    EXPECT_EQ(back.n_alpha, m.n_alpha);
    EXPECT_EQ(back.n_beta, m.n_beta);
    for (const auto& r : f.rows.test) {
        const auto a = models::predict(m, r.row.context, r.row.stats);
        const auto b = models::predict(back, r.row.context, r.row.stats);
        EXPECT_EQ(a.mean, b.mean);
        EXPECT_EQ(a.std, b.std);
    }
    const auto& r = f.rows.test.front().row;
    EXPECT_EQ(models::sample(m, r.context, r.stats, 10, 3), models::sample(back, r.context, r.stats, 10, 3));
}

INSTANTIATE_TEST_SUITE_P(Kinds, ModelRoundTrip,
                         ::testing::Values(models::Kind::Baseline, models::Kind::GP, models::Kind::DE));

TEST(Io, TamperedFeatureSchemaIsRefused) {
    const auto& f = fixture();
    const auto m = models::train(models::Kind::GP, pipeline::model_rows(f.rows.train), f.cfg, 5, "B738");
    auto j = io::model_json(m, f.stamp);
    auto names = j["feature_names"];
    std::swap(names[0], names[1]);
    j["feature_names"] = names;
    EXPECT_THROW(io::model_from(j), models::SchemaMismatch);

    auto k = io::model_json(m, f.stamp);
    k["schema_hash"] = "0000000000000000";
    EXPECT_THROW(io::model_from(k), models::SchemaMismatch);

    auto d = io::model_json(m, f.stamp);
    d["format"] = "piml-basis";
    EXPECT_THROW(io::model_from(d), io::FormatError);
}

// ---- configuration ---------------------------------------------------------

TEST(Config, ParsesKeyValueFileWithComments) {
    cli::RunConfig c;
    cli::apply_config_text(c,
                           "# comment\n"
                           "\n"
                           "seed = 99   # trailing\n"
                           "model=de\n"
                           "de.hidden = 8, 16\n"
                           "gp.optimise = false\n"
                           "scenario.operator.BAW.thrust_effect = -1.5\n"
                           "evaluate.models = gp\n");
    EXPECT_EQ(c.seed, 99u);
    EXPECT_EQ(c.model, "de");
    EXPECT_EQ(c.models.de.hidden, (std::vector<int>{8, 16}));
    EXPECT_FALSE(c.models.gp.optimise);
    EXPECT_EQ(c.scenario.operators.front().name, "BAW");
    EXPECT_EQ(c.scenario.operators.front().thrust_effect, -1.5);
    EXPECT_EQ(c.evaluate_models, (std::vector<std::string>{"gp"}));
}

TEST(Config, RejectsMalformedInput) {
    cli::RunConfig c;
    EXPECT_THROW(cli::apply_config_text(c, "seed = 12x\n"), cli::ConfigError);
    EXPECT_THROW(cli::apply_config_text(c, "seed = -1\n"), cli::ConfigError);
    EXPECT_THROW(cli::apply_config_text(c, "no_equals_sign\n"), cli::ConfigError);
    EXPECT_THROW(cli::apply_config_text(c, "not.a.key = 1\n"), cli::ConfigError);
    EXPECT_THROW(cli::apply_config_text(c, "gp.optimise = maybe\n"), cli::ConfigError);
    cli::RunConfig bad;
    bad.train_fraction = 1.0;
    EXPECT_THROW(cli::validate(bad), cli::ConfigError);
    bad = {};
    bad.model = "svm";
    EXPECT_THROW(cli::validate(bad), std::invalid_argument);
    try {
        cli::apply_config_text(c, "seed = 1\nsamples = lots\n", "run.cfg");
        FAIL();
    } catch (const cli::ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("run.cfg:2"), std::string::npos);
    }
}

TEST(Config, HashIgnoresPathsAndTracksSettings) {
    cli::RunConfig a, b;
    b.out_dir = "elsewhere";
    b.models_dir = "models";
    EXPECT_EQ(cli::config_hash(a), cli::config_hash(b));
    b.seed = 1;
    EXPECT_NE(cli::config_hash(a), cli::config_hash(b));
    b = a;
    b.scenario.operators[2].weight = 0.2;
    EXPECT_NE(cli::config_hash(a), cli::config_hash(b));
}

TEST(Config, DumpReparsesToSameConfig) {
    cli::RunConfig a;
    a.seed = 31;
    a.models.de.hidden = {4, 5};
    a.scenario.thrust_factor = 0.123456789;
    cli::RunConfig b;
    cli::apply_config_text(b, cli::dump_config(a));
    EXPECT_EQ(cli::config_hash(a), cli::config_hash(b));
    EXPECT_EQ(cli::dump_config(a), cli::dump_config(b));
}

// ---- commands --------------------------------------------------------------

TEST(Cli, IdenticalModelAndBaselineScoreZeroSkill) {
    const auto dir = fresh_dir("zero_skill");
    auto c = small_run(dir);
    std::ostringstream log;
    for (const char* step : {"synth", "prep", "basis"}) ASSERT_EQ(cli::run_pipeline(step, c, log), 0) << log.str();
    c.model = "baseline";
    ASSERT_EQ(cli::run_pipeline("train", c, log), 0) << log.str();
    fs::copy_file(dir / "model_baseline.json", dir / "model_gp.json");
    c.evaluate_models = {"gp"};
    ASSERT_EQ(cli::run_pipeline("evaluate", c, log), 0) << log.str();

    std::ifstream in(dir / "report.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "# config_hash=" + cli::config_hash(c) + " seed=2024");
    std::getline(in, line);
    EXPECT_EQ(line, "aircraft,model,metric,score,skill");
    int gp_lines = 0;
    while (std::getline(in, line)) {
        const auto comma = line.rfind(',');
        EXPECT_EQ(std::stod(line.substr(comma + 1)), 0.0) << line;
        gp_lines += line.find(",gp,") != std::string::npos;
    }
    EXPECT_EQ(gp_lines, 6);
    EXPECT_TRUE(fs::exists(dir / "manifest_evaluate.json"));
}

TEST(Cli, FailureWritesErrorRecordAndSuccessClearsIt) {
    const auto dir = fresh_dir("errors");
    auto c = small_run(dir);
    std::ostringstream log;
    EXPECT_EQ(cli::run_pipeline("prep", c, log), 1);
    ASSERT_TRUE(fs::exists(dir / "error_prep.json"));
    const auto rec = io::json::parse(io::read_file((dir / "error_prep.json").string()));
    EXPECT_EQ(rec.at("command"), "prep");
    EXPECT_EQ(rec.at("config_hash"), cli::config_hash(c));
    EXPECT_FALSE(rec.at("message").get<std::string>().empty());

    ASSERT_EQ(cli::run_pipeline("synth", c, log), 0);
    ASSERT_EQ(cli::run_pipeline("prep", c, log), 0);
    EXPECT_FALSE(fs::exists(dir / "error_prep.json"));
}

TEST(Cli, TamperedModelFileIsRefusedAtLoad) {
    const auto dir = fresh_dir("tamper");
    auto c = small_run(dir);
    std::ostringstream log;
    for (const char* step : {"synth", "prep", "basis"}) ASSERT_EQ(cli::run_pipeline(step, c, log), 0);
    c.model = "gp";
    ASSERT_EQ(cli::run_pipeline("train", c, log), 0);
    auto j = io::json::parse(io::read_file((dir / "model_gp.json").string()));
    auto names = j["feature_names"];
    names.erase(names.begin());
    j["feature_names"] = names;
    io::write_file((dir / "model_gp.json").string(), j.dump());
    EXPECT_EQ(cli::run_pipeline("generate", c, log), 1);
    const auto rec = io::json::parse(io::read_file((dir / "error_generate.json").string()));
    EXPECT_EQ(rec.at("error"), "schema_mismatch");
}

TEST(Cli, UnknownCommandFails) {
    const auto dir = fresh_dir("unknown");
    std::ostringstream log;
    EXPECT_EQ(cli::run_pipeline("frobnicate", small_run(dir), log), 1);
}
