// Conditional models over reduced-order weights: the unconditional Gaussian
// baseline, the Gaussian process and the deep ensemble behind one interface.
#pragma once

#include <piml/deep_ensemble.hpp>
#include <piml/features.hpp>
#include <piml/gp.hpp>
#include <piml/prob.hpp>
#include <piml/rom.hpp>

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace piml::models {

enum class Kind { Baseline, GP, DE };

inline std::string to_string(Kind k) {
    switch (k) {
        case Kind::Baseline: return "baseline";
        case Kind::GP: return "gp";
        default: return "de";
    }
}

inline Kind kind_from_string(const std::string& s) {
    if (s == "baseline") return Kind::Baseline;
    if (s == "gp") return Kind::GP;
    if (s == "de") return Kind::DE;
    throw std::invalid_argument("unknown model kind '" + s + "'");
}

class SchemaMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One training or test example: context, met statistics and projected weights.
struct Row {
    std::string id;
    RawContext context;
    features::MetStats stats;
    rom::WeightVector weights;
};

struct ModelConfig {
    gp::GPConfig gp;
    de::DEConfig de;
    double other_threshold = 0.02;
    int folds = 3;
};

struct Model {
    Kind kind = Kind::Baseline;
    std::string aircraft_type;
    Eigen::Index n_alpha = 0;
    Eigen::Index n_beta = 0;
    std::uint64_t seed = 0;
    features::EncoderState encoder;
    std::uint64_t schema_hash = 0;
    prob::GaussianBaseline baseline;
    gp::GPModel gp;
    de::DeepEnsemble de;

    Eigen::Index n_y() const { return n_alpha + n_beta; }
};

inline Eigen::MatrixXd weight_matrix(const std::vector<Row>& rows) {
    if (rows.empty()) throw std::invalid_argument("weight_matrix: no rows");
    const Eigen::Index ny = rows.front().weights.alpha.size() + rows.front().weights.beta.size();
    Eigen::MatrixXd Y(static_cast<Eigen::Index>(rows.size()), ny);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto y = rows[i].weights.stacked();
        if (y.size() != ny) throw std::invalid_argument("weight_matrix: inconsistent weight sizes");
        Y.row(static_cast<Eigen::Index>(i)) = y.transpose();
    }
    return Y;
}

/// Encoder rows; the target-encoding target is the leading coefficient of
/// each function.
inline std::vector<features::EncoderRow> encoder_rows(const std::vector<Row>& rows) {
    std::vector<features::EncoderRow> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        std::vector<double> target;
        if (r.weights.alpha.size() > 0) target.push_back(r.weights.alpha[0]);
        if (r.weights.beta.size() > 0) target.push_back(r.weights.beta[0]);
        out.push_back({r.context, r.stats, target});
    }
    return out;
}

inline Model train(Kind kind, const std::vector<Row>& rows, const ModelConfig& cfg, std::uint64_t seed,
                   const std::string& aircraft_type = "") {
    Model m;
    m.kind = kind;
    m.aircraft_type = aircraft_type;
    m.seed = seed;
    const Eigen::MatrixXd Y = weight_matrix(rows);
    m.n_alpha = rows.front().weights.alpha.size();
    m.n_beta = rows.front().weights.beta.size();
    if (kind == Kind::Baseline) {
        m.baseline = prob::fit_baseline(Y);
        return m;
    }
    features::EncoderOptions eo;
    eo.categorical = kind == Kind::GP ? features::CategoricalEncoding::Target
                                      : features::CategoricalEncoding::OneHot;
    eo.standardise = true;
    eo.folds = cfg.folds;
    eo.other_threshold = cfg.other_threshold;
    eo.seed = prob::derive_seed(seed, 1);
    const auto er = encoder_rows(rows);
    m.encoder = features::fit_encoder(er, eo);
    m.schema_hash = features::schema_hash(features::feature_names(m.encoder));
    const Eigen::MatrixXd X = features::encode_training(er, m.encoder);
    if (kind == Kind::GP) {
        auto gc = cfg.gp;
        gc.seed = prob::derive_seed(seed, 2);
        m.gp = gp::fit_gp(X, Y, gc);
    } else {
        auto dc = cfg.de;
        dc.seed = prob::derive_seed(seed, 3);
        m.de = de::fit_de(X, Y, dc);
    }
    return m;
}

inline void check_schema(const Model& m) {
    if (m.kind == Kind::Baseline) return;
    if (features::schema_hash(features::feature_names(m.encoder)) != m.schema_hash) {
        throw SchemaMismatch("model '" + to_string(m.kind) + "': feature schema hash mismatch");
    }
}

inline Eigen::VectorXd features_of(const Model& m, const RawContext& ctx, const features::MetStats& s) {
    return features::encode(ctx, s, m.encoder);
}

/// Marginal predictive distribution of the weights (the baseline ignores x).
inline prob::PredictiveDistribution predict(const Model& m, const RawContext& ctx, const features::MetStats& s) {
    switch (m.kind) {
        case Kind::Baseline: return m.baseline.predict();
        case Kind::GP: return gp::gp_predict(m.gp, features_of(m, ctx, s));
        default: return de::de_predict(m.de, features_of(m, ctx, s));
    }
}

/// n weight samples, one per row.
inline Eigen::MatrixXd sample(const Model& m, const RawContext& ctx, const features::MetStats& s, int n,
                              std::uint64_t seed) {
    if (m.kind == Kind::Baseline) return prob::sample_y(m.baseline, n, seed);
    return prob::sample_y(predict(m, ctx, s), n, seed);
}

}  // namespace piml::models
