// Feature-importance study: a regression random forest and three importance
// heuristics (impurity decrease, permutation, drop-column).
#pragma once

#include <piml/prob.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace piml::fi {

struct RFConfig {
    int n_trees = 200;
    int min_leaf = 5;
    double feature_fraction = 1.0 / 3.0;
    int max_depth = -1;  ///< unbounded when negative
    bool bootstrap = true;
};

struct Node {
    int feature = -1;  ///< -1 for a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;     ///< mean target of the node's samples
    double decrease = 0.0;  ///< squared-error reduction of the split
    int n = 0;
};

struct Tree {
    std::vector<Node> nodes;

    template <class Row>
    double predict(const Row& x) const {
        int k = 0;
        while (nodes[static_cast<std::size_t>(k)].feature >= 0) {
            const Node& nd = nodes[static_cast<std::size_t>(k)];
            k = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
        }
        return nodes[static_cast<std::size_t>(k)].value;
    }
};

struct RandomForest {
    RFConfig config;
    std::uint64_t seed = 0;
    Eigen::Index n_features = 0;
    std::vector<Tree> trees;
};

namespace detail {

struct Builder {
    const Eigen::MatrixXd& X;
    const Eigen::VectorXd& y;
    const RFConfig& cfg;
    std::mt19937_64& rng;
    int mtry;
    Tree tree;
    std::vector<int> feats;
    std::vector<std::pair<double, double>> buf;

    int build(std::vector<int>& idx, std::size_t lo, std::size_t hi, int depth) {
        const auto m = static_cast<int>(hi - lo);
        double sum = 0.0;
        for (std::size_t i = lo; i < hi; ++i) sum += y[idx[i]];
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({});
        tree.nodes.back().value = sum / m;
        tree.nodes.back().n = m;
        if (m < 2 * cfg.min_leaf || (cfg.max_depth >= 0 && depth >= cfg.max_depth)) return id;

        // Random feature subset: partial Fisher-Yates.
        for (int j = 0; j < mtry; ++j) {
            const std::size_t r = static_cast<std::size_t>(j) + rng() % (feats.size() - static_cast<std::size_t>(j));
            std::swap(feats[static_cast<std::size_t>(j)], feats[r]);
        }
        double best_gain = 0.0, best_thr = 0.0;
        int best_f = -1;
        const double base = sum * sum / m;
        for (int j = 0; j < mtry; ++j) {
            const int f = feats[static_cast<std::size_t>(j)];
            buf.clear();
            for (std::size_t i = lo; i < hi; ++i) buf.emplace_back(X(idx[i], f), y[idx[i]]);
            std::sort(buf.begin(), buf.end());
            if (buf.front().first == buf.back().first) continue;
            double left = 0.0;
            for (int k = 1; k < m; ++k) {
                left += buf[static_cast<std::size_t>(k - 1)].second;
                if (k < cfg.min_leaf || m - k < cfg.min_leaf) continue;
                if (!(buf[static_cast<std::size_t>(k - 1)].first < buf[static_cast<std::size_t>(k)].first)) continue;
                const double right = sum - left;
                const double gain = left * left / k + right * right / (m - k) - base;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_f = f;
                    best_thr = 0.5 * (buf[static_cast<std::size_t>(k - 1)].first + buf[static_cast<std::size_t>(k)].first);
                }
            }
        }
        if (best_f < 0 || !(best_gain > 1e-12 * std::max(1.0, std::abs(base)))) return id;

        const auto mid = static_cast<std::size_t>(
            std::stable_partition(idx.begin() + static_cast<std::ptrdiff_t>(lo), idx.begin() + static_cast<std::ptrdiff_t>(hi),
                                  [&](int i) { return X(i, best_f) <= best_thr; }) -
            idx.begin());
        const int l = build(idx, lo, mid, depth + 1);
        const int r = build(idx, mid, hi, depth + 1);
        Node& nd = tree.nodes[static_cast<std::size_t>(id)];
        nd.feature = best_f;
        nd.threshold = best_thr;
        nd.left = l;
        nd.right = r;
        nd.decrease = best_gain;
        return id;
    }
};

}  // namespace detail

/// CART regression trees on bootstrap samples with per-node feature subsampling.
inline RandomForest fit_rf(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const RFConfig& cfg = {},
                           std::uint64_t seed = 0) {
    if (X.rows() != y.size()) throw std::invalid_argument("fit_rf: row mismatch");
    if (X.rows() < 2 * cfg.min_leaf || X.rows() == 0) throw std::invalid_argument("fit_rf: too few rows");
    if (X.cols() == 0) throw std::invalid_argument("fit_rf: no features");
    RandomForest rf;
    rf.config = cfg;
    rf.seed = seed;
    rf.n_features = X.cols();
    const int d = static_cast<int>(X.cols());
    const int mtry = std::clamp(static_cast<int>(std::floor(cfg.feature_fraction * d)), 1, d);
    const auto n = static_cast<std::size_t>(X.rows());
    for (int t = 0; t < cfg.n_trees; ++t) {
        std::mt19937_64 rng(prob::derive_seed(seed, static_cast<std::uint64_t>(t)));
        std::vector<int> idx(n);
        if (cfg.bootstrap) {
            for (auto& i : idx) i = static_cast<int>(rng() % n);
        } else {
            std::iota(idx.begin(), idx.end(), 0);
        }
        detail::Builder b{X, y, cfg, rng, mtry, {}, {}, {}};
        b.feats.resize(static_cast<std::size_t>(d));
        std::iota(b.feats.begin(), b.feats.end(), 0);
        b.build(idx, 0, n, 0);
        rf.trees.push_back(std::move(b.tree));
    }
    return rf;
}

inline Eigen::VectorXd predict(const RandomForest& rf, const Eigen::MatrixXd& X) {
    if (X.cols() != rf.n_features) throw std::invalid_argument("rf predict: feature dimension mismatch");
    Eigen::VectorXd out(X.rows());
    std::vector<double> row(static_cast<std::size_t>(X.cols()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (Eigen::Index j = 0; j < X.cols(); ++j) row[static_cast<std::size_t>(j)] = X(i, j);
        double s = 0.0;
        for (const auto& t : rf.trees) s += t.predict(row);
        out[i] = s / static_cast<double>(rf.trees.size());
    }
    return out;
}

inline double r2_score(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
    const double mean = y.mean();
    const double ss_tot = (y.array() - mean).square().sum();
    const double ss_res = (y - yhat).squaredNorm();
    return ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
}

// ============================================================================
// Importance heuristics
// ============================================================================

/// Column sets treated as one feature (a categorical's one-hot columns).
using Groups = std::vector<std::vector<int>>;

inline Groups singleton_groups(Eigen::Index d) {
    Groups g;
    for (int j = 0; j < static_cast<int>(d); ++j) g.push_back({j});
    return g;
}

/// Groups from per-column group labels, in order of first appearance.
inline Groups groups_from_labels(const std::vector<std::string>& labels, std::vector<std::string>* names = nullptr) {
    Groups g;
    std::vector<std::string> seen;
    for (std::size_t j = 0; j < labels.size(); ++j) {
        const auto it = std::find(seen.begin(), seen.end(), labels[j]);
        if (it == seen.end()) {
            seen.push_back(labels[j]);
            g.push_back({static_cast<int>(j)});
        } else {
            g[static_cast<std::size_t>(it - seen.begin())].push_back(static_cast<int>(j));
        }
    }
    if (names) *names = seen;
    return g;
}

/// Mean impurity decrease per column, normalised to sum 1 (all zero when no
/// tree ever split).
inline Eigen::VectorXd gini_importance(const RandomForest& rf) {
    Eigen::VectorXd imp = Eigen::VectorXd::Zero(rf.n_features);
    for (const auto& t : rf.trees) {
        const double root_n = t.nodes.front().n;
        for (const auto& nd : t.nodes)
            if (nd.feature >= 0) imp[nd.feature] += nd.decrease / root_n;
    }
    imp /= static_cast<double>(std::max<std::size_t>(rf.trees.size(), 1));
    const double s = imp.sum();
    if (s > 0.0) imp /= s;
    return imp;
}

inline Eigen::VectorXd group_sum(const Eigen::VectorXd& per_column, const Groups& groups) {
    Eigen::VectorXd g(static_cast<Eigen::Index>(groups.size()));
    for (std::size_t k = 0; k < groups.size(); ++k) {
        double s = 0.0;
        for (int j : groups[k]) s += per_column[j];
        g[static_cast<Eigen::Index>(k)] = s;
    }
    return g;
}

struct PermutationResult {
    Eigen::VectorXd mean;     ///< per group, mean drop in R^2
    Eigen::VectorXd two_std;  ///< per group, two sample standard deviations
    int repeats = 0;
};

inline constexpr int kPermutationRepeats = 10;

/// Drop in held-out R^2 when a group's columns are shuffled jointly across rows.
inline PermutationResult permutation_importance(const RandomForest& rf, const Eigen::MatrixXd& X,
                                                const Eigen::VectorXd& y, const Groups& groups,
                                                int n_rep = kPermutationRepeats, std::uint64_t seed = 0) {
    if (X.rows() < 20) throw std::invalid_argument("permutation_importance: need at least 20 test rows");
    const double base = r2_score(y, predict(rf, X));
    PermutationResult r;
    r.repeats = n_rep;
    r.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(groups.size()));
    r.two_std = r.mean;
    for (std::size_t k = 0; k < groups.size(); ++k) {
        std::vector<double> d;
        for (int rep = 0; rep < n_rep; ++rep) {
            std::mt19937_64 rng(prob::derive_seed(prob::derive_seed(seed, k), static_cast<std::uint64_t>(rep)));
            std::vector<Eigen::Index> perm(static_cast<std::size_t>(X.rows()));
            std::iota(perm.begin(), perm.end(), 0);
            prob::shuffle(perm, rng);
            Eigen::MatrixXd Xp = X;
            for (int j : groups[k])
                for (Eigen::Index i = 0; i < X.rows(); ++i) Xp(i, j) = X(perm[static_cast<std::size_t>(i)], j);
            d.push_back(base - r2_score(y, predict(rf, Xp)));
        }
        const double m = std::accumulate(d.begin(), d.end(), 0.0) / n_rep;
        double ss = 0.0;
        for (double v : d) ss += (v - m) * (v - m);
        r.mean[static_cast<Eigen::Index>(k)] = m;
        r.two_std[static_cast<Eigen::Index>(k)] = n_rep > 1 ? 2.0 * std::sqrt(ss / (n_rep - 1)) : 0.0;
    }
    return r;
}

inline Eigen::MatrixXd drop_columns(const Eigen::MatrixXd& X, const std::vector<int>& cols) {
    std::vector<int> keep;
    for (int j = 0; j < static_cast<int>(X.cols()); ++j)
        if (std::find(cols.begin(), cols.end(), j) == cols.end()) keep.push_back(j);
    Eigen::MatrixXd out(X.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = X.col(keep[c]);
    return out;
}

/// R^2_full - R^2 after retraining without each group (same seed).
inline Eigen::VectorXd drop_column_importance(const Eigen::MatrixXd& Xtr, const Eigen::VectorXd& ytr,
                                              const Eigen::MatrixXd& Xte, const Eigen::VectorXd& yte,
                                              const Groups& groups, const RFConfig& cfg = {},
                                              std::uint64_t seed = 0, double* r2_full = nullptr) {
    if (groups.size() < 2) throw std::invalid_argument("drop_column_importance: need at least two features");
    const double full = r2_score(yte, predict(fit_rf(Xtr, ytr, cfg, seed), Xte));
    if (r2_full) *r2_full = full;
    Eigen::VectorXd out(static_cast<Eigen::Index>(groups.size()));
    for (std::size_t k = 0; k < groups.size(); ++k) {
        const auto rf = fit_rf(drop_columns(Xtr, groups[k]), ytr, cfg, seed);
        out[static_cast<Eigen::Index>(k)] = full - r2_score(yte, predict(rf, drop_columns(Xte, groups[k])));
    }
    return out;
}

// ============================================================================
// Study
// ============================================================================

struct FIReport {
    std::string target;
    std::vector<std::string> features;   ///< original features (groups)
    std::vector<std::string> columns;    ///< encoded columns
    Eigen::VectorXd gini_column;
    Eigen::VectorXd gini;
    PermutationResult permutation;
    Eigen::VectorXd drop;
    double r2_test = 0.0;

    /// Feature indices ordered by decreasing score.
    static std::vector<std::size_t> ranking(const Eigen::VectorXd& s) {
        std::vector<std::size_t> o(static_cast<std::size_t>(s.size()));
        std::iota(o.begin(), o.end(), 0);
        std::stable_sort(o.begin(), o.end(), [&](std::size_t a, std::size_t b) { return s[static_cast<Eigen::Index>(a)] > s[static_cast<Eigen::Index>(b)]; });
        return o;
    }
    /// Rank (0 = most important) of a feature under each heuristic.
    std::array<int, 3> rank_of(const std::string& feature) const {
        const auto it = std::find(features.begin(), features.end(), feature);
        if (it == features.end()) throw std::invalid_argument("FIReport: unknown feature '" + feature + "'");
        const auto k = static_cast<std::size_t>(it - features.begin());
        std::array<int, 3> r{};
        const Eigen::VectorXd* s[3] = {&gini, &permutation.mean, &drop};
        for (int h = 0; h < 3; ++h) {
            const auto o = ranking(*s[h]);
            r[static_cast<std::size_t>(h)] = static_cast<int>(std::find(o.begin(), o.end(), k) - o.begin());
        }
        return r;
    }
};

struct StudyOptions {
    RFConfig rf;
    double train_fraction = 0.8;
    int permutation_repeats = kPermutationRepeats;
    std::uint64_t seed = 0;
};

/// Seeded train/test split of row indices.
inline std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> split_rows(Eigen::Index n, double train_fraction,
                                                                                  std::uint64_t seed) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    prob::shuffle(idx, rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    std::vector<Eigen::Index> tr(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<Eigen::Index> te(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    std::sort(tr.begin(), tr.end());
    std::sort(te.begin(), te.end());
    return {tr, te};
}

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X, const std::vector<Eigen::Index>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
    return out;
}

/// One report per target column of Y (named by `targets`).
inline std::vector<FIReport> run_fi_study(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                                          const std::vector<std::string>& columns,
                                          const std::vector<std::string>& column_groups,
                                          const std::vector<std::string>& targets, const StudyOptions& opt = {}) {
    if (static_cast<Eigen::Index>(columns.size()) != X.cols() || column_groups.size() != columns.size()) {
        throw std::invalid_argument("run_fi_study: column labels do not match the design matrix");
    }
    if (static_cast<Eigen::Index>(targets.size()) != Y.cols()) {
        throw std::invalid_argument("run_fi_study: target names do not match Y");
    }
    std::vector<std::string> names;
    const Groups groups = groups_from_labels(column_groups, &names);
    const auto [tr, te] = split_rows(X.rows(), opt.train_fraction, prob::derive_seed(opt.seed, 0));
    const Eigen::MatrixXd Xtr = take_rows(X, tr), Xte = take_rows(X, te);
    std::vector<FIReport> out;
    for (Eigen::Index t = 0; t < Y.cols(); ++t) {
        const Eigen::VectorXd y = Y.col(t);
        const Eigen::VectorXd ytr = take_rows(y, tr), yte = take_rows(y, te);
        const std::uint64_t s = prob::derive_seed(opt.seed, static_cast<std::uint64_t>(t + 1));
        FIReport r;
        r.target = targets[static_cast<std::size_t>(t)];
        r.features = names;
        r.columns = columns;
        const auto rf = fit_rf(Xtr, ytr, opt.rf, s);
        r.r2_test = r2_score(yte, predict(rf, Xte));
        r.gini_column = gini_importance(rf);
        r.gini = group_sum(r.gini_column, groups);
        r.permutation = permutation_importance(rf, Xte, yte, groups, opt.permutation_repeats, prob::derive_seed(s, 1));
        r.drop = drop_column_importance(Xtr, ytr, Xte, yte, groups, opt.rf, s);
        out.push_back(std::move(r));
    }
    return out;
}

/// Rows: feature, heuristic, target, value, spread.
inline void write_fi_csv(std::ostream& os, const std::vector<FIReport>& reports) {
    os << "feature,heuristic,target,value,spread\n";
    char buf[256];
    for (const auto& r : reports) {
        for (std::size_t k = 0; k < r.features.size(); ++k) {
            const auto i = static_cast<Eigen::Index>(k);
            const char* f = r.features[k].c_str();
            const char* t = r.target.c_str();
            std::snprintf(buf, sizeof buf, "%s,gini,%s,%.9g,0\n", f, t, r.gini[i]);
            os << buf;
            std::snprintf(buf, sizeof buf, "%s,permutation,%s,%.9g,%.9g\n", f, t, r.permutation.mean[i],
                          r.permutation.two_std[i]);
            os << buf;
            std::snprintf(buf, sizeof buf, "%s,drop_column,%s,%.9g,0\n", f, t, r.drop[i]);
            os << buf;
        }
    }
}

}  // namespace piml::fi
