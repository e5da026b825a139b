// Random forest and feature-importance tests
#include <piml/fi.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <random>

using namespace piml;
using namespace piml::fi;

namespace {

struct Data {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
};

// y = f(x) + noise with standard normal features.
Data make_data(int n, int d, unsigned seed, const std::function<double(const Eigen::RowVectorXd&)>& f,
               double noise = 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    Data out{Eigen::MatrixXd(n, d), Eigen::VectorXd(n)};
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) out.X(i, j) = z(rng);
        out.y[i] = f(out.X.row(i)) + noise * z(rng);
    }
    return out;
}

// Exhaustive CART: best squared-error split over every feature and every
// midpoint, recursing until nodes are pure or cannot be split.
struct Cart {
    const Eigen::MatrixXd& X;
    const Eigen::VectorXd& y;
    int min_leaf;

    double predict(const std::vector<int>& idx, const Eigen::RowVectorXd& x) const {
        double sum = 0.0;
        for (int i : idx) sum += y[i];
        const double mean = sum / static_cast<double>(idx.size());
        double best = 0.0, thr = 0.0;
        int bf = -1;
        const double parent = [&] {
            double s = 0.0;
            for (int i : idx) s += (y[i] - mean) * (y[i] - mean);
            return s;
        }();
        for (int f = 0; f < X.cols(); ++f) {
            for (int a : idx) {
                for (int b : idx) {
                    if (!(X(a, f) < X(b, f))) continue;
                    const double t = 0.5 * (X(a, f) + X(b, f));
                    // only adjacent value pairs define distinct candidate splits
                    bool adjacent = true;
                    for (int c : idx)
                        if (X(c, f) > X(a, f) && X(c, f) < X(b, f)) adjacent = false;
                    if (!adjacent) continue;
                    std::vector<int> l, r;
                    for (int c : idx) (X(c, f) <= t ? l : r).push_back(c);
                    if (static_cast<int>(l.size()) < min_leaf || static_cast<int>(r.size()) < min_leaf) continue;
                    double sse = 0.0;
                    for (const auto* side : {&l, &r}) {
                        double m = 0.0;
                        for (int c : *side) m += y[c];
                        m /= static_cast<double>(side->size());
                        for (int c : *side) sse += (y[c] - m) * (y[c] - m);
                    }
                    const double gain = parent - sse;
                    if (gain > best + 1e-12) {
                        best = gain;
                        bf = f;
                        thr = t;
                    }
                }
            }
        }
        if (bf < 0) return mean;
        std::vector<int> l, r;
        for (int c : idx) (X(c, bf) <= thr ? l : r).push_back(c);
        return predict(x[bf] <= thr ? l : r, x);
    }
};

}  // namespace

TEST(RandomForest, SingleTreeMatchesBruteForceCart) {
    const auto d = make_data(20, 3, 1, [](const Eigen::RowVectorXd& x) { return x[0] + 2.0 * x[1] * x[1] - x[2]; });
    RFConfig cfg;
    cfg.n_trees = 1;
    cfg.bootstrap = false;
    cfg.feature_fraction = 1.0;
    cfg.min_leaf = 2;
    const auto rf = fit_rf(d.X, d.y, cfg, 3);
    std::vector<int> all(20);
    for (int i = 0; i < 20; ++i) all[static_cast<std::size_t>(i)] = i;
    Cart cart{d.X, d.y, 2};
    const auto probe = make_data(50, 3, 2, [](const Eigen::RowVectorXd&) { return 0.0; });
    const Eigen::VectorXd p = predict(rf, probe.X);
    for (int i = 0; i < 50; ++i) EXPECT_NEAR(p[i], cart.predict(all, probe.X.row(i)), 1e-12) << "probe " << i;
}

TEST(RandomForest, StepFunctionIsLearnt) {
    auto f = [](const Eigen::RowVectorXd& x) { return x[0] > 0.3 ? 5.0 : -1.0; };
    const auto tr = make_data(2000, 3, 4, f, 0.1);
    const auto te = make_data(500, 3, 5, f, 0.1);
    RFConfig cfg;
    cfg.n_trees = 50;
    const auto rf = fit_rf(tr.X, tr.y, cfg, 1);
    EXPECT_GT(r2_score(te.y, predict(rf, te.X)), 0.95);
}

TEST(RandomForest, ConstantTargetGivesConstantPredictions) {
    Data d{Eigen::MatrixXd::Random(40, 2), Eigen::VectorXd::Constant(40, 3.25)};
    RFConfig cfg;
    cfg.n_trees = 10;
    const auto rf = fit_rf(d.X, d.y, cfg, 0);
    const Eigen::VectorXd p = predict(rf, Eigen::MatrixXd::Random(7, 2));
    for (Eigen::Index i = 0; i < p.size(); ++i) EXPECT_DOUBLE_EQ(p[i], 3.25);
    for (const auto& t : rf.trees) EXPECT_EQ(t.nodes.size(), 1u);
}

TEST(RandomForest, SameSeedSameForest) {
    const auto d = make_data(200, 4, 6, [](const Eigen::RowVectorXd& x) { return x[1]; }, 0.5);
    RFConfig cfg;
    cfg.n_trees = 20;
    const auto a = fit_rf(d.X, d.y, cfg, 9);
    const auto b = fit_rf(d.X, d.y, cfg, 9);
    EXPECT_EQ(predict(a, d.X), predict(b, d.X));
    const auto c = fit_rf(d.X, d.y, cfg, 10);
    EXPECT_NE(predict(a, d.X), predict(c, d.X));
}

TEST(RandomForest, NodesAreConsistent) {
    const auto d = make_data(300, 3, 7, [](const Eigen::RowVectorXd& x) { return x[0] * x[1]; }, 0.2);
    RFConfig cfg;
    cfg.n_trees = 10;
    const auto rf = fit_rf(d.X, d.y, cfg, 2);
    for (const auto& t : rf.trees) {
        for (const auto& nd : t.nodes) {
            EXPECT_GE(nd.decrease, 0.0);
            EXPECT_GE(nd.n, cfg.min_leaf);
            if (nd.feature >= 0) {
                EXPECT_EQ(nd.n, t.nodes[static_cast<std::size_t>(nd.left)].n + t.nodes[static_cast<std::size_t>(nd.right)].n);
            }
        }
    }
}

TEST(Gini, SingleFeatureGetsEverything) {
    const auto d = make_data(200, 1, 8, [](const Eigen::RowVectorXd& x) { return std::sin(x[0]); }, 0.1);
    RFConfig cfg;
    cfg.n_trees = 20;
    const auto g = gini_importance(fit_rf(d.X, d.y, cfg, 1));
    EXPECT_DOUBLE_EQ(g[0], 1.0);
}

TEST(Gini, NoiseFeatureRanksBelowSignal) {
    for (unsigned s = 0; s < 10; ++s) {
        const auto d = make_data(400, 2, 100 + s, [](const Eigen::RowVectorXd& x) { return 2.0 * x[0]; }, 0.5);
        RFConfig cfg;
        cfg.n_trees = 30;
        const auto g = gini_importance(fit_rf(d.X, d.y, cfg, s));
        EXPECT_NEAR(g.sum(), 1.0, 1e-9);
        EXPECT_LT(g[1], g[0]);
        EXPECT_GE(g.minCoeff(), 0.0);
    }
}

TEST(Permutation, UnusedFeatureIsExactlyZero) {
    auto d = make_data(300, 3, 9, [](const Eigen::RowVectorXd& x) { return x[0]; }, 0.1);
    d.X.col(2).setConstant(1.0);  // never split on
    RFConfig cfg;
    cfg.n_trees = 20;
    const auto rf = fit_rf(d.X, d.y, cfg, 1);
    const auto r = permutation_importance(rf, d.X, d.y, singleton_groups(3), 10, 4);
    EXPECT_EQ(r.mean[2], 0.0);
    EXPECT_EQ(r.two_std[2], 0.0);
    EXPECT_EQ(r.repeats, 10);
}

TEST(Permutation, SoleInformativeFeatureLosesAll) {
    auto f = [](const Eigen::RowVectorXd& x) { return 3.0 * x[0]; };
    const auto tr = make_data(1500, 1, 10, f, 0.1);
    const auto te = make_data(500, 1, 11, f, 0.1);
    RFConfig cfg;
    cfg.n_trees = 30;
    const auto rf = fit_rf(tr.X, tr.y, cfg, 1);
    const double base = r2_score(te.y, predict(rf, te.X));
    const auto r = permutation_importance(rf, te.X, te.y, singleton_groups(1), 10, 2);
    // Shuffled predictions are uncorrelated with y: R^2 falls to about -1.
    EXPECT_GT(r.mean[0], base);
    EXPECT_GT(r.mean[0], 1.5);
}

TEST(Permutation, SameSeedSameReport) {
    const auto d = make_data(200, 3, 12, [](const Eigen::RowVectorXd& x) { return x[0] - x[1]; }, 0.3);
    RFConfig cfg;
    cfg.n_trees = 10;
    const auto rf = fit_rf(d.X, d.y, cfg, 1);
    const auto a = permutation_importance(rf, d.X, d.y, singleton_groups(3), 10, 5);
    const auto b = permutation_importance(rf, d.X, d.y, singleton_groups(3), 10, 5);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.two_std, b.two_std);
}

TEST(Permutation, TooFewRowsThrows) {
    const auto d = make_data(30, 2, 1, [](const Eigen::RowVectorXd& x) { return x[0]; });
    RFConfig cfg;
    cfg.n_trees = 2;
    const auto rf = fit_rf(d.X, d.y, cfg, 1);
    EXPECT_THROW(permutation_importance(rf, d.X.topRows(10), d.y.head(10), singleton_groups(2)), std::invalid_argument);
}

TEST(DropColumn, NoiseAndSignal) {
    auto f = [](const Eigen::RowVectorXd& x) { return 2.0 * x[0]; };
    RFConfig cfg;
    cfg.n_trees = 40;
    cfg.feature_fraction = 1.0;
    for (unsigned s = 0; s < 3; ++s) {
        const auto tr = make_data(800, 2, 20 + s, f, 0.3);
        const auto te = make_data(300, 2, 40 + s, f, 0.3);
        double full = 0.0;
        const auto d = drop_column_importance(tr.X, tr.y, te.X, te.y, singleton_groups(2), cfg, s, &full);
        EXPECT_LT(std::abs(d[1]), 0.05);
        EXPECT_GT(d[0], 0.9 * full);
    }
}

TEST(DropColumn, DuplicatedFeaturesAreRedundant) {
    auto d = make_data(800, 2, 30, [](const Eigen::RowVectorXd& x) { return 2.0 * x[0]; }, 0.3);
    d.X.col(1) = d.X.col(0);
    const auto te0 = make_data(300, 2, 31, [](const Eigen::RowVectorXd& x) { return 2.0 * x[0]; }, 0.3);
    auto te = te0;
    te.X.col(1) = te.X.col(0);
    RFConfig cfg;
    cfg.n_trees = 40;
    cfg.feature_fraction = 1.0;
    const auto imp = drop_column_importance(d.X, d.y, te.X, te.y, singleton_groups(2), cfg, 1);
    EXPECT_LT(std::abs(imp[0]), 0.02);
    EXPECT_LT(std::abs(imp[1]), 0.02);
}

TEST(Groups, FromLabels) {
    std::vector<std::string> names;
    const auto g = groups_from_labels({"op", "op", "fl", "op", "w"}, &names);
    ASSERT_EQ(g.size(), 3u);
    EXPECT_EQ(names, (std::vector<std::string>{"op", "fl", "w"}));
    EXPECT_EQ(g[0], (std::vector<int>{0, 1, 3}));
    EXPECT_EQ(group_sum(Eigen::VectorXd::Ones(5), g), Eigen::Vector3d(3, 1, 1));
}

TEST(Study, PlantedEffectsRankFirst) {
    // Column 0..2: one-hot "op"; 3: driver of target a; 4: driver of target b; 5: noise.
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z;
    const int n = 600;
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, 6), Y(n, 2);
    for (int i = 0; i < n; ++i) {
        X(i, i % 3) = 1.0;
        for (int j = 3; j < 6; ++j) X(i, j) = z(rng);
        Y(i, 0) = 3.0 * X(i, 3) + 0.5 * (i % 3) + 0.3 * z(rng);
        Y(i, 1) = -2.0 * X(i, 4) + 1.0 * (i % 3) + 0.3 * z(rng);
    }
    StudyOptions opt;
    opt.rf.n_trees = 60;
    opt.seed = 5;
    const auto reps = run_fi_study(X, Y, {"op=a", "op=b", "op=other", "fl_max", "wind", "noise"},
                                   {"op", "op", "op", "fl_max", "wind", "noise"}, {"alpha_1", "beta_1"}, opt);
    ASSERT_EQ(reps.size(), 2u);
    EXPECT_EQ(reps[0].features, (std::vector<std::string>{"op", "fl_max", "wind", "noise"}));
    for (int h = 0; h < 3; ++h) {
        EXPECT_EQ(reps[0].rank_of("fl_max")[static_cast<std::size_t>(h)], 0);
        EXPECT_EQ(reps[1].rank_of("wind")[static_cast<std::size_t>(h)], 0);
    }
    EXPECT_EQ(reps[0].permutation.repeats, 10);
    EXPECT_NEAR(reps[0].gini.sum(), 1.0, 1e-9);
}

TEST(Study, NullTargetHasNoSignal) {
    const auto d = make_data(400, 3, 50, [](const Eigen::RowVectorXd&) { return 0.0; }, 1.0);
    StudyOptions opt;
    opt.rf.n_trees = 40;
    Eigen::MatrixXd Y = d.y;
    const auto reps = run_fi_study(d.X, Y, {"a", "b", "c"}, {"a", "b", "c"}, {"t"}, opt);
    for (int k = 0; k < 3; ++k) EXPECT_LT(std::abs(reps[0].permutation.mean[k]), 0.1);
}
