// Gaussian baseline, seeded sampling and deep-ensemble tests
#include <piml/deep_ensemble.hpp>
#include <piml/prob.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

using namespace piml;

namespace {

Eigen::MatrixXd mvn_draws(const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov, int n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    const Eigen::MatrixXd L = cov.llt().matrixL();
    Eigen::MatrixXd Y(n, mu.size());
    Eigen::VectorXd e(mu.size());
    for (int i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < e.size(); ++j) e[j] = z(rng);
        Y.row(i) = (mu + L * e).transpose();
    }
    return Y;
}

Eigen::MatrixXd test_cov() {
    Eigen::MatrixXd c(3, 3);
    c << 4.0, 1.2, -0.6, 1.2, 2.0, 0.3, -0.6, 0.3, 1.0;
    return c;
}

}  // namespace

TEST(Seeds, DeriveSeedSeparatesStreams) {
    EXPECT_NE(prob::derive_seed(1, 0), prob::derive_seed(1, 1));
    EXPECT_NE(prob::derive_seed(1, 0), prob::derive_seed(2, 0));
    EXPECT_EQ(prob::derive_seed(7, 3), prob::derive_seed(7, 3));
}

TEST(Seeds, NormalMoments) {
    prob::Normal z(42);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = z();
        s += v;
        s2 += v * v;
    }
    EXPECT_NEAR(s / n, 0.0, 4.0 / std::sqrt(n));
    EXPECT_NEAR(s2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
}

TEST(Seeds, ShuffleIsPermutation) {
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[static_cast<std::size_t>(i)] = i;
    std::mt19937_64 rng(3);
    prob::shuffle(v, rng);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);
    EXPECT_NE(v, sorted);
}

TEST(Scaler, StandardisesColumns) {
    Eigen::MatrixXd Y(4, 2);
    Y << 1, 10, 2, 10, 3, 10, 4, 10;
    const auto s = prob::TargetScaler::fit(Y);
    const Eigen::MatrixXd Z = s.forward(Y);
    EXPECT_NEAR(Z.col(0).mean(), 0.0, 1e-15);
    EXPECT_NEAR(Z.col(0).squaredNorm() / 4.0, 1.0, 1e-14);
    EXPECT_DOUBLE_EQ(s.scale[1], 1.0);
    EXPECT_DOUBLE_EQ(Z(2, 1), 0.0);
}

TEST(Baseline, TwoPointExample) {
    Eigen::MatrixXd Y(2, 1);
    Y << -1.0, 1.0;
    const auto b = prob::fit_baseline(Y);
    EXPECT_DOUBLE_EQ(b.mean[0], 0.0);
    EXPECT_NEAR(b.covariance(0, 0), 1.0, 1e-8);
}

TEST(Baseline, RecoversMultivariateNormal) {
    const Eigen::VectorXd mu = Eigen::Vector3d(1.0, -2.0, 0.5);
    const Eigen::MatrixXd cov = test_cov();
    const int n = 20000;
    const auto b = prob::fit_baseline(mvn_draws(mu, cov, n, 11));
    for (int i = 0; i < 3; ++i) {
        EXPECT_NEAR(b.mean[i], mu[i], 3.0 * std::sqrt(cov(i, i) / n));
        for (int j = 0; j < 3; ++j) {
            const double se = std::sqrt((cov(i, j) * cov(i, j) + cov(i, i) * cov(j, j)) / n);
            EXPECT_NEAR(b.covariance(i, j), cov(i, j), 3.0 * se);
        }
    }
}

TEST(Baseline, MleMatchesSampleMoments) {
    const Eigen::MatrixXd Y = mvn_draws(Eigen::Vector3d::Zero(), test_cov(), 100, 5);
    const auto b = prob::fit_baseline(Y);
    const Eigen::VectorXd m = Y.colwise().mean().transpose();
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(3, 3);
    for (int i = 0; i < 100; ++i) {
        const Eigen::VectorXd r = Y.row(i).transpose() - m;
        c += r * r.transpose() / 100.0;
    }
    EXPECT_LT((b.mean - m).norm(), 1e-12);
    EXPECT_LT((b.covariance - c).norm(), 1e-8);
}

TEST(Baseline, TooFewSamplesThrows) {
    EXPECT_THROW(prob::fit_baseline(Eigen::MatrixXd::Zero(3, 3)), std::invalid_argument);
}

TEST(Baseline, NllMatchesDensity) {
    const auto b = prob::fit_baseline(mvn_draws(Eigen::Vector3d::Zero(), test_cov(), 500, 8));
    Eigen::MatrixXd y(1, 3);
    y << 0.3, -0.2, 0.9;
    const Eigen::VectorXd r = y.row(0).transpose() - b.mean;
    const double quad = r.dot(b.covariance.inverse() * r);
    const double ref = 0.5 * (quad + std::log(b.covariance.determinant()) + 3.0 * std::log(2.0 * M_PI));
    EXPECT_NEAR(prob::mean_nll(b, y), ref, 1e-10);
}

TEST(Sampling, BaselineDrawsMatchMoments) {
    const Eigen::VectorXd mu = Eigen::Vector3d(1.0, -2.0, 0.5);
    const auto b = prob::fit_baseline(mvn_draws(mu, test_cov(), 5000, 2));
    const int n = 40000;
    const Eigen::MatrixXd S = prob::sample_y(b, n, 9);
    const Eigen::VectorXd m = S.colwise().mean().transpose();
    for (int i = 0; i < 3; ++i)
        EXPECT_NEAR(m[i], b.mean[i], 4.0 * std::sqrt(b.covariance(i, i) / n));
    const Eigen::MatrixXd c = (S.rowwise() - m.transpose()).transpose() * (S.rowwise() - m.transpose()) / n;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            const double se = std::sqrt((b.covariance(i, j) * b.covariance(i, j) +
                                         b.covariance(i, i) * b.covariance(j, j)) / n);
            EXPECT_NEAR(c(i, j), b.covariance(i, j), 4.0 * se);
        }
}

TEST(Sampling, SameSeedSameDraws) {
    prob::PredictiveDistribution d{Eigen::Vector2d(1.0, 2.0), Eigen::Vector2d(0.5, 3.0)};
    EXPECT_EQ(prob::sample_y(d, 10, 4), prob::sample_y(d, 10, 4));
    EXPECT_NE(prob::sample_y(d, 10, 4), prob::sample_y(d, 10, 5));
    EXPECT_THROW(prob::sample_y(d, 0, 4), std::invalid_argument);
}

TEST(Sampling, IndependentDrawsMatchMoments) {
    prob::PredictiveDistribution d{Eigen::Vector2d(1.0, -4.0), Eigen::Vector2d(0.5, 3.0)};
    const int n = 100000;
    const Eigen::MatrixXd S = prob::sample_y(d, n, 1);
    for (int j = 0; j < 2; ++j) {
        const double m = S.col(j).mean();
        const double sd = std::sqrt((S.col(j).array() - m).square().mean());
        EXPECT_NEAR(m, d.mean[j], 4.0 * d.std[j] / std::sqrt(n));
        EXPECT_NEAR(sd, d.std[j], 4.0 * d.std[j] / std::sqrt(2.0 * n));
    }
}

TEST(Adam, MinimisesQuadratic) {
    Eigen::VectorXd p = Eigen::Vector2d(3.0, -2.0);
    prob::Adam adam(2, 0.05);
    for (int i = 0; i < 2000; ++i) {
        const Eigen::VectorXd g = 2.0 * (p - Eigen::Vector2d(1.0, 1.0));
        adam.step(p, g);
    }
    EXPECT_NEAR(p[0], 1.0, 1e-3);
    EXPECT_NEAR(p[1], 1.0, 1e-3);
}

// ---------------------------------------------------------------------------
// Deep ensembles

TEST(Mixture, MatchesMonteCarlo) {
    Eigen::MatrixXd mu(2, 3), var(2, 3);
    mu << -1.0, 0.5, 2.0, 10.0, 12.0, 9.0;
    var << 0.25, 1.0, 0.5, 4.0, 0.1, 2.0;
    const auto d = de::mixture_moments(mu, var);
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> pick(0, 2);
    std::normal_distribution<double> z;
    const int n = 1000000;
    for (int i = 0; i < 2; ++i) {
        double s = 0.0, s2 = 0.0;
        for (int k = 0; k < n; ++k) {
            const int c = pick(rng);
            const double v = mu(i, c) + std::sqrt(var(i, c)) * z(rng);
            s += v;
            s2 += v * v;
        }
        const double m = s / n;
        const double sd = std::sqrt(s2 / n - m * m);
        EXPECT_NEAR(d.mean[i], m, 0.01 * std::abs(m) + 0.01 * sd);
        EXPECT_NEAR(d.std[i], sd, 0.01 * sd);
    }
}

TEST(Mixture, IdenticalMembersHaveNoDiscrepancy) {
    Eigen::MatrixXd mu = Eigen::MatrixXd::Constant(1, 5, 0.3);
    Eigen::MatrixXd var = Eigen::MatrixXd::Constant(1, 5, 0.7);
    const auto d = de::mixture_moments(mu, var);
    EXPECT_EQ(d.mean[0], mu.sum() / 5.0);
    EXPECT_EQ(d.std[0], std::sqrt(0.0 + var.sum() / 5.0));
}

TEST(Mixture, TwoPointMembers) {
    Eigen::MatrixXd mu(1, 2), var = Eigen::MatrixXd::Zero(1, 2);
    mu << -1.0, 1.0;
    const auto d = de::mixture_moments(mu, var);
    EXPECT_DOUBLE_EQ(d.mean[0], 0.0);
    EXPECT_DOUBLE_EQ(d.std[0], 1.0);
}

TEST(DeepEnsemble, NllGradientMatchesFiniteDifferences) {
    const auto net0 = de::init_mlp({3, 5, 4, 4}, 21);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> z;
    Eigen::MatrixXd X(3, 7), Y(2, 7);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = z(rng);
    for (Eigen::Index i = 0; i < Y.size(); ++i) Y.data()[i] = z(rng);
    de::Mlp net = net0;
    for (Eigen::Index i = 0; i < net.params.size(); ++i) net.params[i] += 0.1 * z(rng);
    Eigen::VectorXd g;
    de::detail::nll(net, X, Y, 1e-6, &g);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < net.params.size(); ++i) {
        de::Mlp a = net, b = net;
        a.params[i] += h;
        b.params[i] -= h;
        const double fd = (de::detail::nll(a, X, Y, 1e-6, nullptr) - de::detail::nll(b, X, Y, 1e-6, nullptr)) / (2 * h);
        EXPECT_NEAR(g[i], fd, 1e-6 * std::max(1.0, std::abs(fd))) << "param " << i;
    }
}

namespace {

struct SineData {
    Eigen::MatrixXd X, Y;
};

SineData sine(int n, double noise, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> z(0.0, noise);
    SineData d{Eigen::MatrixXd(n, 1), Eigen::MatrixXd(n, 1)};
    for (int i = 0; i < n; ++i) {
        d.X(i, 0) = u(rng);
        d.Y(i, 0) = std::sin(2.0 * M_PI * d.X(i, 0)) + z(rng);
    }
    return d;
}

de::DEConfig small_config() {
    de::DEConfig c;
    c.members = 3;
    c.hidden = {32, 32};
    c.epochs = 150;
    c.batch = 32;
    c.learning_rate = 3e-3;
    c.seed = 5;
    return c;
}

}  // namespace

TEST(DeepEnsemble, FitsNoisySine) {
    const double noise = 0.1;
    const auto train = sine(600, noise, 1);
    const auto test = sine(400, noise, 2);
    const auto e = de::fit_de(train.X, train.Y, small_config());
    double se = 0.0;
    for (int i = 0; i < 400; ++i) {
        const double r = de::de_predict(e, test.X.row(i).transpose()).mean[0] - test.Y(i, 0);
        se += r * r;
    }
    EXPECT_LT(std::sqrt(se / 400.0), 1.5 * noise);
    for (const auto& m : e.members) {
        ASSERT_EQ(m.loss_history.size(), 150u);
        EXPECT_LT(m.loss_history.back(), m.loss_history.front());
    }
}

TEST(DeepEnsemble, Deterministic) {
    const auto d = sine(100, 0.1, 3);
    auto cfg = small_config();
    cfg.epochs = 5;
    const auto a = de::fit_de(d.X, d.Y, cfg);
    const auto b = de::fit_de(d.X, d.Y, cfg);
    ASSERT_EQ(a.members.size(), b.members.size());
    for (std::size_t k = 0; k < a.members.size(); ++k) EXPECT_EQ(a.members[k].net.params, b.members[k].net.params);
    EXPECT_NE(a.members[0].net.params, a.members[1].net.params);
}

TEST(DeepEnsemble, ConstantTarget) {
    Eigen::MatrixXd X(60, 2), Y = Eigen::MatrixXd::Constant(60, 1, 7.5);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> z;
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = z(rng);
    auto cfg = small_config();
    cfg.epochs = 50;
    const auto e = de::fit_de(X, Y, cfg);
    const auto p = de::de_predict(e, X.row(0).transpose());
    EXPECT_TRUE(p.mean.allFinite());
    EXPECT_TRUE(p.std.allFinite());
    EXPECT_NEAR(p.mean[0], 7.5, 0.1);
}

TEST(DeepEnsemble, DivergedMembersReported) {
    const auto d = sine(30, 0.1, 3);
    Eigen::MatrixXd Y = d.Y;
    Y(4, 0) = std::numeric_limits<double>::quiet_NaN();
    auto cfg = small_config();
    cfg.epochs = 2;
    EXPECT_THROW(de::fit_de(d.X, Y, cfg), std::runtime_error);
}

TEST(DeepEnsemble, DimensionMismatchThrows) {
    const auto d = sine(30, 0.1, 3);
    auto cfg = small_config();
    cfg.epochs = 1;
    const auto e = de::fit_de(d.X, d.Y, cfg);
    EXPECT_THROW(de::de_predict(e, Eigen::Vector2d(0.1, 0.2)), std::invalid_argument);
}
