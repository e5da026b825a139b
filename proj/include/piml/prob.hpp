// Shared pieces of the conditional models over reduced-order weights: the
// per-component Gaussian predictive distribution, target scaling, the
// full-covariance Gaussian baseline, seeded sampling and an Adam optimiser.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace piml::prob {

/// SplitMix64 finaliser; derives independent seeds from (seed, stream).
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(seed ^ splitmix64(stream + 0x5851f42d4c957f2dULL));
}

/// Standard normal draws via Box-Muller on the raw 64-bit engine output, so
/// the sequence does not depend on the standard library's distribution code.
class Normal {
public:
    explicit Normal(std::uint64_t seed) : rng_(seed) {}
    double operator()() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open();
        const double u2 = uniform_open();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }
    double uniform_open() { return (static_cast<double>(rng_() >> 11) + 0.5) * 0x1.0p-53; }
    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Deterministic Fisher-Yates shuffle (engine-only, portable across libraries).
template <class T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(v[i - 1], v[j]);
    }
}

// ============================================================================
// Predictive distribution
// ============================================================================

/// Independent Gaussians per weight component.
struct PredictiveDistribution {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;
};

/// Rows of the returned matrix are independent draws.
inline Eigen::MatrixXd sample_y(const PredictiveDistribution& d, int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample_y: n must be >= 1");
    Normal z(seed);
    Eigen::MatrixXd out(n, d.mean.size());
    for (int i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d.mean.size(); ++j) out(i, j) = d.mean[j] + d.std[j] * z();
    return out;
}

/// Per-column affine standardisation of targets.
struct TargetScaler {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;

    static TargetScaler fit(const Eigen::MatrixXd& Y) {
        TargetScaler s;
        s.mean = Y.colwise().mean().transpose();
        s.scale.resize(Y.cols());
        for (Eigen::Index j = 0; j < Y.cols(); ++j) {
            const double sd = std::sqrt((Y.col(j).array() - s.mean[j]).square().mean());
            s.scale[j] = sd > 1e-12 * std::max(1.0, std::abs(s.mean[j])) ? sd : 1.0;
        }
        return s;
    }
    Eigen::MatrixXd forward(const Eigen::MatrixXd& Y) const {
        return (Y.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
    }
};

// ============================================================================
// Gaussian baseline
// ============================================================================

/// Unconditional multivariate normal over the weights.
struct GaussianBaseline {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
    Eigen::MatrixXd chol;  ///< lower Cholesky factor of covariance

    PredictiveDistribution predict() const {
        return {mean, covariance.diagonal().cwiseSqrt()};
    }
};

/// Closed-form maximum likelihood with a small diagonal jitter.
inline GaussianBaseline fit_baseline(const Eigen::MatrixXd& Y) {
    const Eigen::Index n = Y.rows(), ny = Y.cols();
    if (n < ny + 1) throw std::invalid_argument("fit_baseline: need at least n_y + 1 samples");
    GaussianBaseline b;
    b.mean = Y.colwise().mean().transpose();
    const Eigen::MatrixXd c = Y.rowwise() - b.mean.transpose();
    b.covariance = (c.transpose() * c) / static_cast<double>(n);
    b.covariance = 0.5 * (b.covariance + b.covariance.transpose()).eval();
    const double tr = b.covariance.trace();
    double jitter = 1e-9 * tr / static_cast<double>(ny);
    if (!(jitter > 0.0)) jitter = 1e-12;
    b.covariance.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(b.covariance);
    if (llt.info() != Eigen::Success) throw std::runtime_error("fit_baseline: covariance not PD");
    b.chol = llt.matrixL();
    return b;
}

inline Eigen::MatrixXd sample_y(const GaussianBaseline& b, int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample_y: n must be >= 1");
    Normal z(seed);
    Eigen::MatrixXd out(n, b.mean.size());
    Eigen::VectorXd e(b.mean.size());
    for (int i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < e.size(); ++j) e[j] = z();
        out.row(i) = (b.mean + b.chol * e).transpose();
    }
    return out;
}

/// Mean negative log-likelihood of the rows of Y.
inline double mean_nll(const GaussianBaseline& b, const Eigen::MatrixXd& Y) {
    const Eigen::Index ny = b.mean.size();
    const double logdet = 2.0 * b.chol.diagonal().array().log().sum();
    double s = 0.0;
    for (Eigen::Index i = 0; i < Y.rows(); ++i) {
        const Eigen::VectorXd r = Y.row(i).transpose() - b.mean;
        const Eigen::VectorXd z = b.chol.triangularView<Eigen::Lower>().solve(r);
        s += 0.5 * (z.squaredNorm() + logdet + static_cast<double>(ny) * std::log(2.0 * M_PI));
    }
    return s / static_cast<double>(Y.rows());
}

// ============================================================================
// Adam
// ============================================================================

/// Adam on a flat parameter vector (minimisation).
class Adam {
public:
    Adam(Eigen::Index n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)), lr_(lr), b1_(beta1),
          b2_(beta2), eps_(eps) {}

    void step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grad) {
        ++t_;
        m_ = b1_ * m_ + (1.0 - b1_) * grad;
        v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
    }

private:
    Eigen::VectorXd m_, v_;
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
};

}  // namespace piml::prob
