// Gaussian-process regression with a Matern 5/2 ARD kernel, one independent
// GP per weight component. Small problems use the exact marginal likelihood;
// larger ones the collapsed variational bound with fixed inducing inputs.
#pragma once

#include <piml/prob.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace piml::gp {

using prob::PredictiveDistribution;

inline constexpr double kSqrt5 = 2.23606797749978969641;

struct Hyper {
    Eigen::VectorXd log_lengthscale;
    double log_signal = 0.0;  ///< log of the signal variance
    double log_noise = std::log(0.1);
    double mean = 0.0;  ///< constant prior mean

    double signal() const { return std::exp(log_signal); }
    double noise() const { return std::exp(log_noise); }
};

/// k(a, b) for every row pair of A and B.
inline Eigen::MatrixXd matern52(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                const Hyper& h) {
    const Eigen::RowVectorXd inv = (-h.log_lengthscale).array().exp().transpose();
    const Eigen::MatrixXd As = A.array().rowwise() * inv.array();
    const Eigen::MatrixXd Bs = B.array().rowwise() * inv.array();
    const double sf2 = h.signal();
    Eigen::MatrixXd K(A.rows(), B.rows());
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
        for (Eigen::Index i = 0; i < A.rows(); ++i) {
            const double r = (As.row(i) - Bs.row(j)).norm();
            K(i, j) = sf2 * (1.0 + kSqrt5 * r + 5.0 / 3.0 * r * r) * std::exp(-kSqrt5 * r);
        }
    }
    return K;
}

/// Gradient of sum_ij G_ij k(a_i, b_j) with respect to the log lengthscales.
inline Eigen::VectorXd lengthscale_gradient(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                            const Eigen::MatrixXd& G, const Hyper& h) {
    const Eigen::Index d = A.cols();
    const Eigen::RowVectorXd inv = (-h.log_lengthscale).array().exp().transpose();
    const Eigen::MatrixXd As = A.array().rowwise() * inv.array();
    const Eigen::MatrixXd Bs = B.array().rowwise() * inv.array();
    const double sf2 = h.signal();
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(d);
    Eigen::RowVectorXd diff(d);
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
        for (Eigen::Index i = 0; i < A.rows(); ++i) {
            if (G(i, j) == 0.0) continue;
            diff = As.row(i) - Bs.row(j);
            const double r = diff.norm();
            const double f = G(i, j) * sf2 * 5.0 / 3.0 * (1.0 + kSqrt5 * r) * std::exp(-kSqrt5 * r);
            grad += f * diff.transpose().cwiseAbs2();
        }
    }
    return grad;
}

struct GPConfig {
    int iterations = 100;
    double learning_rate = 0.05;
    Eigen::Index exact_max = 2000;  ///< exact likelihood up to this many rows
    Eigen::Index inducing = 128;    ///< inducing inputs in sparse mode (<= 1000)
    double noise_floor = 1e-6;
    double jitter = 1e-8;           ///< relative to the signal variance
    bool optimise = true;
    std::uint64_t seed = 0;
};

/// One output component. Caches are rebuilt from (X, y, Z, hyper).
struct GPComponent {
    Hyper hyper;
    bool sparse = false;
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    Eigen::MatrixXd Z;  ///< inducing inputs (sparse mode)
    double jitter = 1e-8;

    // exact mode
    Eigen::LLT<Eigen::MatrixXd> k_chol;
    Eigen::VectorXd alpha;
    // sparse mode
    Eigen::LLT<Eigen::MatrixXd> p_chol;
    Eigen::LLT<Eigen::MatrixXd> lambda_chol;
    Eigen::VectorXd c;

    void rebuild();
    double predict_mean(const Eigen::RowVectorXd& x, double* var) const;
};

inline void GPComponent::rebuild() {
    const double s2 = hyper.noise();
    const Eigen::VectorXd r = y.array() - hyper.mean;
    if (X.rows() == 0) return;
    if (!sparse) {
        Eigen::MatrixXd K = matern52(X, X, hyper);
        K.diagonal().array() += s2;
        k_chol.compute(K);
        if (k_chol.info() != Eigen::Success) throw std::runtime_error("gp: kernel matrix not PD");
        alpha = k_chol.solve(r);
        return;
    }
    Eigen::MatrixXd P = matern52(Z, Z, hyper);
    P.diagonal().array() += jitter * hyper.signal();
    const Eigen::MatrixXd U = matern52(Z, X, hyper);
    p_chol.compute(P);
    Eigen::MatrixXd L = s2 * P;
    L.noalias() += U * U.transpose();
    lambda_chol.compute(L);
    if (p_chol.info() != Eigen::Success || lambda_chol.info() != Eigen::Success) {
        throw std::runtime_error("gp: inducing matrices not PD");
    }
    c = lambda_chol.solve(U * r);
}

inline double GPComponent::predict_mean(const Eigen::RowVectorXd& x, double* var) const {
    const double sf2 = hyper.signal();
    const double s2 = hyper.noise();
    if (X.rows() == 0) {
        if (var) *var = sf2 + s2;
        return hyper.mean;
    }
    if (!sparse) {
        const Eigen::VectorXd k = matern52(X, x, hyper).col(0);
        if (var) *var = std::max(sf2 - k.dot(k_chol.solve(k)), 0.0) + s2;
        return hyper.mean + k.dot(alpha);
    }
    const Eigen::VectorXd k = matern52(Z, x, hyper).col(0);
    if (var) {
        const Eigen::VectorXd a = p_chol.matrixL().solve(k);
        const Eigen::VectorXd b = lambda_chol.matrixL().solve(k);
        *var = std::max(sf2 - a.squaredNorm() + s2 * b.squaredNorm(), 0.0) + s2;
    }
    return hyper.mean + k.dot(c);
}

// ============================================================================
// Objectives
// ============================================================================

/// Parameter layout: [log lengthscales, log signal, log noise, mean].
inline Eigen::VectorXd pack(const Hyper& h) {
    const Eigen::Index d = h.log_lengthscale.size();
    Eigen::VectorXd p(d + 3);
    p << h.log_lengthscale, h.log_signal, h.log_noise, h.mean;
    return p;
}

inline Hyper unpack(const Eigen::VectorXd& p) {
    const Eigen::Index d = p.size() - 3;
    Hyper h;
    h.log_lengthscale = p.head(d);
    h.log_signal = p[d];
    h.log_noise = p[d + 1];
    h.mean = p[d + 2];
    return h;
}

/// Exact log marginal likelihood and its gradient in packed coordinates.
inline double exact_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Hyper& h,
                              Eigen::VectorXd* grad) {
    const auto n = X.rows();
    const double s2 = h.noise();
    const Eigen::MatrixXd Kf = matern52(X, X, h);
    Eigen::MatrixXd K = Kf;
    K.diagonal().array() += s2;
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    const Eigen::VectorXd r = y.array() - h.mean;
    const Eigen::VectorXd a = llt.solve(r);
    const double logdet = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    const double f = -0.5 * r.dot(a) - 0.5 * logdet - 0.5 * static_cast<double>(n) * std::log(2 * M_PI);
    if (grad) {
        const Eigen::MatrixXd Kinv = llt.solve(Eigen::MatrixXd::Identity(n, n));
        const Eigen::MatrixXd G = 0.5 * (a * a.transpose() - Kinv);
        const Eigen::Index d = X.cols();
        grad->resize(d + 3);
        grad->head(d) = lengthscale_gradient(X, X, G, h);
        (*grad)[d] = G.cwiseProduct(Kf).sum();
        (*grad)[d + 1] = s2 * G.trace();
        (*grad)[d + 2] = a.sum();
    }
    return f;
}

/// Collapsed variational lower bound with inducing inputs Z (optimal q(u)
/// integrated out) and its gradient in packed coordinates.
inline double sparse_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const Eigen::MatrixXd& Z, const Hyper& h, double jitter,
                               Eigen::VectorXd* grad) {
    const auto n = static_cast<double>(X.rows());
    const auto m = static_cast<double>(Z.rows());
    const double s2 = h.noise();
    const double sf2 = h.signal();
    Eigen::MatrixXd P = matern52(Z, Z, h);
    P.diagonal().array() += jitter * sf2;
    const Eigen::MatrixXd U = matern52(Z, X, h);
    Eigen::MatrixXd Lam = s2 * P;
    Lam.noalias() += U * U.transpose();
    Eigen::LLT<Eigen::MatrixXd> pl(P), ll(Lam);
    if (pl.info() != Eigen::Success || ll.info() != Eigen::Success) {
        return -std::numeric_limits<double>::infinity();
    }
    const Eigen::VectorXd r = y.array() - h.mean;
    const Eigen::VectorXd b = U * r;
    const Eigen::VectorXd c = ll.solve(b);
    const double A = r.squaredNorm() - b.dot(c);
    const double logdet_p = 2.0 * Eigen::MatrixXd(pl.matrixL()).diagonal().array().log().sum();
    const double logdet_l = 2.0 * Eigen::MatrixXd(ll.matrixL()).diagonal().array().log().sum();
    const Eigen::MatrixXd PU = pl.solve(U);
    const double trace_q = PU.cwiseProduct(U).sum();
    const double T = n * sf2 - trace_q;
    const double f = -0.5 * n * std::log(2 * M_PI) -
                     0.5 * ((n - m) * std::log(s2) + logdet_l - logdet_p) - A / (2 * s2) -
                     T / (2 * s2);
    if (grad) {
        const Eigen::Index mi = Z.rows();
        const Eigen::VectorXd w = (r - U.transpose() * c) / s2;
        const Eigen::MatrixXd LU = ll.solve(U);
        const Eigen::MatrixXd Linv = ll.solve(Eigen::MatrixXd::Identity(mi, mi));
        const Eigen::MatrixXd Pinv = pl.solve(Eigen::MatrixXd::Identity(mi, mi));
        const Eigen::MatrixXd GU = c * w.transpose() - LU + PU / s2;
        const Eigen::MatrixXd GP = -0.5 * s2 * Linv + 0.5 * Pinv - 0.5 * c * c.transpose() -
                                   (0.5 / s2) * PU * PU.transpose();
        const double ds2 = -(n - m) / (2 * s2) - 0.5 * Linv.cwiseProduct(P).sum() +
                           A / (2 * s2 * s2) - c.dot(P * c) / (2 * s2) + T / (2 * s2 * s2);
        const Eigen::Index d = X.cols();
        grad->resize(d + 3);
        grad->head(d) = lengthscale_gradient(Z, X, GU, h) + lengthscale_gradient(Z, Z, GP, h);
        (*grad)[d] = -n * sf2 / (2 * s2) + GU.cwiseProduct(U).sum() + GP.cwiseProduct(P).sum();
        (*grad)[d + 1] = s2 * ds2;
        (*grad)[d + 2] = w.sum();
    }
    return f;
}

// ============================================================================
// Fitting
// ============================================================================

/// Inducing inputs: k-means++ seeding followed by a few Lloyd iterations.
inline Eigen::MatrixXd choose_inducing(const Eigen::MatrixXd& X, Eigen::Index m,
                                       std::uint64_t seed, int lloyd_iterations = 10) {
    const Eigen::Index n = X.rows();
    m = std::min(m, n);
    prob::Normal rng(seed);
    Eigen::MatrixXd Z(m, X.cols());
    Eigen::VectorXd d2 = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    Eigen::Index pick = static_cast<Eigen::Index>(rng.engine()() % static_cast<std::uint64_t>(n));
    for (Eigen::Index k = 0; k < m; ++k) {
        Z.row(k) = X.row(pick);
        for (Eigen::Index i = 0; i < n; ++i) d2[i] = std::min(d2[i], (X.row(i) - Z.row(k)).squaredNorm());
        const double total = d2.sum();
        if (!(total > 0.0)) {
            pick = (pick + 1) % n;
            continue;
        }
        double u = rng.uniform_open() * total;
        pick = n - 1;
        for (Eigen::Index i = 0; i < n; ++i) {
            u -= d2[i];
            if (u <= 0.0) {
                pick = i;
                break;
            }
        }
    }
    std::vector<Eigen::Index> assign(static_cast<std::size_t>(n));
    for (int it = 0; it < lloyd_iterations; ++it) {
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::Index best = 0;
            (Z.rowwise() - X.row(i)).rowwise().squaredNorm().minCoeff(&best);
            assign[static_cast<std::size_t>(i)] = best;
        }
        Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(m, X.cols());
        Eigen::VectorXd cnt = Eigen::VectorXd::Zero(m);
        for (Eigen::Index i = 0; i < n; ++i) {
            sum.row(assign[static_cast<std::size_t>(i)]) += X.row(i);
            cnt[assign[static_cast<std::size_t>(i)]] += 1.0;
        }
        for (Eigen::Index k = 0; k < m; ++k)
            if (cnt[k] > 0) Z.row(k) = sum.row(k) / cnt[k];
    }
    return Z;
}

inline Hyper initial_hyper(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    Hyper h;
    const auto d = X.cols();
    h.log_lengthscale = Eigen::VectorXd::Constant(d, 0.5 * std::log(std::max<double>(1.0, static_cast<double>(d))));
    h.mean = y.size() ? y.mean() : 0.0;
    const double var = y.size() ? (y.array() - h.mean).square().mean() : 1.0;
    h.log_signal = std::log(std::max(var, 1e-6));
    h.log_noise = std::log(std::max(0.1 * var, 1e-6));
    return h;
}

/// Fits one component. Pass `Z` to fix the inducing inputs in sparse mode.
inline GPComponent fit_component(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 const GPConfig& cfg, const Hyper* init = nullptr,
                                 const Eigen::MatrixXd* Z = nullptr) {
    GPComponent g;
    g.X = X;
    g.y = y;
    g.jitter = cfg.jitter;
    g.hyper = init ? *init : initial_hyper(X, y);
    if (X.rows() == 0) return g;
    g.sparse = Z != nullptr || X.rows() > cfg.exact_max;
    if (g.sparse) {
        g.Z = Z ? *Z : choose_inducing(X, std::min<Eigen::Index>(cfg.inducing, 1000), cfg.seed);
    }
    const double floor_log = std::log(cfg.noise_floor);
    g.hyper.log_noise = std::max(g.hyper.log_noise, floor_log);
    if (cfg.optimise) {
        Eigen::VectorXd p = pack(g.hyper);
        prob::Adam adam(p.size(), cfg.learning_rate);
        Eigen::VectorXd grad;
        for (int it = 0; it < cfg.iterations; ++it) {
            const Hyper h = unpack(p);
            const double f = g.sparse ? sparse_objective(X, y, g.Z, h, g.jitter, &grad)
                                      : exact_objective(X, y, h, &grad);
            if (!std::isfinite(f) || !grad.allFinite()) {
                std::ostringstream os;
                os << "gp: non-finite objective at iteration " << it << " (log signal "
                   << h.log_signal << ", log noise " << h.log_noise << ")";
                throw std::runtime_error(os.str());
            }
            adam.step(p, -grad);
            const Eigen::Index d = X.cols();
            p[d + 1] = std::max(p[d + 1], floor_log);
            p.head(d) = p.head(d).cwiseMax(-6.0).cwiseMin(8.0);
        }
        g.hyper = unpack(p);
    }
    g.rebuild();
    return g;
}

/// Independent GPs for every column of Y on standardised targets.
struct GPModel {
    std::vector<GPComponent> components;
    prob::TargetScaler scaler;
    Eigen::Index n_features = 0;
};

inline GPModel fit_gp(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const GPConfig& cfg = {}) {
    if (X.rows() != Y.rows()) throw std::invalid_argument("fit_gp: row mismatch");
    GPModel m;
    m.n_features = X.cols();
    m.scaler = X.rows() ? prob::TargetScaler::fit(Y)
                        : prob::TargetScaler{Eigen::VectorXd::Zero(Y.cols()),
                                             Eigen::VectorXd::Ones(Y.cols())};
    const Eigen::MatrixXd Ys = X.rows() ? m.scaler.forward(Y) : Y;
    Eigen::MatrixXd Z;
    const bool sparse = X.rows() > cfg.exact_max;
    if (sparse) Z = choose_inducing(X, std::min<Eigen::Index>(cfg.inducing, 1000), cfg.seed);
    for (Eigen::Index j = 0; j < Y.cols(); ++j) {
        m.components.push_back(fit_component(X, Ys.col(j), cfg, nullptr, sparse ? &Z : nullptr));
    }
    return m;
}

inline PredictiveDistribution gp_predict(const GPModel& m, const Eigen::Ref<const Eigen::VectorXd>& x) {
    if (x.size() != m.n_features) throw std::invalid_argument("gp_predict: feature dimension mismatch");
    PredictiveDistribution d;
    const auto ny = static_cast<Eigen::Index>(m.components.size());
    d.mean.resize(ny);
    d.std.resize(ny);
    const Eigen::RowVectorXd row = x.transpose();
    for (Eigen::Index j = 0; j < ny; ++j) {
        double var = 0.0;
        const double mu = m.components[static_cast<std::size_t>(j)].predict_mean(row, &var);
        d.mean[j] = m.scaler.mean[j] + m.scaler.scale[j] * mu;
        d.std[j] = m.scaler.scale[j] * std::sqrt(var);
    }
    return d;
}

}  // namespace piml::gp
