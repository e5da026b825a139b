// Deep ensembles: independently seeded multilayer perceptrons with a mean and
// a variance head per output, trained on the Gaussian negative log-likelihood
// and combined as an equally weighted Gaussian mixture.
#pragma once

#include <piml/prob.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace piml::de {

using prob::PredictiveDistribution;

struct DEConfig {
    int members = 8;
    std::vector<int> hidden = {128, 256, 128};
    int epochs = 60;
    int batch = 64;
    double learning_rate = 1e-3;
    double variance_floor = 1e-6;     ///< standardised target units
    double validation_fraction = 0.1;  ///< held out for best-epoch selection
    std::uint64_t seed = 0;
};

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Fully connected ReLU network; parameters live in one flat vector.
struct Mlp {
    std::vector<int> sizes;  ///< input, hidden..., output
    Eigen::VectorXd params;

    std::size_t n_layers() const { return sizes.size() - 1; }

    Eigen::Index offset(std::size_t layer) const {
        Eigen::Index o = 0;
        for (std::size_t l = 0; l < layer; ++l) o += sizes[l + 1] * (sizes[l] + 1);
        return o;
    }
    static Eigen::Index count(const std::vector<int>& s) {
        Eigen::Index o = 0;
        for (std::size_t l = 0; l + 1 < s.size(); ++l) o += s[l + 1] * (s[l] + 1);
        return o;
    }
    Eigen::Map<const Eigen::MatrixXd> W(std::size_t l) const {
        return {params.data() + offset(l), sizes[l + 1], sizes[l]};
    }
    Eigen::Map<const Eigen::VectorXd> b(std::size_t l) const {
        return {params.data() + offset(l) + sizes[l + 1] * sizes[l], sizes[l + 1]};
    }

    /// Columns of X are inputs; returns the pre-activation of every layer.
    std::vector<Eigen::MatrixXd> forward(const Eigen::MatrixXd& X) const {
        std::vector<Eigen::MatrixXd> z;
        z.reserve(n_layers());
        Eigen::MatrixXd a = X;
        for (std::size_t l = 0; l < n_layers(); ++l) {
            Eigen::MatrixXd zl = W(l) * a;
            zl.colwise() += b(l);
            if (l + 1 < n_layers()) a = zl.cwiseMax(0.0);
            z.push_back(std::move(zl));
        }
        return z;
    }
};

inline Mlp init_mlp(const std::vector<int>& sizes, std::uint64_t seed) {
    Mlp m;
    m.sizes = sizes;
    m.params = Eigen::VectorXd::Zero(Mlp::count(sizes));
    prob::Normal z(seed);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const bool last = l + 2 == sizes.size();
        const double sd = last ? std::sqrt(1.0 / sizes[l]) : std::sqrt(2.0 / sizes[l]);
        double* w = m.params.data() + m.offset(l);
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(sizes[l + 1]) * sizes[l]; ++i)
            w[i] = sd * z();
    }
    return m;
}

struct Member {
    Mlp net;
    std::vector<double> loss_history;  ///< mean training NLL per epoch
};

struct DeepEnsemble {
    std::vector<Member> members;
    prob::TargetScaler scaler;
    Eigen::Index n_features = 0;
    Eigen::Index n_outputs = 0;
    double variance_floor = 1e-6;
};

namespace detail {

/// Mean Gaussian NLL (constant dropped) over the columns of Y, and optionally
/// the gradient of the network parameters.
inline double nll(const Mlp& net, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                  double floor, Eigen::VectorXd* grad) {
    const Eigen::Index ny = Y.rows(), B = X.cols();
    const auto z = net.forward(X);
    const Eigen::MatrixXd& out = z.back();
    double loss = 0.0;
    Eigen::MatrixXd delta(2 * ny, B);
    for (Eigen::Index j = 0; j < B; ++j) {
        for (Eigen::Index i = 0; i < ny; ++i) {
            const double mu = out(i, j);
            const double raw = out(ny + i, j);
            const double var = softplus(raw) + floor;
            const double r = Y(i, j) - mu;
            loss += 0.5 * std::log(var) + 0.5 * r * r / var;
            delta(i, j) = -r / var;
            delta(ny + i, j) = (0.5 / var - 0.5 * r * r / (var * var)) * sigmoid(raw);
        }
    }
    loss /= static_cast<double>(B);
    if (!grad) return loss;
    delta /= static_cast<double>(B);
    grad->setZero(net.params.size());
    for (std::size_t l = net.n_layers(); l-- > 0;) {
        const Eigen::MatrixXd a_prev = l == 0 ? X : Eigen::MatrixXd(z[l - 1].cwiseMax(0.0));
        Eigen::Map<Eigen::MatrixXd> gW(grad->data() + net.offset(l), net.sizes[l + 1], net.sizes[l]);
        Eigen::Map<Eigen::VectorXd> gb(grad->data() + net.offset(l) + net.sizes[l + 1] * net.sizes[l],
                                       net.sizes[l + 1]);
        gW.noalias() = delta * a_prev.transpose();
        gb = delta.rowwise().sum();
        if (l > 0) {
            Eigen::MatrixXd back = net.W(l).transpose() * delta;
            delta = back.cwiseProduct((z[l - 1].array() > 0.0).cast<double>().matrix());
        }
    }
    return loss;
}

/// Trains one member; returns false if the loss diverged.
inline bool train_member(Member& m, const Eigen::MatrixXd& Xt, const Eigen::MatrixXd& Yt,
                         const DEConfig& cfg, std::uint64_t seed) {
    const Eigen::Index n = Xt.cols();
    std::mt19937_64 rng(seed);
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    prob::shuffle(idx, rng);
    const auto n_val = static_cast<Eigen::Index>(
        n >= 20 ? std::floor(cfg.validation_fraction * static_cast<double>(n)) : 0);
    auto gather = [&](const Eigen::MatrixXd& M, std::size_t from, std::size_t to) {
        Eigen::MatrixXd out(M.rows(), static_cast<Eigen::Index>(to - from));
        for (std::size_t k = from; k < to; ++k)
            out.col(static_cast<Eigen::Index>(k - from)) = M.col(idx[k]);
        return out;
    };
    const Eigen::MatrixXd Xv = gather(Xt, 0, static_cast<std::size_t>(n_val));
    const Eigen::MatrixXd Yv = gather(Yt, 0, static_cast<std::size_t>(n_val));
    std::vector<Eigen::Index> train(idx.begin() + n_val, idx.end());

    prob::Adam adam(m.net.params.size(), cfg.learning_rate);
    Eigen::VectorXd grad;
    Eigen::VectorXd best = m.net.params;
    double best_val = std::numeric_limits<double>::infinity();
    const auto bsz = static_cast<std::size_t>(std::max(1, cfg.batch));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        prob::shuffle(train, rng);
        double total = 0.0;
        std::size_t seen = 0;
        for (std::size_t s = 0; s < train.size(); s += bsz) {
            const std::size_t e = std::min(train.size(), s + bsz);
            Eigen::MatrixXd xb(Xt.rows(), static_cast<Eigen::Index>(e - s));
            Eigen::MatrixXd yb(Yt.rows(), static_cast<Eigen::Index>(e - s));
            for (std::size_t k = s; k < e; ++k) {
                xb.col(static_cast<Eigen::Index>(k - s)) = Xt.col(train[k]);
                yb.col(static_cast<Eigen::Index>(k - s)) = Yt.col(train[k]);
            }
            const double l = nll(m.net, xb, yb, cfg.variance_floor, &grad);
            if (!std::isfinite(l) || !grad.allFinite()) return false;
            total += l * static_cast<double>(e - s);
            seen += e - s;
            adam.step(m.net.params, grad);
        }
        m.loss_history.push_back(total / static_cast<double>(std::max<std::size_t>(seen, 1)));
        if (n_val > 0) {
            const double v = nll(m.net, Xv, Yv, cfg.variance_floor, nullptr);
            if (!std::isfinite(v)) return false;
            if (v < best_val) {
                best_val = v;
                best = m.net.params;
            }
        }
    }
    if (n_val > 0) m.net.params = best;
    return true;
}

}  // namespace detail

inline DeepEnsemble fit_de(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const DEConfig& cfg = {}) {
    if (X.rows() != Y.rows() || X.rows() == 0) throw std::invalid_argument("fit_de: bad training data");
    DeepEnsemble ens;
    ens.n_features = X.cols();
    ens.n_outputs = Y.cols();
    ens.variance_floor = cfg.variance_floor;
    ens.scaler = prob::TargetScaler::fit(Y);
    const Eigen::MatrixXd Xt = X.transpose();
    const Eigen::MatrixXd Yt = ens.scaler.forward(Y).transpose();
    std::vector<int> sizes = {static_cast<int>(X.cols())};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(static_cast<int>(2 * Y.cols()));
    std::vector<int> failed;
    for (int k = 0; k < cfg.members; ++k) {
        const std::uint64_t seed = prob::derive_seed(cfg.seed, static_cast<std::uint64_t>(k));
        Member m{init_mlp(sizes, seed), {}};
        // softplus(0.5413) = 1: unit initial variance.
        const Eigen::Index last = static_cast<Eigen::Index>(m.net.n_layers()) - 1;
        Eigen::Map<Eigen::VectorXd> bias(m.net.params.data() + m.net.offset(static_cast<std::size_t>(last)) +
                                             sizes.back() * sizes[sizes.size() - 2],
                                         sizes.back());
        bias.tail(Y.cols()).setConstant(0.5413);
        if (detail::train_member(m, Xt, Yt, cfg, prob::derive_seed(seed, 1))) {
            ens.members.push_back(std::move(m));
        } else {
            failed.push_back(k);
        }
    }
    if (ens.members.size() < 2) {
        std::string ids;
        for (int k : failed) ids += " " + std::to_string(k);
        throw std::runtime_error("fit_de: fewer than 2 members survived; diverged:" + ids);
    }
    return ens;
}

/// Mean and variance of every member at x, in target units.
inline void member_moments(const DeepEnsemble& e, const Eigen::Ref<const Eigen::VectorXd>& x,
                           Eigen::MatrixXd& mu, Eigen::MatrixXd& var) {
    const Eigen::Index ny = e.n_outputs;
    const auto nm = static_cast<Eigen::Index>(e.members.size());
    mu.resize(ny, nm);
    var.resize(ny, nm);
    for (Eigen::Index k = 0; k < nm; ++k) {
        const auto z = e.members[static_cast<std::size_t>(k)].net.forward(x);
        for (Eigen::Index i = 0; i < ny; ++i) {
            const double s = e.scaler.scale[i];
            mu(i, k) = e.scaler.mean[i] + s * z.back()(i, 0);
            var(i, k) = s * s * (softplus(z.back()(ny + i, 0)) + e.variance_floor);
        }
    }
}

/// Equal-weight mixture moments of member Gaussians.
inline PredictiveDistribution mixture_moments(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& var) {
    const auto n = static_cast<double>(mu.cols());
    PredictiveDistribution d;
    d.mean = mu.rowwise().sum() / n;
    // Discrepancy plus mean member variance; identical members give exactly
    // zero discrepancy.
    const Eigen::VectorXd disc = (mu.colwise() - d.mean).cwiseAbs2().rowwise().sum() / n;
    const Eigen::VectorXd mean_var = var.rowwise().sum() / n;
    d.std = (disc + mean_var).cwiseSqrt();
    return d;
}

inline PredictiveDistribution de_predict(const DeepEnsemble& e, const Eigen::Ref<const Eigen::VectorXd>& x) {
    if (x.size() != e.n_features) throw std::invalid_argument("de_predict: feature dimension mismatch");
    Eigen::MatrixXd mu, var;
    member_moments(e, x, mu, var);
    return mixture_moments(mu, var);
}

}  // namespace piml::de
