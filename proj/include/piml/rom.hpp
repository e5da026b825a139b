// Reduced-order representation of thrust and CAS as functions of altitude:
// climb filtering, thrust inference, sub-trajectory splitting, discrete fPCA
// on an altitude grid, sequential projection and reconstruction.
#pragma once

#include <piml/atmosphere.hpp>
#include <piml/perf.hpp>
#include <piml/trajectory.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace piml::rom {

namespace atm = piml::atmosphere;

inline constexpr double kMinClimbRate = 500.0;  ///< [ft/min]

class EmptyAfterFilter : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class InsufficientData : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class SpanTooShort : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ============================================================================
// Preparation
// ============================================================================

/// Keeps blips climbing at or above the legal minimum rate, in order.
inline Trajectory filter_climb_blips(const Trajectory& traj) {
    if (traj.blips.empty()) throw std::invalid_argument("filter_climb_blips: empty trajectory");
    Trajectory out = traj;
    out.blips.clear();
    std::copy_if(traj.blips.begin(), traj.blips.end(), std::back_inserter(out.blips),
                 [](const Blip& b) { return b.rocd >= kMinClimbRate; });
    if (out.blips.empty()) {
        throw EmptyAfterFilter("trajectory '" + traj.id + "' has no blips climbing >= 500 ft/min");
    }
    return out;
}

/// Thrust required to fly one blip: the climb equation solved for thrust.
inline std::optional<double> thrust_from_blip(const Blip& b, const perf::AircraftPerf& p,
                                              double delta_t) {
    if (!(b.v_cas > 0.0)) return std::nullopt;
    try {
        const atm::AtmosphereState s = atm::isa_state(b.h, delta_t);
        const double v_tas = atm::cas_to_tas(b.v_cas, s);
        const double m = v_tas / s.speed_of_sound;
        const auto regime = atm::select_regime(b.h, m >= p.cas_mach_transition - 1e-6);
        const double f = atm::energy_share_factor(m, regime);
        if (!(f > 0.0) || !(v_tas > 0.0)) return std::nullopt;
        const double d = perf::drag_terms(s.density, v_tas, p).total();
        const double climb_ms = b.rocd / atm::kFtPerMinPerMps;
        const double t = d + p.mass * atm::kG0 * climb_ms / (v_tas * f);
        if (!std::isfinite(t)) return std::nullopt;
        return t;
    } catch (const atm::DomainError&) {
        return std::nullopt;
    }
}

/// Augments every blip with its inferred thrust. Blips where the inversion is
/// undefined (or yields non-positive thrust) are dropped and counted.
inline AugmentedTrajectory infer_thrust(const Trajectory& traj, const perf::AircraftPerf& p,
                                        const std::function<double(double)>& delta_t_fn) {
    AugmentedTrajectory out;
    out.trajectory = traj;
    out.trajectory.blips.clear();
    for (const Blip& b : traj.blips) {
        const auto t = thrust_from_blip(b, p, delta_t_fn ? delta_t_fn(b.h) : 0.0);
        if (!t || *t <= 0.0) {
            ++out.n_dropped;
            continue;
        }
        out.trajectory.blips.push_back(b);
        out.thrust.push_back(*t);
    }
    return out;
}

struct SplitOptions {
    double tolerance = 0.10;     ///< relative tolerance on the refresh period
    std::size_t min_blips = 5;
};

inline SubTrajectory make_subtrajectory(const AugmentedTrajectory& aug, std::size_t first,
                                        std::size_t last, std::size_t index) {
    SubTrajectory s;
    s.parent_id = aug.trajectory.id;
    s.index = index;
    s.aircraft_type = aug.trajectory.aircraft_type;
    s.blips.assign(aug.trajectory.blips.begin() + static_cast<std::ptrdiff_t>(first),
                   aug.trajectory.blips.begin() + static_cast<std::ptrdiff_t>(last) + 1);
    s.thrust.assign(aug.thrust.begin() + static_cast<std::ptrdiff_t>(first),
                    aug.thrust.begin() + static_cast<std::ptrdiff_t>(last) + 1);
    s.h_min = std::numeric_limits<double>::infinity();
    s.h_max = -std::numeric_limits<double>::infinity();
    for (const Blip& b : s.blips) {
        s.h_min = std::min(s.h_min, b.h);
        s.h_max = std::max(s.h_max, b.h);
    }
    s.context = aug.trajectory.context;
    s.context.fl_min = s.h_min / atm::kMetresPerFlightLevel;
    s.context.fl_max = s.h_max / atm::kMetresPerFlightLevel;
    s.context.fl_range = s.context.fl_max - s.context.fl_min;
    return s;
}

/// Maximal runs whose consecutive gaps match the radar refresh period.
inline std::vector<SubTrajectory> split_subtrajectories(const AugmentedTrajectory& aug,
                                                        double refresh_s,
                                                        const SplitOptions& opt = {}) {
    if (!(refresh_s > 0.0)) throw std::invalid_argument("split_subtrajectories: refresh_s <= 0");
    std::vector<SubTrajectory> out;
    const auto& blips = aug.trajectory.blips;
    if (blips.empty()) return out;
    const double lo = refresh_s * (1.0 - opt.tolerance);
    const double hi = refresh_s * (1.0 + opt.tolerance);
    std::size_t start = 0;
    auto close_run = [&](std::size_t last) {
        if (last + 1 - start >= opt.min_blips) {
            out.push_back(make_subtrajectory(aug, start, last, out.size()));
        }
    };
    for (std::size_t i = 1; i < blips.size(); ++i) {
        const double gap = blips[i].t - blips[i - 1].t;
        if (gap < lo || gap > hi) {
            close_run(i - 1);
            start = i;
        }
    }
    close_run(blips.size() - 1);
    return out;
}

// ============================================================================
// Altitude grid and quadrature
// ============================================================================

/// Uniform grid from h_lo to h_hi (inclusive, last node clipped to h_hi).
inline Eigen::VectorXd make_grid(double h_lo, double h_hi,
                                 double step = 100.0 / atm::kFeetPerMetre) {
    if (!(h_hi > h_lo) || !(step > 0.0)) throw std::invalid_argument("make_grid: bad range");
    const auto n = static_cast<Eigen::Index>(std::floor((h_hi - h_lo) / step + 1e-9)) + 1;
    Eigen::VectorXd g(n);
    for (Eigen::Index i = 0; i < n; ++i) g[i] = h_lo + static_cast<double>(i) * step;
    return g;
}

/// Trapezoidal weights for the integral over the nodes of `grid`.
inline Eigen::VectorXd trapezoid_weights(const Eigen::Ref<const Eigen::VectorXd>& grid) {
    const Eigen::Index n = grid.size();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        const double half = 0.5 * (grid[i + 1] - grid[i]);
        w[i] += half;
        w[i + 1] += half;
    }
    return w;
}

/// Values of a sampled curve on the grid nodes inside its altitude range.
struct GridCurve {
    Eigen::Index first = 0;  ///< first covered node
    Eigen::Index last = -1;  ///< last covered node (inclusive)
    Eigen::VectorXd values;  ///< size last - first + 1

    Eigen::Index size() const { return last - first + 1; }
};

/// Linear interpolation of (h, y) samples onto the grid. Duplicate altitudes
/// are averaged.
inline GridCurve curve_on_grid(const std::vector<double>& h, const std::vector<double>& y,
                               const Eigen::Ref<const Eigen::VectorXd>& grid) {
    std::vector<std::pair<double, double>> pts;
    pts.reserve(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) pts.emplace_back(h[i], y[i]);
    std::sort(pts.begin(), pts.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::pair<double, double>> merged;
    for (std::size_t i = 0; i < pts.size();) {
        std::size_t j = i;
        double sum = 0.0;
        while (j < pts.size() && pts[j].first == pts[i].first) sum += pts[j++].second;
        merged.emplace_back(pts[i].first, sum / static_cast<double>(j - i));
        i = j;
    }
    GridCurve c;
    if (merged.empty()) return c;
    const double lo = merged.front().first;
    const double hi = merged.back().first;
    const double eps = 1e-9;
    const auto* begin = grid.data();
    const auto* end = grid.data() + grid.size();
    c.first = std::lower_bound(begin, end, lo - eps) - begin;
    c.last = (std::upper_bound(begin, end, hi + eps) - begin) - 1;
    if (c.last < c.first) {
        c.last = c.first - 1;
        return c;
    }
    c.values.resize(c.size());
    std::size_t seg = 0;
    for (Eigen::Index g = c.first; g <= c.last; ++g) {
        const double x = grid[g];
        while (seg + 1 < merged.size() && merged[seg + 1].first < x) ++seg;
        if (seg + 1 >= merged.size() || x <= merged[seg].first) {
            c.values[g - c.first] = x <= merged[seg].first ? merged[seg].second
                                                           : merged.back().second;
            continue;
        }
        const auto& a = merged[seg];
        const auto& b = merged[seg + 1];
        const double u = (x - a.first) / (b.first - a.first);
        c.values[g - c.first] = a.second + u * (b.second - a.second);
    }
    return c;
}

/// Piecewise-linear evaluation of nodal values, constant outside the grid.
inline double interpolate(const Eigen::Ref<const Eigen::VectorXd>& grid,
                          const Eigen::Ref<const Eigen::VectorXd>& values, double h) {
    const Eigen::Index n = grid.size();
    if (h <= grid[0]) return values[0];
    if (h >= grid[n - 1]) return values[n - 1];
    const auto* begin = grid.data();
    const Eigen::Index i = (std::upper_bound(begin, begin + n, h) - begin) - 1;
    const double u = (h - grid[i]) / (grid[i + 1] - grid[i]);
    return values[i] + u * (values[i + 1] - values[i]);
}

// ============================================================================
// Basis
// ============================================================================

/// Mean functions and discrete orthonormal bases for thrust and CAS.
struct BasisSet {
    std::string aircraft_type;
    Eigen::VectorXd grid;
    Eigen::VectorXd quad_weights;
    Eigen::VectorXd mu_thrust;
    Eigen::VectorXd mu_cas;
    Eigen::MatrixXd phi;  ///< n_g x n_alpha
    Eigen::MatrixXd psi;  ///< n_g x n_beta
    std::vector<double> explained_variance_thrust;  ///< cumulative, every component
    std::vector<double> explained_variance_cas;

    Eigen::Index n_alpha() const { return phi.cols(); }
    Eigen::Index n_beta() const { return psi.cols(); }
    Eigen::Index n_y() const { return phi.cols() + psi.cols(); }
};

struct WeightVector {
    Eigen::VectorXd alpha;
    Eigen::VectorXd beta;
    double h_min = 0.0;
    double h_max = 0.0;

    Eigen::VectorXd stacked() const {
        Eigen::VectorXd y(alpha.size() + beta.size());
        y << alpha, beta;
        return y;
    }
    static WeightVector from_stacked(const Eigen::Ref<const Eigen::VectorXd>& y,
                                     Eigen::Index n_alpha, double h_min = 0.0,
                                     double h_max = 0.0) {
        WeightVector w;
        w.alpha = y.head(n_alpha);
        w.beta = y.tail(y.size() - n_alpha);
        w.h_min = h_min;
        w.h_max = h_max;
        return w;
    }
};

struct FitBasisOptions {
    double threshold = 0.80;  ///< cumulative explained variance to reach
    std::size_t min_count = 2;  ///< curves required at every grid node
};

namespace detail {

struct ComponentFit {
    Eigen::VectorXd mean;
    Eigen::MatrixXd basis;
    std::vector<double> explained;
};

/// Pairwise-available weighted covariance, eigendecomposition and truncation.
inline ComponentFit fit_component(const std::vector<GridCurve>& curves,
                                  const Eigen::VectorXd& w, const FitBasisOptions& opt,
                                  const char* what) {
    const Eigen::Index ng = w.size();
    const auto nc = static_cast<Eigen::Index>(curves.size());
    Eigen::MatrixXd values = Eigen::MatrixXd::Zero(nc, ng);
    Eigen::MatrixXd mask = Eigen::MatrixXd::Zero(nc, ng);
    for (Eigen::Index c = 0; c < nc; ++c) {
        const GridCurve& gc = curves[static_cast<std::size_t>(c)];
        if (gc.size() <= 0) continue;
        values.row(c).segment(gc.first, gc.size()) = gc.values.transpose();
        mask.row(c).segment(gc.first, gc.size()).setOnes();
    }
    const Eigen::VectorXd counts = mask.colwise().sum().transpose();
    for (Eigen::Index g = 0; g < ng; ++g) {
        if (counts[g] < static_cast<double>(opt.min_count)) {
            throw InsufficientData(std::string("fit_basis: fewer than ") +
                                   std::to_string(opt.min_count) + " " + what +
                                   " curves cover grid node " + std::to_string(g));
        }
    }
    ComponentFit fit;
    fit.mean = values.colwise().sum().transpose().cwiseQuotient(counts);
    Eigen::MatrixXd centred = values - mask * fit.mean.asDiagonal();
    centred = centred.cwiseProduct(mask);
    const Eigen::MatrixXd pair_counts = mask.transpose() * mask;
    Eigen::MatrixXd cov = (centred.transpose() * centred).cwiseQuotient(pair_counts.cwiseMax(1.0));
    cov = 0.5 * (cov + cov.transpose()).eval();

    const Eigen::VectorXd sqrt_w = w.cwiseSqrt();
    const Eigen::MatrixXd weighted = sqrt_w.asDiagonal() * cov * sqrt_w.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(weighted);
    if (es.info() != Eigen::Success) throw std::runtime_error("fit_basis: eigensolver failed");
    const Eigen::VectorXd eval = es.eigenvalues().reverse();
    const Eigen::MatrixXd evec = es.eigenvectors().rowwise().reverse();

    const Eigen::VectorXd pos = eval.cwiseMax(0.0);
    const double total = pos.sum();
    const double scale = std::max(1.0, fit.mean.cwiseAbs2().cwiseProduct(w).sum());
    Eigen::Index n_keep = 1;
    if (total <= 1e-14 * scale) {
        fit.basis = Eigen::VectorXd::Constant(ng, 1.0 / std::sqrt(w.sum()));
        fit.explained = {1.0};
        return fit;
    }
    double cum = 0.0;
    bool reached = false;
    for (Eigen::Index k = 0; k < ng; ++k) {
        cum += pos[k];
        const double frac = std::min(1.0, cum / total);
        fit.explained.push_back(frac);
        if (!reached && frac >= opt.threshold - 1e-12) {
            n_keep = k + 1;
            reached = true;
        }
    }
    fit.explained.back() = 1.0;
    if (!reached) n_keep = ng;

    fit.basis.resize(ng, n_keep);
    for (Eigen::Index k = 0; k < n_keep; ++k) {
        Eigen::VectorXd f = evec.col(k).cwiseQuotient(sqrt_w);
        const double integral = w.dot(f);
        double sign = 1.0;
        if (std::abs(integral) > 1e-12 * std::sqrt(w.sum()) * f.cwiseAbs().maxCoeff()) {
            sign = integral < 0.0 ? -1.0 : 1.0;
        } else {
            for (Eigen::Index g = 0; g < ng; ++g) {
                if (std::abs(f[g]) > 1e-14) {
                    sign = f[g] < 0.0 ? -1.0 : 1.0;
                    break;
                }
            }
        }
        fit.basis.col(k) = sign * f;
    }
    return fit;
}

inline std::vector<double> blip_altitudes(const std::vector<Blip>& blips) {
    std::vector<double> h;
    h.reserve(blips.size());
    for (const Blip& b : blips) h.push_back(b.h);
    return h;
}

inline std::vector<double> blip_cas(const std::vector<Blip>& blips) {
    std::vector<double> v;
    v.reserve(blips.size());
    for (const Blip& b : blips) v.push_back(b.v_cas);
    return v;
}

}  // namespace detail

/// Discrete fPCA of the inferred-thrust and CAS curves of `data` on `grid`.
inline BasisSet fit_basis(const std::vector<AugmentedTrajectory>& data,
                          const Eigen::Ref<const Eigen::VectorXd>& grid,
                          const FitBasisOptions& opt = {}) {
    if (grid.size() < 2) throw std::invalid_argument("fit_basis: grid needs >= 2 nodes");
    std::vector<GridCurve> thrust_curves;
    std::vector<GridCurve> cas_curves;
    std::string type;
    for (const auto& aug : data) {
        const auto h = detail::blip_altitudes(aug.trajectory.blips);
        GridCurve tc = curve_on_grid(h, aug.thrust, grid);
        if (tc.size() < 1) continue;
        thrust_curves.push_back(std::move(tc));
        cas_curves.push_back(curve_on_grid(h, detail::blip_cas(aug.trajectory.blips), grid));
        if (type.empty()) type = aug.trajectory.aircraft_type;
    }
    if (thrust_curves.size() < 2) {
        throw InsufficientData("fit_basis: fewer than 2 usable curves");
    }
    BasisSet b;
    b.aircraft_type = type;
    b.grid = grid;
    b.quad_weights = trapezoid_weights(grid);
    auto thrust = detail::fit_component(thrust_curves, b.quad_weights, opt, "thrust");
    auto cas = detail::fit_component(cas_curves, b.quad_weights, opt, "CAS");
    b.mu_thrust = std::move(thrust.mean);
    b.phi = std::move(thrust.basis);
    b.explained_variance_thrust = std::move(thrust.explained);
    b.mu_cas = std::move(cas.mean);
    b.psi = std::move(cas.basis);
    b.explained_variance_cas = std::move(cas.explained);
    return b;
}

// ============================================================================
// Projection and reconstruction
// ============================================================================

namespace detail {

/// Greedy per-component least squares on the covered span.
inline Eigen::VectorXd sequential_fit(const GridCurve& obs, const Eigen::VectorXd& mean,
                                      const Eigen::MatrixXd& basis,
                                      const Eigen::VectorXd& span_w, double lambda) {
    Eigen::VectorXd r = obs.values - mean.segment(obs.first, obs.size());
    Eigen::VectorXd coef(basis.cols());
    for (Eigen::Index i = 0; i < basis.cols(); ++i) {
        const auto f = basis.col(i).segment(obs.first, obs.size());
        const double num = span_w.dot(r.cwiseProduct(f));
        const double den = span_w.dot(f.cwiseAbs2()) + lambda;
        coef[i] = den > 0.0 ? num / den : 0.0;
        r -= coef[i] * f;
    }
    return coef;
}

}  // namespace detail

/// Weights of a sub-trajectory: sequential least squares over the grid nodes
/// inside its observed altitude span, with optional ridge weight `lambda`.
inline WeightVector project(const SubTrajectory& sub, const BasisSet& basis,
                            double lambda = 0.0) {
    const auto h = detail::blip_altitudes(sub.blips);
    const GridCurve tc = curve_on_grid(h, sub.thrust, basis.grid);
    if (tc.size() < 2) {
        throw SpanTooShort("project: sub-trajectory '" + sub.id() + "' covers < 2 grid nodes");
    }
    const GridCurve cc = curve_on_grid(h, detail::blip_cas(sub.blips), basis.grid);
    const Eigen::VectorXd span_w = trapezoid_weights(basis.grid.segment(tc.first, tc.size()));
    WeightVector w;
    w.alpha = detail::sequential_fit(tc, basis.mu_thrust, basis.phi, span_w, lambda);
    w.beta = detail::sequential_fit(cc, basis.mu_cas, basis.psi, span_w, lambda);
    w.h_min = sub.h_min;
    w.h_max = sub.h_max;
    return w;
}

/// Thrust and CAS functions of altitude rebuilt from weights.
struct ReducedCurves {
    Eigen::VectorXd grid;
    Eigen::VectorXd thrust_nodes;
    Eigen::VectorXd cas_nodes;

    double thrust(double h) const { return interpolate(grid, thrust_nodes, h); }
    double cas(double h) const { return interpolate(grid, cas_nodes, h); }
    perf::ScalarFn thrust_fn() const {
        return [g = grid, v = thrust_nodes](double h) { return interpolate(g, v, h); };
    }
    perf::ScalarFn cas_fn() const {
        return [g = grid, v = cas_nodes](double h) { return interpolate(g, v, h); };
    }
};

inline ReducedCurves reconstruct(const WeightVector& w, const BasisSet& basis) {
    if (w.alpha.size() != basis.n_alpha() || w.beta.size() != basis.n_beta()) {
        throw std::invalid_argument("reconstruct: weight dimensions do not match the basis");
    }
    ReducedCurves r;
    r.grid = basis.grid;
    r.thrust_nodes = basis.mu_thrust + basis.phi * w.alpha;
    r.cas_nodes = basis.mu_cas + basis.psi * w.beta;
    return r;
}

}  // namespace piml::rom
