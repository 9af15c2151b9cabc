#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <Eigen/Dense>

#include "edfield/error.hpp"
#include "edfield/free_field.hpp"
#include "edfield/lattice.hpp"
#include "edfield/madelung.hpp"
#include "edfield/random.hpp"

namespace edfield {

/**
 * Short-step transition kernel P[phi'|phi]: independent Gaussians per site
 * with mean shift grad / alpha and variance 1 / alpha, alpha = 1 / (eta dt).
 */
struct TransitionKernel {
    FieldConfig mean_shift;
    double variance_per_site = 0.0;
    double alpha = 0.0;
};

inline TransitionKernel transition_kernel(const FieldConfig& grad, double dt, double eta = 1.0) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("dt", "must be > 0");
    if (!(eta > 0.0)) throw ValidationError("eta", "must be > 0");
    const double alpha = 1.0 / (eta * dt);
    std::vector<double> shift(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) shift[i] = grad[i] / alpha;
    return {FieldConfig(std::move(shift)), 1.0 / alpha, alpha};
}

/**
 * Source of the entropy gradient dS/dphi_x that drives the drift.
 *
 * Gradients are per-site partial derivatives (the cell volume is absorbed),
 * which makes the per-site fluctuation variance exactly eta dt.
 */
class EntropyGradientModel {
public:
    virtual ~EntropyGradientModel() = default;

    virtual std::size_t n_sites() const = 0;

    /// Writes dS/dphi at (phi, t) into `out`; throws SingularDriftError where rho = 0.
    virtual void gradient(std::span<const double> phi, double t, std::span<double> out) const = 0;

    FieldConfig gradient(const FieldConfig& phi, double t = 0.0) const {
        if (phi.size() != n_sites()) throw ValidationError("phi", "size does not match the model");
        std::vector<double> out(phi.size());
        gradient(phi.values(), t, out);
        return FieldConfig(std::move(out));
    }
};

/// Stationary free vacuum: S = ln rho0^{1/2} up to a constant, so dS/dphi = -a^{2d} G phi.
class VacuumEntropyModel final : public EntropyGradientModel {
public:
    explicit VacuumEntropyModel(const GaussianState& state) {
        const double v = state.lattice().cell_volume();
        matrix_ = -(v * v) * state.kernel();
    }

    std::size_t n_sites() const override { return static_cast<std::size_t>(matrix_.rows()); }

    void gradient(std::span<const double> phi, double, std::span<double> out) const override {
        const auto n = matrix_.rows();
        Eigen::Map<const Eigen::VectorXd> p(phi.data(), n);
        Eigen::Map<Eigen::VectorXd> o(out.data(), n);
        o.noalias() = matrix_ * p;
    }

    const Eigen::MatrixXd& matrix() const noexcept { return matrix_; }

private:
    Eigen::MatrixXd matrix_;
};

/**
 * One degree of freedom with S = Phi + ln rho^{1/2} read off a trajectory of
 * grid states: cubic B-splines in the field value, linear in t between
 * snapshots. Phases at masked nodes are replaced by the nearest defined value
 * before fitting.
 */
class TrajectoryEntropyModel final : public EntropyGradientModel {
public:
    explicit TrajectoryEntropyModel(std::span<const EpistemicState> snapshots) {
        if (snapshots.empty()) throw ValidationError("snapshots", "need at least one state");
        for (const auto& s : snapshots) {
            if (s.grid().dof() != 1) throw ValidationError("snapshots", "trajectory model supports one degree of freedom");
            if (!times_.empty() && !(s.t() > times_.back()))
                throw ValidationError("snapshots", "times must be strictly increasing");
            times_.push_back(s.t());
            frames_.push_back(make_frame(s));
        }
    }

    std::size_t n_sites() const override { return 1; }

    double t_begin() const noexcept { return times_.front(); }
    double t_end() const noexcept { return times_.back(); }

    void gradient(std::span<const double> phi, double t, std::span<double> out) const override {
        const double slack = 1e-9 * std::max(1.0, std::abs(t));
        if (t < times_.front() - slack || t > times_.back() + slack)
            throw ValidationError("t", "outside the trajectory time range");
        if (frames_.size() == 1) {
            out[0] = frames_[0].derivative(phi[0]);
            return;
        }
        const auto it = std::upper_bound(times_.begin(), times_.end(), t);
        std::size_t hi = static_cast<std::size_t>(std::distance(times_.begin(), it));
        hi = std::clamp<std::size_t>(hi, 1, times_.size() - 1);
        const std::size_t lo = hi - 1;
        const double w = std::clamp((t - times_[lo]) / (times_[hi] - times_[lo]), 0.0, 1.0);
        out[0] = (1.0 - w) * frames_[lo].derivative(phi[0]) + w * frames_[hi].derivative(phi[0]);
    }

private:
    struct Frame {
        double lo = 0.0;
        double hi = 0.0;
        double log_floor = 0.0;
        boost::math::interpolators::cardinal_cubic_b_spline<double> log_amp;
        boost::math::interpolators::cardinal_cubic_b_spline<double> phase;

        double derivative(double x) const {
            if (!(x >= lo && x <= hi)) throw SingularDriftError("drift requested outside the grid (rho = 0) at phi = " + std::to_string(x));
            if (!(log_amp(x) > log_floor))
                throw SingularDriftError("drift requested where rho is below floor at phi = " + std::to_string(x));
            return log_amp.prime(x) + phase.prime(x);
        }
    };

    static Frame make_frame(const EpistemicState& s) {
        const auto& g = s.grid();
        const std::size_t n = g.size();
        const double peak = *std::max_element(s.rho().begin(), s.rho().end());
        std::vector<double> log_amp(n);
        constexpr double kLogZero = -350.0;
        for (std::size_t i = 0; i < n; ++i) log_amp[i] = s.rho()[i] > 0.0 ? 0.5 * std::log(s.rho()[i]) : kLogZero;

        std::vector<double> phase = s.phi();
        std::size_t first = n;
        std::size_t last = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (s.phase_defined(i)) {
                first = std::min(first, i);
                last = i;
            }
        }
        if (first == n) throw ValidationError("snapshots", "state has no node above the density floor");
        for (std::size_t i = 0; i < first; ++i) phase[i] = phase[first];
        for (std::size_t i = last + 1; i < n; ++i) phase[i] = phase[last];
        for (std::size_t i = first + 1; i < last; ++i) {
            if (!s.phase_defined(i)) phase[i] = phase[i - 1];
        }
        return Frame{g.node(0),
                     g.node(g.points() - 1),
                     0.5 * std::log(s.rho_floor() * peak),
                     {log_amp.data(), n, g.node(0), g.spacing()},
                     {phase.data(), n, g.node(0), g.spacing()}};
    }

    std::vector<double> times_;
    std::vector<Frame> frames_;
};

/// b = eta dS/dphi.
inline FieldConfig drift_velocity(const EntropyGradientModel& model, const FieldConfig& phi, double t = 0.0,
                                  double eta = 1.0) {
    auto g = model.gradient(phi, t);
    std::vector<double> b(g.size());
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = eta * g[i];
    return FieldConfig(std::move(b));
}

namespace detail {

inline void em_update(std::span<double> phi, std::span<double> scratch, const EntropyGradientModel& model, double dt,
                      double t, double eta, CounterRng& rng) {
    model.gradient(phi, t, scratch);
    const double sd = std::sqrt(eta * dt);
    for (std::size_t i = 0; i < phi.size(); ++i) {
        phi[i] += eta * dt * scratch[i] + sd * rng.normal();
        if (!std::isfinite(phi[i])) throw SingularDriftError("em_step produced a non-finite field value");
    }
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < threads; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w * n / threads; i < (w + 1) * n / threads; ++i) fn(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Euler-Maruyama step phi' = phi + dt b(phi) + dw, <dw_x dw_x'> = eta dt delta_xx'.
inline FieldConfig em_step(const FieldConfig& phi, const EntropyGradientModel& model, double dt, CounterRng& rng,
                           double t = 0.0, double eta = 1.0) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("dt", "must be > 0");
    if (phi.size() != model.n_sites()) throw ValidationError("phi", "size does not match the model");
    std::vector<double> next = phi.vector();
    std::vector<double> scratch(phi.size());
    detail::em_update(next, scratch, model, dt, t, eta, rng);
    return FieldConfig(std::move(next));
}

/**
 * Monte Carlo representation of rho_t. Walker w draws its noise from the
 * counter stream (seed, w), so results do not depend on thread scheduling.
 */
struct Ensemble {
    std::vector<FieldConfig> walkers;
    double t = 0.0;
    std::int64_t step = 0;
    double dt = 0.0;  // fixed once the first step is taken
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> positions;  // next counter block per walker

    std::size_t size() const noexcept { return walkers.size(); }
};

inline Ensemble make_ensemble(std::vector<FieldConfig> walkers, std::uint64_t seed) {
    if (walkers.empty()) throw ValidationError("walkers", "ensemble must be nonempty");
    const std::size_t n = walkers.front().size();
    for (const auto& w : walkers)
        if (w.size() != n) throw ValidationError("walkers", "all walkers must live on the same lattice");
    Ensemble e;
    e.positions.assign(walkers.size(), 0);
    e.walkers = std::move(walkers);
    e.seed = seed;
    return e;
}

/// Walkers drawn exactly from the vacuum density (Cholesky of the field covariance).
inline Ensemble vacuum_ensemble(const GaussianState& state, std::size_t n_walkers, std::uint64_t seed) {
    const Eigen::MatrixXd cov = state.field_covariance();
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw NumericalError("vacuum covariance is not positive definite");
    const Eigen::MatrixXd chol = llt.matrixL();
    const auto n = cov.rows();
    std::vector<FieldConfig> walkers;
    walkers.reserve(n_walkers);
    constexpr std::uint64_t kInitStreams = 1ull << 63;
    for (std::size_t w = 0; w < n_walkers; ++w) {
        CounterRng rng(seed, kInitStreams | w);
        Eigen::VectorXd xi(n);
        for (Eigen::Index i = 0; i < n; ++i) xi(i) = rng.normal();
        const Eigen::VectorXd phi = chol * xi;
        walkers.emplace_back(std::vector<double>(phi.data(), phi.data() + n));
    }
    return make_ensemble(std::move(walkers), seed);
}

/// Chapman-Kolmogorov iteration: n_steps Euler-Maruyama steps per walker.
inline Ensemble propagate_ensemble(Ensemble e, const EntropyGradientModel& model, double dt, std::int64_t n_steps,
                                   double eta = 1.0, std::size_t threads = 0) {
    if (n_steps < 0) throw ValidationError("n_steps", "must be >= 0");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("dt", "must be > 0");
    if (e.walkers.empty()) throw ValidationError("walkers", "ensemble must be nonempty");
    if (e.step > 0 && std::abs(dt - e.dt) > 1e-15 * e.dt)
        throw ValidationError("dt", "entropic time uses a fixed step; ensemble was advanced with dt = " + std::to_string(e.dt));
    if (n_steps == 0) return e;
    if (e.walkers.front().size() != model.n_sites()) throw ValidationError("walkers", "size does not match the model");

    // Step k of walker w starts at block k * blocks of stream (seed, w); a
    // Box-Muller pair per block, so splitting a run into calls changes nothing.
    const auto blocks = static_cast<std::uint64_t>((model.n_sites() + 1) / 2);
    const auto first = static_cast<std::uint64_t>(e.step);
    detail::parallel_for(e.walkers.size(), threads, [&](std::size_t w) {
        std::vector<double> phi = e.walkers[w].vector();
        std::vector<double> scratch(phi.size());
        for (std::int64_t s = 0; s < n_steps; ++s) {
            const std::uint64_t k = first + static_cast<std::uint64_t>(s);
            CounterRng rng(e.seed, w, k * blocks);
            detail::em_update(phi, scratch, model, dt, static_cast<double>(k) * dt, eta, rng);
        }
        e.positions[w] = (first + static_cast<std::uint64_t>(n_steps)) * blocks;
        e.walkers[w] = FieldConfig(std::move(phi));
    });
    e.step += n_steps;
    e.dt = dt;
    e.t = static_cast<double>(e.step) * dt;
    return e;
}

struct EnsembleMoments {
    std::vector<double> mean;
    Eigen::MatrixXd covariance;     // unbiased
    std::vector<double> mean_se;    // batch-means standard errors
    Eigen::MatrixXd covariance_se;
    std::size_t batches = 0;
};

/// Sample moments with batch-means standard errors over contiguous walker blocks.
inline EnsembleMoments ensemble_moments(const Ensemble& e, std::size_t max_batches = 32) {
    const std::size_t w = e.walkers.size();
    if (w < 2) throw ValidationError("walkers", "need at least 2 walkers for moments");
    const auto n = static_cast<Eigen::Index>(e.walkers.front().size());

    auto moments = [&](std::size_t begin, std::size_t end, Eigen::VectorXd& mean, Eigen::MatrixXd& cov) {
        mean = Eigen::VectorXd::Zero(n);
        for (std::size_t k = begin; k < end; ++k) mean += e.walkers[k].as_eigen();
        mean /= static_cast<double>(end - begin);
        cov = Eigen::MatrixXd::Zero(n, n);
        for (std::size_t k = begin; k < end; ++k) {
            const Eigen::VectorXd d = e.walkers[k].as_eigen() - mean;
            cov.selfadjointView<Eigen::Lower>().rankUpdate(d);
        }
        cov = cov.selfadjointView<Eigen::Lower>();
        cov /= static_cast<double>(end - begin - 1);
    };

    EnsembleMoments out;
    Eigen::VectorXd mean;
    moments(0, w, mean, out.covariance);
    out.mean.assign(mean.data(), mean.data() + n);

    const std::size_t b = std::min(max_batches, w / 2);
    out.batches = b;
    out.mean_se.assign(static_cast<std::size_t>(n), std::numeric_limits<double>::quiet_NaN());
    out.covariance_se = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
    if (b < 2) return out;

    std::vector<Eigen::VectorXd> bmeans(b);
    std::vector<Eigen::MatrixXd> bcovs(b);
    for (std::size_t k = 0; k < b; ++k) moments(k * w / b, (k + 1) * w / b, bmeans[k], bcovs[k]);
    Eigen::VectorXd mm = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd mc = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t k = 0; k < b; ++k) {
        mm += bmeans[k];
        mc += bcovs[k];
    }
    mm /= static_cast<double>(b);
    mc /= static_cast<double>(b);
    Eigen::VectorXd vm = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd vc = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t k = 0; k < b; ++k) {
        vm += (bmeans[k] - mm).cwiseAbs2();
        vc += (bcovs[k] - mc).cwiseAbs2();
    }
    const double denom = static_cast<double>(b) * static_cast<double>(b - 1);
    for (Eigen::Index i = 0; i < n; ++i) out.mean_se[static_cast<std::size_t>(i)] = std::sqrt(vm(i) / denom);
    out.covariance_se = (vc / denom).cwiseSqrt();
    return out;
}

}  // namespace edfield
