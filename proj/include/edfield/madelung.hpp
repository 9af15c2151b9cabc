#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "edfield/error.hpp"
#include "edfield/grid.hpp"

namespace edfield {

using Complex = std::complex<double>;

inline constexpr double kDefaultRhoFloor = 1e-12;  // relative to the peak density
inline constexpr double kNormTolerance = 1e-9;

namespace detail {

inline double grid_sum(const FieldGrid& grid, const std::vector<double>& f) {
    double s = 0.0;
    for (double v : f) s += v;
    return s * grid.cell_volume();
}

inline double wrap_angle(double x) {
    x = std::remainder(x, 2.0 * std::numbers::pi);
    return x;
}

}  // namespace detail

/**
 * Hydrodynamic pair (rho, Phi) sampled on a field-value grid.
 *
 * The phase is only meaningful where rho exceeds `rho_floor * max(rho)`;
 * elsewhere phase_defined() is false and phase_at() returns nullopt. Values
 * stored in phi() at masked points are kept (finite) but carry no meaning.
 */
class EpistemicState {
public:
    EpistemicState(FieldGrid grid, std::vector<double> rho, std::vector<double> phi, double t = 0.0,
                   double rho_floor = kDefaultRhoFloor)
        : grid_(std::move(grid)), rho_(std::move(rho)), phi_(std::move(phi)), t_(t), rho_floor_(rho_floor) {
        if (rho_.size() != grid_.size()) throw ValidationError("rho", "size does not match grid");
        if (phi_.size() != grid_.size()) throw ValidationError("phi", "size does not match grid");
        double peak = 0.0;
        for (std::size_t i = 0; i < rho_.size(); ++i) {
            if (!std::isfinite(rho_[i]) || rho_[i] < 0.0)
                throw ValidationError("rho[" + std::to_string(i) + "]", "must be finite and >= 0");
            peak = std::max(peak, rho_[i]);
        }
        const double norm = detail::grid_sum(grid_, rho_);
        if (std::abs(norm - 1.0) > kNormTolerance)
            throw ValidationError("rho", "not normalized (sum rho dV = " + std::to_string(norm) + ")");
        const double floor = rho_floor_ * peak;
        defined_.resize(rho_.size());
        for (std::size_t i = 0; i < rho_.size(); ++i) {
            defined_[i] = rho_[i] > floor ? 1 : 0;
            if (!std::isfinite(phi_[i])) {
                if (defined_[i]) throw ValidationError("phi[" + std::to_string(i) + "]", "must be finite where rho > floor");
                phi_[i] = 0.0;
            }
        }
    }

    const FieldGrid& grid() const noexcept { return grid_; }
    const std::vector<double>& rho() const noexcept { return rho_; }
    const std::vector<double>& phi() const noexcept { return phi_; }
    double t() const noexcept { return t_; }
    double rho_floor() const noexcept { return rho_floor_; }

    bool phase_defined(std::size_t i) const noexcept { return defined_[i] != 0; }
    const std::vector<unsigned char>& phase_mask() const noexcept { return defined_; }

    std::optional<double> phase_at(std::size_t i) const {
        if (!defined_[i]) return std::nullopt;
        return phi_[i];
    }

    double norm() const { return detail::grid_sum(grid_, rho_); }

private:
    FieldGrid grid_;
    std::vector<double> rho_;
    std::vector<double> phi_;
    double t_;
    double rho_floor_;
    std::vector<unsigned char> defined_;
};

/// Complex wavefunction Psi = rho^{1/2} e^{i Phi} on a grid.
class WaveState {
public:
    WaveState(FieldGrid grid, std::vector<Complex> psi, double t = 0.0)
        : grid_(std::move(grid)), psi_(std::move(psi)), t_(t) {
        if (psi_.size() != grid_.size()) throw ValidationError("psi", "size does not match grid");
        const double n = norm();
        if (!std::isfinite(n) || std::abs(n - 1.0) > kNormTolerance)
            throw ValidationError("psi", "not normalized (sum |psi|^2 dV = " + std::to_string(n) + ")");
    }

    const FieldGrid& grid() const noexcept { return grid_; }
    const std::vector<Complex>& psi() const noexcept { return psi_; }
    double t() const noexcept { return t_; }

    double norm() const {
        double s = 0.0;
        for (const auto& z : psi_) s += std::norm(z);
        return s * grid_.cell_volume();
    }

private:
    FieldGrid grid_;
    std::vector<Complex> psi_;
    double t_;
};

/// Scale a nonnegative sample to unit grid norm.
inline std::vector<double> normalized_density(const FieldGrid& grid, std::vector<double> rho) {
    const double n = detail::grid_sum(grid, rho);
    if (!(n > 0.0)) throw ValidationError("rho", "has zero mass");
    for (double& r : rho) r /= n;
    return rho;
}

inline std::vector<Complex> normalized_wave(const FieldGrid& grid, std::vector<Complex> psi) {
    double s = 0.0;
    for (const auto& z : psi) s += std::norm(z);
    s *= grid.cell_volume();
    if (!(s > 0.0)) throw ValidationError("psi", "has zero norm");
    const double scale = 1.0 / std::sqrt(s);
    for (auto& z : psi) z *= scale;
    return psi;
}

inline WaveState to_wavefunction(const EpistemicState& s) {
    std::vector<Complex> psi(s.grid().size());
    for (std::size_t i = 0; i < psi.size(); ++i) {
        const double amp = std::sqrt(s.rho()[i]);
        const double phase = s.phase_defined(i) ? s.phi()[i] : 0.0;
        psi[i] = std::polar(amp, phase);
    }
    return WaveState(s.grid(), std::move(psi), s.t());
}

namespace detail {

// 1-D: sweep outward from the peak, each defined node taking the wrapped
// difference to the last defined node.
inline void unwrap_1d(const std::vector<double>& raw, const std::vector<unsigned char>& defined,
                      std::size_t start, std::vector<double>& out) {
    out = raw;
    const auto n = static_cast<long>(raw.size());
    for (int dir : {+1, -1}) {
        long last = static_cast<long>(start);
        for (long i = static_cast<long>(start) + dir; i >= 0 && i < n; i += dir) {
            if (!defined[static_cast<std::size_t>(i)]) continue;
            const auto li = static_cast<std::size_t>(last);
            const auto ii = static_cast<std::size_t>(i);
            out[ii] = out[li] + wrap_angle(raw[ii] - raw[li]);
            last = i;
        }
    }
}

// 2-D: breadth-first spanning tree over defined nodes, unwrapping each child
// against its parent. Disconnected regions get their own root at their peak.
inline void unwrap_2d(const FieldGrid& grid, const std::vector<double>& raw, const std::vector<double>& rho,
                      const std::vector<unsigned char>& defined, std::vector<double>& out) {
    out = raw;
    std::vector<unsigned char> seen(raw.size(), 0);
    const int p = grid.points();
    for (;;) {
        std::size_t root = raw.size();
        double best = -1.0;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (defined[i] && !seen[i] && rho[i] > best) {
                best = rho[i];
                root = i;
            }
        }
        if (root == raw.size()) break;
        std::queue<std::size_t> frontier;
        frontier.push(root);
        seen[root] = 1;
        while (!frontier.empty()) {
            const std::size_t cur = frontier.front();
            frontier.pop();
            const auto ij = grid.indices(cur);
            const int di[4] = {1, -1, 0, 0};
            const int dj[4] = {0, 0, 1, -1};
            for (int k = 0; k < 4; ++k) {
                const int ni = ij[0] + di[k];
                const int nj = ij[1] + dj[k];
                if (ni < 0 || nj < 0 || ni >= p || nj >= p) continue;
                const std::size_t nb = grid.flat(ni, nj);
                if (seen[nb] || !defined[nb]) continue;
                out[nb] = out[cur] + wrap_angle(raw[nb] - raw[cur]);
                seen[nb] = 1;
                frontier.push(nb);
            }
        }
    }
}

}  // namespace detail

/// rho = |psi|^2 and the unwrapped phase; phase is masked where rho <= rho_floor * peak.
inline EpistemicState from_wavefunction(const WaveState& w, double rho_floor = kDefaultRhoFloor) {
    const std::size_t n = w.grid().size();
    std::vector<double> rho(n);
    std::vector<double> raw(n);
    double peak = 0.0;
    std::size_t argmax = 0;
    for (std::size_t i = 0; i < n; ++i) {
        rho[i] = std::norm(w.psi()[i]);
        raw[i] = std::arg(w.psi()[i]);
        if (rho[i] > peak) {
            peak = rho[i];
            argmax = i;
        }
    }
    std::vector<unsigned char> defined(n);
    for (std::size_t i = 0; i < n; ++i) defined[i] = rho[i] > rho_floor * peak ? 1 : 0;

    std::vector<double> phi;
    if (w.grid().dof() == 1) {
        detail::unwrap_1d(raw, defined, argmax, phi);
    } else {
        detail::unwrap_2d(w.grid(), raw, rho, defined, phi);
    }
    return EpistemicState(w.grid(), std::move(rho), std::move(phi), w.t(), rho_floor);
}

/// Second-order gradient along `axis`: centred inside, 3-point one-sided at the edges.
inline std::vector<double> central_gradient(const FieldGrid& grid, const std::vector<double>& f, int axis) {
    std::vector<double> g(f.size());
    const std::size_t st = grid.stride(axis);
    const int p = grid.points();
    const double inv2dx = 0.5 / grid.spacing();
    for (std::size_t i = 0; i < f.size(); ++i) {
        const int j = grid.axis_index(i, axis);
        if (j == 0) {
            g[i] = (-3.0 * f[i] + 4.0 * f[i + st] - f[i + 2 * st]) * inv2dx;
        } else if (j == p - 1) {
            g[i] = (3.0 * f[i] - 4.0 * f[i - st] + f[i - 2 * st]) * inv2dx;
        } else {
            g[i] = (f[i + st] - f[i - st]) * inv2dx;
        }
    }
    return g;
}

/**
 * Velocity fields per axis: current v = eta dPhi/dphi, osmotic
 * u = -eta d ln rho^{1/2}/dphi, drift b = v - u. A node is `defined` only when
 * its whole stencil has a defined phase.
 */
struct Velocities {
    int dof = 1;
    std::array<std::vector<double>, 2> current;
    std::array<std::vector<double>, 2> osmotic;
    std::array<std::vector<double>, 2> drift;
    std::vector<unsigned char> defined;
};

inline Velocities velocities(const EpistemicState& s, double eta = 1.0) {
    const auto& grid = s.grid();
    Velocities out;
    out.dof = grid.dof();
    std::vector<double> log_amp(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        log_amp[i] = s.rho()[i] > 0.0 ? 0.5 * std::log(s.rho()[i]) : 0.0;
    }
    out.defined = s.phase_mask();
    const int p = grid.points();
    for (int axis = 0; axis < grid.dof(); ++axis) {
        const auto dphase = central_gradient(grid, s.phi(), axis);
        const auto dlog = central_gradient(grid, log_amp, axis);
        auto& v = out.current[axis];
        auto& u = out.osmotic[axis];
        auto& b = out.drift[axis];
        v.resize(grid.size());
        u.resize(grid.size());
        b.resize(grid.size());
        const std::size_t st = grid.stride(axis);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const int j = grid.axis_index(i, axis);
            bool ok = s.phase_defined(i);
            if (j == 0) ok = ok && s.phase_defined(i + st) && s.phase_defined(i + 2 * st);
            else if (j == p - 1) ok = ok && s.phase_defined(i - st) && s.phase_defined(i - 2 * st);
            else ok = ok && s.phase_defined(i + st) && s.phase_defined(i - st);
            if (!ok) {
                out.defined[i] = 0;
                v[i] = u[i] = b[i] = 0.0;
                continue;
            }
            v[i] = eta * dphase[i];
            u[i] = -eta * dlog[i];
            b[i] = v[i] - u[i];
        }
    }
    return out;
}

}  // namespace edfield
