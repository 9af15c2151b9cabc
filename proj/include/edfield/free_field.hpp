#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "edfield/error.hpp"
#include "edfield/lattice.hpp"

namespace edfield {

/**
 * Exact Gaussian vacuum of the free lattice Klein-Gordon field.
 *
 * kernel()      G(x,x') = (1/V) sum_k omega_k e^{ik(x-x')}
 * covariance()  C = G^{-1} / 2
 *
 * The vacuum density is rho0[phi] ~ exp(-a^{2d} phi^T G phi), so the field
 * covariance <phi_x phi_x'> is C / a^{2d} (field_covariance()). Dense matrices
 * are only built for N <= 4096 sites; the spectral quantities exist for any N.
 */
class GaussianState {
public:
    GaussianState(Lattice lattice, double mass) : lattice_(std::move(lattice)), mass_(mass) {
        if (!(mass > 0.0) || !std::isfinite(mass))
            throw ValidationError("mass", "must be > 0 (the periodic zero mode is not normalizable at m = 0)");
        frequencies_ = dispersion_table(lattice_, mass_);
        if (lattice_.n_sites() <= kDenseLimit) build_dense();
    }

    const Lattice& lattice() const noexcept { return lattice_; }
    double mass() const noexcept { return mass_; }
    const std::vector<double>& frequencies() const noexcept { return frequencies_; }

    bool has_dense() const noexcept { return kernel_.has_value(); }

    const Eigen::MatrixXd& kernel() const {
        require_dense();
        return *kernel_;
    }
    const Eigen::MatrixXd& covariance() const {
        require_dense();
        return *covariance_;
    }
    Eigen::MatrixXd field_covariance() const {
        const double v = lattice_.cell_volume();
        return covariance() / (v * v);
    }

private:
    void require_dense() const {
        if (!kernel_) throw SizeLimitError("dense vacuum kernel unavailable above 4096 sites; use spectral sums");
    }

    // Both matrices depend only on x' - x: evaluate one row by direct mode sum
    // and fill the rest by translation.
    void build_dense() {
        const std::size_t n = lattice_.n_sites();
        const double volume = lattice_.volume();
        const double a = lattice_.spacing();
        std::vector<double> g(n, 0.0);
        std::vector<double> c(n, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            const SiteCoords rc = lattice_.coords(r);
            double gs = 0.0;
            double cs = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const auto& kv = lattice_.wavenumbers()[k];
                double phase = 0.0;
                for (int d = 0; d < lattice_.dim(); ++d) phase += kv[d] * rc[d] * a;
                const double cosv = std::cos(phase);
                gs += frequencies_[k] * cosv;
                cs += cosv / frequencies_[k];
            }
            g[r] = gs / volume;
            // G^{-1} = (V / N^2) sum_k e^{ik r} / omega_k
            c[r] = 0.5 * volume * cs / (static_cast<double>(n) * static_cast<double>(n));
        }
        const auto ni = static_cast<Eigen::Index>(n);
        Eigen::MatrixXd kern(ni, ni);
        Eigen::MatrixXd cov(ni, ni);
        for (std::size_t x = 0; x < n; ++x) {
            for (std::size_t y = 0; y < n; ++y) {
                const std::size_t r = lattice_.displacement(x, y);
                kern(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) = g[r];
                cov(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) = c[r];
            }
        }
        kernel_ = std::move(kern);
        covariance_ = std::move(cov);
    }

    Lattice lattice_;
    double mass_;
    std::vector<double> frequencies_;
    std::optional<Eigen::MatrixXd> kernel_;
    std::optional<Eigen::MatrixXd> covariance_;
};

inline GaussianState ground_state_kernel(const Lattice& lattice, double mass) {
    return GaussianState(lattice, mass);
}

/// E0 = (1/2) sum_k omega_k.
inline double vacuum_energy(const GaussianState& state) {
    const auto& w = state.frequencies();
    return 0.5 * std::accumulate(w.begin(), w.end(), 0.0);
}

/// <phi_x^2> = (1 / 2V) sum_k 1/omega_k, the same at every site.
inline double vacuum_variance(const GaussianState& state) {
    double s = 0.0;
    for (double w : state.frequencies()) s += 1.0 / w;
    return 0.5 * s / state.lattice().volume();
}

struct CouplingOracle {
    Eigen::MatrixXd matrix;      // -lap + m^2
    Eigen::VectorXd spectrum;    // ascending
};

/// Dense -lap + m^2 and its eigenvalues: the independent check on the dispersion table.
inline CouplingOracle coupling_matrix_oracle(const Lattice& lattice, double mass) {
    if (lattice.n_sites() > kDenseLimit)
        throw SizeLimitError("coupling_matrix_oracle: N > 4096, use the spectral dispersion table instead");
    if (!(mass >= 0.0)) throw ValidationError("mass", "must be >= 0");
    CouplingOracle out;
    const auto n = static_cast<Eigen::Index>(lattice.n_sites());
    out.matrix = -dense_laplacian(lattice) + mass * mass * Eigen::MatrixXd::Identity(n, n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(out.matrix, Eigen::EigenvaluesOnly);
    out.spectrum = solver.eigenvalues();
    return out;
}

/// Dense-route kernel: a^{-d} sqrt(-lap + m^2) by eigendecomposition.
inline Eigen::MatrixXd dense_sqrt_kernel(const Lattice& lattice, double mass) {
    const auto oracle = coupling_matrix_oracle(lattice, mass);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(oracle.matrix);
    const Eigen::VectorXd root = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return solver.eigenvectors() * root.asDiagonal() * solver.eigenvectors().transpose() / lattice.cell_volume();
}

}  // namespace edfield
