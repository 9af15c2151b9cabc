#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "edfield/error.hpp"
#include "edfield/grid.hpp"
#include "edfield/lattice.hpp"
#include "edfield/madelung.hpp"

namespace edfield {

/**
 * Per-site potential 1/2 m^2 q^2 + lambda3 q^3 + lambda4 q^4. For two degrees
 * of freedom a lattice coupling adds the gradient energy 1/2 q^T (-lap) q.
 *
 * Grid routes work with canonical site variables q = a^{d/2} phi, so the
 * quadratic part is exactly the lattice Klein-Gordon Hamiltonian and the
 * spectrum of the free coupled problem is sum_k (n_k + 1/2) omega_k.
 */
struct PotentialSpec {
    double m2 = 1.0;
    double lambda3 = 0.0;
    double lambda4 = 0.0;

    void validate() const {
        if (!(m2 > 0.0) || !std::isfinite(m2)) throw ValidationError("potential.m2", "must be > 0");
        if (!(lambda4 >= 0.0) || !std::isfinite(lambda4))
            throw ValidationError("potential.lambda4", "must be >= 0 (potential unbounded below)");
        if (!std::isfinite(lambda3)) throw ValidationError("potential.lambda3", "must be finite");
        if (lambda3 != 0.0 && lambda4 == 0.0)
            throw ValidationError("potential.lambda3", "cubic term needs lambda4 > 0 (potential unbounded below)");
    }

    double site(double q) const noexcept {
        const double q2 = q * q;
        return 0.5 * m2 * q2 + lambda3 * q2 * q + lambda4 * q2 * q2;
    }
};

/// -lap of a dim=1 lattice whose site count equals the number of degrees of freedom.
inline Eigen::MatrixXd lattice_coupling(const Lattice& lattice) { return -dense_laplacian(lattice); }

/// Potential V on every grid node.
inline std::vector<double> grid_potential(const FieldGrid& grid, const PotentialSpec& pot,
                                          const std::optional<Eigen::MatrixXd>& coupling = std::nullopt) {
    pot.validate();
    if (coupling && (coupling->rows() != grid.dof() || coupling->cols() != grid.dof()))
        throw ValidationError("coupling", "matrix size must equal the number of degrees of freedom");
    std::vector<double> v(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto q = grid.coordinate(i);
        double e = 0.0;
        for (int d = 0; d < grid.dof(); ++d) e += pot.site(q[d]);
        if (coupling) {
            for (int a = 0; a < grid.dof(); ++a)
                for (int b = 0; b < grid.dof(); ++b) e += 0.5 * q[a] * (*coupling)(a, b) * q[b];
        }
        v[i] = e;
    }
    return v;
}

struct HamiltonianOptions {
    double eta = 1.0;
    double min_points_per_sigma = 16.0;
};

/// -(eta^2/2) sum_x d^2/dq_x^2 + V on the grid, 3-point kinetic stencil, Dirichlet walls.
class Hamiltonian {
public:
    Hamiltonian(FieldGrid grid, PotentialSpec pot, std::optional<Eigen::MatrixXd> coupling, HamiltonianOptions opts)
        : grid_(std::move(grid)), pot_(pot), coupling_(std::move(coupling)), eta_(opts.eta) {
        pot_.validate();
        if (!(eta_ > 0.0)) throw ValidationError("eta", "must be > 0");
        potential_ = grid_potential(grid_, pot_, coupling_);

        // Narrowest Gaussian width among the quadratic normal modes.
        Eigen::MatrixXd quad = pot_.m2 * Eigen::MatrixXd::Identity(grid_.dof(), grid_.dof());
        if (coupling_) quad += *coupling_;
        const double w_max = std::sqrt(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(quad).eigenvalues().maxCoeff());
        const double sigma = std::sqrt(eta_ / (2.0 * w_max));
        if (sigma / grid_.spacing() < opts.min_points_per_sigma)
            throw ValidationError("grid.points", "resolves the ground-state width with " +
                                                     std::to_string(sigma / grid_.spacing()) + " points per sigma, need " +
                                                     std::to_string(opts.min_points_per_sigma));

        const auto n = static_cast<Eigen::Index>(grid_.size());
        const double kin = 0.5 * eta_ * eta_ / (grid_.spacing() * grid_.spacing());
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(grid_.size() * (1 + 2 * grid_.dof()));
        for (std::size_t i = 0; i < grid_.size(); ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            trips.emplace_back(ii, ii, potential_[i] + 2.0 * kin * grid_.dof());
            for (int axis = 0; axis < grid_.dof(); ++axis) {
                const int j = grid_.axis_index(i, axis);
                const std::size_t st = grid_.stride(axis);
                if (j + 1 < grid_.points()) trips.emplace_back(ii, static_cast<Eigen::Index>(i + st), -kin);
                if (j > 0) trips.emplace_back(ii, static_cast<Eigen::Index>(i - st), -kin);
            }
        }
        matrix_.resize(n, n);
        matrix_.setFromTriplets(trips.begin(), trips.end());
        matrix_.makeCompressed();
    }

    const FieldGrid& grid() const noexcept { return grid_; }
    const PotentialSpec& potential_spec() const noexcept { return pot_; }
    const std::optional<Eigen::MatrixXd>& coupling() const noexcept { return coupling_; }
    const std::vector<double>& potential() const noexcept { return potential_; }
    double eta() const noexcept { return eta_; }
    const Eigen::SparseMatrix<double>& matrix() const noexcept { return matrix_; }

    Eigen::MatrixXd dense() const {
        if (grid_.size() > kDenseLimit) throw SizeLimitError("dense Hamiltonian limited to 4096 grid nodes");
        return Eigen::MatrixXd(matrix_);
    }

    /// <psi|H|psi> with the grid inner product.
    double expectation(const WaveState& w) const {
        Eigen::Map<const Eigen::VectorXcd> psi(w.psi().data(), static_cast<Eigen::Index>(w.psi().size()));
        const Eigen::VectorXcd hpsi = matrix_.cast<Complex>() * psi;
        return psi.dot(hpsi).real() * grid_.cell_volume();
    }

private:
    FieldGrid grid_;
    PotentialSpec pot_;
    std::optional<Eigen::MatrixXd> coupling_;
    double eta_;
    std::vector<double> potential_;
    Eigen::SparseMatrix<double> matrix_;
};

inline Hamiltonian build_hamiltonian(const FieldGrid& grid, const PotentialSpec& pot,
                                     const std::optional<Lattice>& coupling_lattice = std::nullopt,
                                     HamiltonianOptions opts = {}) {
    std::optional<Eigen::MatrixXd> coupling;
    if (coupling_lattice) {
        if (coupling_lattice->n_sites() != static_cast<std::size_t>(grid.dof()))
            throw ValidationError("lattice_coupling", "lattice site count must equal grid degrees of freedom");
        coupling = lattice_coupling(*coupling_lattice);
    } else if (grid.dof() == 2) {
        coupling = Eigen::MatrixXd::Zero(2, 2);
    }
    return Hamiltonian(grid, pot, std::move(coupling), opts);
}

struct EigenSystem {
    Eigen::VectorXd values;   // ascending
    Eigen::MatrixXd vectors;  // columns, unit Euclidean norm
};

/// Dense diagonalization with a residual check ||Hv - Ev|| <= 1e-9 ||v|| (relative to ||H||).
inline EigenSystem eigensolve_oracle(const Hamiltonian& h, bool with_vectors = true) {
    const Eigen::MatrixXd dense = h.dense();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(
        dense, with_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw NumericalError("eigensolve_oracle: diagonalization failed");
    EigenSystem out{solver.eigenvalues(), {}};
    if (with_vectors) {
        out.vectors = solver.eigenvectors();
        const double scale = std::max(1.0, dense.cwiseAbs().rowwise().sum().maxCoeff());
        const Eigen::MatrixXd residual = dense * out.vectors - out.vectors * out.values.asDiagonal();
        const double worst = residual.colwise().norm().maxCoeff();
        if (worst > 1e-9 * scale) throw NumericalError("eigensolve_oracle: residual " + std::to_string(worst));
    }
    return out;
}

/// Grid eigenvector normalized to unit grid norm as a WaveState.
inline WaveState eigenstate(const Hamiltonian& h, const EigenSystem& sys, int level) {
    const Eigen::VectorXd v = sys.vectors.col(level);
    std::vector<Complex> psi(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) psi[static_cast<std::size_t>(i)] = v(i);
    return WaveState(h.grid(), normalized_wave(h.grid(), std::move(psi)));
}

/**
 * Crank-Nicolson propagator (I + i dt H / 2 eta) psi' = (I - i dt H / 2 eta) psi.
 * The factorization is reused for every step with the same dt; negative dt
 * runs backwards.
 */
class CrankNicolson {
public:
    CrankNicolson(const Hamiltonian& h, double dt) : dt_(dt), cell_volume_(h.grid().cell_volume()), grid_(h.grid()) {
        if (!(dt != 0.0) || !std::isfinite(dt)) throw ValidationError("dt", "must be finite and nonzero");
        const auto n = static_cast<Eigen::Index>(h.grid().size());
        Eigen::SparseMatrix<Complex> id(n, n);
        id.setIdentity();
        const Complex half(0.0, 0.5 * dt / h.eta());
        const Eigen::SparseMatrix<Complex> hc = h.matrix().cast<Complex>();
        lhs_ = id + half * hc;
        rhs_ = id - half * hc;
        lhs_.makeCompressed();
        solver_.analyzePattern(lhs_);
        solver_.factorize(lhs_);
        if (solver_.info() != Eigen::Success) throw NumericalError("Crank-Nicolson factorization failed; reduce dt");
    }

    double dt() const noexcept { return dt_; }

    WaveState step(const WaveState& w) const {
        if (!(w.grid() == grid_)) throw ValidationError("psi", "grid does not match the Hamiltonian");
        Eigen::Map<const Eigen::VectorXcd> psi(w.psi().data(), static_cast<Eigen::Index>(w.psi().size()));
        const Eigen::VectorXcd b = rhs_ * psi;
        const Eigen::VectorXcd next = solver_.solve(b);
        if (solver_.info() != Eigen::Success) throw NumericalError("Crank-Nicolson solve failed; reduce dt");
        std::vector<Complex> out(next.data(), next.data() + next.size());
        return WaveState(w.grid(), std::move(out), w.t() + dt_);
    }

private:
    double dt_;
    double cell_volume_;
    FieldGrid grid_;
    Eigen::SparseMatrix<Complex> lhs_;
    Eigen::SparseMatrix<Complex> rhs_;
    mutable Eigen::SparseLU<Eigen::SparseMatrix<Complex>, Eigen::COLAMDOrdering<int>> solver_;
};

inline WaveState schrodinger_step(const WaveState& w, const Hamiltonian& h, double dt) {
    return CrankNicolson(h, dt).step(w);
}

// ---------------------------------------------------------------------------
// Fokker-Planck + quantum Hamilton-Jacobi route
// ---------------------------------------------------------------------------

namespace detail {

struct FpHjRates {
    std::vector<double> drho;
    std::vector<double> dphi;
};

// Link discretization: on the bond (i, i+1) with d = Phi_{i+1} - Phi_i,
//   flux    J = eta r_i r_{i+1} sin(d) / dx
//   kinetic (eta^2 / 2 dx^2) r_nb (1 - cos d) / r_i  summed over bonds of i
//   quantum Q = -(eta^2 / 2 dx^2) (sum_nb r_nb - 2 r_i) / r_i
// rho' = -div J, eta Phi' = -(kinetic + a Q + V). Walls carry no flux.
inline void fp_hj_rates(const FieldGrid& grid, const std::vector<double>& v, double eta, double a,
                        const std::vector<double>& rho, const std::vector<double>& phi, FpHjRates& out) {
    const std::size_t n = grid.size();
    const double dx = grid.spacing();
    out.drho.assign(n, 0.0);
    out.dphi.assign(n, 0.0);
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = std::sqrt(std::max(rho[i], 0.0));
    std::vector<double> kin(n, 0.0);
    std::vector<double> lap(n, 0.0);
    for (int axis = 0; axis < grid.dof(); ++axis) {
        const std::size_t st = grid.stride(axis);
        for (std::size_t i = 0; i < n; ++i) {
            lap[i] -= 2.0 * r[i];
            if (grid.axis_index(i, axis) + 1 >= grid.points()) continue;
            const std::size_t k = i + st;
            const double d = phi[k] - phi[i];
            const double s = std::sin(d);
            const double half = std::sin(0.5 * d);
            const double one_minus_cos = 2.0 * half * half;
            const double flux = eta * r[i] * r[k] * s / dx;
            out.drho[i] -= flux / dx;
            out.drho[k] += flux / dx;
            kin[i] += r[k] * one_minus_cos;
            kin[k] += r[i] * one_minus_cos;
            lap[i] += r[k];
            lap[k] += r[i];
        }
    }
    const double c = 0.5 * eta * eta / (dx * dx);
    constexpr double kTiny = 1e-150;
    for (std::size_t i = 0; i < n; ++i) {
        double e = v[i];
        if (r[i] > kTiny) e += c * kin[i] / r[i] - a * c * lap[i] / r[i];
        out.dphi[i] = -e / eta;
    }
}

}  // namespace detail

/// Throws NodeFormationError if some line through the grid dips to the floor
/// between two nodes above it.
inline void check_nodeless(const FieldGrid& grid, const std::vector<double>& rho, double rho_floor) {
    const double peak = *std::max_element(rho.begin(), rho.end());
    const double floor = rho_floor * peak;
    const int p = grid.points();
    const int lines = grid.dof() == 1 ? 1 : p;
    for (int axis = 0; axis < grid.dof(); ++axis) {
        for (int line = 0; line < lines; ++line) {
            auto at = [&](int j) {
                if (grid.dof() == 1) return static_cast<std::size_t>(j);
                return axis == 0 ? grid.flat(j, line) : grid.flat(line, j);
            };
            int first = -1;
            int last = -1;
            for (int j = 0; j < p; ++j) {
                if (rho[at(j)] > floor) {
                    if (first < 0) first = j;
                    last = j;
                }
            }
            for (int j = first + 1; first >= 0 && j < last; ++j) {
                if (!(rho[at(j)] > floor)) {
                    const auto c = grid.coordinate(at(j));
                    throw NodeFormationError("node in active region at phi = (" + std::to_string(c[0]) +
                                             (grid.dof() == 2 ? ", " + std::to_string(c[1]) : std::string()) +
                                             "), rho = " + std::to_string(rho[at(j)]));
                }
            }
        }
    }
}

/// Throws NumericalError if the density at a Dirichlet wall is above the floor.
/// A truncated tail is a kink that feeds every grid mode, and those modes end
/// up as spurious nodes far out in the tail.
inline void check_wall_clearance(const FieldGrid& grid, const std::vector<double>& rho, double rho_floor) {
    const double peak = *std::max_element(rho.begin(), rho.end());
    const int last = grid.points() - 1;
    for (std::size_t i = 0; i < rho.size(); ++i) {
        bool edge = false;
        for (int axis = 0; axis < grid.dof(); ++axis) {
            const int j = grid.axis_index(i, axis);
            edge = edge || j == 0 || j == last;
        }
        if (edge && rho[i] > rho_floor * peak) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "density %.3e of peak at the grid wall exceeds the floor; enlarge phi_max",
                          rho[i] / peak);
            throw NumericalError(buf);
        }
    }
}

struct FpHjOptions {
    double osmotic_strength = 1.0;  // a; anything but 1 is a diagnostic negative control
};

/// Largest stable RK4 step: dispersive spectral radius and an advective CFL bound.
inline double fp_hj_stable_dt(const Hamiltonian& h, const EpistemicState& s) {
    const double dx = h.grid().spacing();
    double vmax = 0.0;
    for (double v : h.potential()) vmax = std::max(vmax, std::abs(v));
    const double radius = 2.0 * h.eta() * h.grid().dof() / (dx * dx) + vmax / h.eta();
    double dt = 2.0 / radius;
    double speed = 0.0;
    for (int axis = 0; axis < h.grid().dof(); ++axis) {
        const auto grad = central_gradient(h.grid(), s.phi(), axis);
        for (std::size_t i = 0; i < grad.size(); ++i)
            if (s.phase_defined(i)) speed = std::max(speed, std::abs(grad[i]));
    }
    if (speed > 0.0) dt = std::min(dt, 0.5 * dx / (h.eta() * speed));
    return dt;
}

/// One classical RK4 step of the coupled (rho, Phi) system on a nodeless state.
inline EpistemicState fp_hj_step(const EpistemicState& s, const Hamiltonian& h, double dt, FpHjOptions opts = {}) {
    if (!(s.grid() == h.grid())) throw ValidationError("state", "grid does not match the Hamiltonian");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("dt", "must be > 0");
    check_nodeless(s.grid(), s.rho(), s.rho_floor());
    check_wall_clearance(s.grid(), s.rho(), s.rho_floor());

    const auto& grid = s.grid();
    const std::size_t n = grid.size();
    const double a = opts.osmotic_strength;
    detail::FpHjRates k1, k2, k3, k4;
    std::vector<double> rho_t(n), phi_t(n);
    auto stage = [&](const detail::FpHjRates& k, double f) {
        for (std::size_t i = 0; i < n; ++i) {
            rho_t[i] = s.rho()[i] + f * dt * k.drho[i];
            phi_t[i] = s.phi()[i] + f * dt * k.dphi[i];
        }
    };
    detail::fp_hj_rates(grid, h.potential(), h.eta(), a, s.rho(), s.phi(), k1);
    stage(k1, 0.5);
    detail::fp_hj_rates(grid, h.potential(), h.eta(), a, rho_t, phi_t, k2);
    stage(k2, 0.5);
    detail::fp_hj_rates(grid, h.potential(), h.eta(), a, rho_t, phi_t, k3);
    stage(k3, 1.0);
    detail::fp_hj_rates(grid, h.potential(), h.eta(), a, rho_t, phi_t, k4);

    std::vector<double> rho(n), phi(n);
    for (std::size_t i = 0; i < n; ++i) {
        rho[i] = s.rho()[i] + dt / 6.0 * (k1.drho[i] + 2.0 * k2.drho[i] + 2.0 * k3.drho[i] + k4.drho[i]);
        phi[i] = s.phi()[i] + dt / 6.0 * (k1.dphi[i] + 2.0 * k2.dphi[i] + 2.0 * k3.dphi[i] + k4.dphi[i]);
        if (!std::isfinite(rho[i]) || !std::isfinite(phi[i]))
            throw NumericalError("fp_hj_step: non-finite value; reduce dt");
        // Far-tail roundoff may leave tiny negatives; they carry no mass.
        if (rho[i] < 0.0) rho[i] = 0.0;
    }
    check_nodeless(grid, rho, s.rho_floor());
    return EpistemicState(grid, std::move(rho), std::move(phi), s.t() + dt, s.rho_floor());
}

// ---------------------------------------------------------------------------
// Reference states
// ---------------------------------------------------------------------------

/// Displaced ground state of 1/2 p^2 + 1/2 m^2 q^2 (one degree of freedom).
inline WaveState coherent_state(const FieldGrid& grid, double mass, double phi0, double eta = 1.0) {
    if (grid.dof() != 1) throw ValidationError("grid.dof", "coherent_state is defined for one degree of freedom");
    if (!(mass > 0.0)) throw ValidationError("mass", "must be > 0");
    std::vector<Complex> psi(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double d = grid.node(static_cast<int>(i)) - phi0;
        psi[i] = std::exp(-0.5 * mass * d * d / eta);
    }
    return WaveState(grid, normalized_wave(grid, std::move(psi)));
}

/// Gaussian ground state of the quadratic part m2 I + coupling, as (rho, Phi = phase) at time t.
inline EpistemicState gaussian_vacuum(const FieldGrid& grid, const PotentialSpec& pot,
                                      const std::optional<Eigen::MatrixXd>& coupling = std::nullopt, double t = 0.0,
                                      double eta = 1.0) {
    Eigen::MatrixXd quad = pot.m2 * Eigen::MatrixXd::Identity(grid.dof(), grid.dof());
    if (coupling) quad += *coupling;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(quad);
    const Eigen::VectorXd w = es.eigenvalues().cwiseSqrt();
    const Eigen::MatrixXd kernel = es.eigenvectors() * w.asDiagonal() * es.eigenvectors().transpose();
    const double e0 = 0.5 * eta * w.sum();
    std::vector<double> rho(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto c = grid.coordinate(i);
        Eigen::VectorXd q(grid.dof());
        for (int d = 0; d < grid.dof(); ++d) q(d) = c[d];
        rho[i] = std::exp(-q.dot(kernel * q) / eta);
    }
    rho = normalized_density(grid, std::move(rho));
    return EpistemicState(grid, std::move(rho), std::vector<double>(grid.size(), -e0 * t / eta), t);
}

}  // namespace edfield
