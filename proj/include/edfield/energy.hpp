#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "edfield/evolver.hpp"
#include "edfield/madelung.hpp"

namespace edfield {

struct EnergyBreakdown {
    double kinetic = 0.0;   // <v^2 / 2>
    double osmotic = 0.0;   // a <u^2 / 2>
    double potential = 0.0; // <V>
    double total = 0.0;
};

/**
 * Epistemic energy E[rho, Phi] = sum_nodes rho (v^2/2 + a u^2/2 + V) dV.
 *
 * Velocities live on the bonds between neighbouring nodes, with bond density
 * r_i r_{i+1} (r = rho^{1/2}):
 *     v_bond = eta 2 sin(dPhi / 2) / dx,   u_bond = -eta (r_{i+1} - r_i) / (dx sqrt(r_i r_{i+1}))
 * Bonds to the Dirichlet wall count toward the osmotic term. With a = 1 the
 * total equals <Psi|H|Psi> of the grid Hamiltonian exactly.
 */
inline EnergyBreakdown energy_functional(const EpistemicState& s, const std::vector<double>& potential, double eta = 1.0,
                                         double a = 1.0) {
    const auto& grid = s.grid();
    if (potential.size() != grid.size()) throw ValidationError("potential", "size does not match grid");
    check_nodeless(grid, s.rho(), s.rho_floor());

    const double dx = grid.spacing();
    const double dv = grid.cell_volume();
    const std::size_t n = grid.size();
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = std::sqrt(s.rho()[i]);

    EnergyBreakdown e;
    const double c = 0.5 * eta * eta / (dx * dx);
    for (int axis = 0; axis < grid.dof(); ++axis) {
        const std::size_t st = grid.stride(axis);
        for (std::size_t i = 0; i < n; ++i) {
            const int j = grid.axis_index(i, axis);
            if (j == 0) e.osmotic += c * r[i] * r[i];  // bond to the lower wall
            if (j + 1 >= grid.points()) {
                e.osmotic += c * r[i] * r[i];  // upper wall
                continue;
            }
            const std::size_t k = i + st;
            const double half = std::sin(0.5 * (s.phi()[k] - s.phi()[i]));
            e.kinetic += c * r[i] * r[k] * 4.0 * half * half;
            const double dr = r[k] - r[i];
            e.osmotic += c * dr * dr;
        }
    }
    for (std::size_t i = 0; i < n; ++i) e.potential += s.rho()[i] * potential[i];
    e.kinetic *= dv;
    e.osmotic *= a * dv;
    e.potential *= dv;
    e.total = e.kinetic + e.osmotic + e.potential;
    return e;
}

inline EnergyBreakdown energy_functional(const EpistemicState& s, const Hamiltonian& h, double a = 1.0) {
    return energy_functional(s, h.potential(), h.eta(), a);
}

inline EnergyBreakdown energy_functional(const EpistemicState& s, const PotentialSpec& pot,
                                         const std::optional<Eigen::MatrixXd>& coupling = std::nullopt,
                                         double eta = 1.0, double a = 1.0) {
    return energy_functional(s, grid_potential(s.grid(), pot, coupling), eta, a);
}

/// Osmotic energy in the quantum-potential form <Q> = -(eta^2/2) sum r lap(r) dV.
inline double osmotic_quantum_potential_form(const EpistemicState& s, double eta = 1.0) {
    const auto& grid = s.grid();
    const std::size_t n = grid.size();
    const double dx = grid.spacing();
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = std::sqrt(s.rho()[i]);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double lap = -2.0 * grid.dof() * r[i];
        for (int axis = 0; axis < grid.dof(); ++axis) {
            const int j = grid.axis_index(i, axis);
            const std::size_t st = grid.stride(axis);
            if (j > 0) lap += r[i - st];
            if (j + 1 < grid.points()) lap += r[i + st];
        }
        acc += r[i] * lap;
    }
    return -0.5 * eta * eta * acc / (dx * dx) * grid.cell_volume();
}

struct ConservationReport {
    std::vector<double> times;
    std::vector<EnergyBreakdown> energies;
    double max_relative_drift = 0.0;
    double tolerance = 0.0;
    bool exceeded = false;
};

/// Max |E(t) - E(0)| / |E(0)| over a trajectory; flags drift beyond `tolerance`.
inline ConservationReport conservation_report(std::span<const EpistemicState> trajectory, const Hamiltonian& h,
                                              double tolerance, double a = 1.0) {
    ConservationReport rep;
    rep.tolerance = tolerance;
    if (trajectory.empty()) return rep;
    for (const auto& s : trajectory) {
        rep.times.push_back(s.t());
        rep.energies.push_back(energy_functional(s, h, a));
    }
    const double e0 = rep.energies.front().total;
    for (const auto& e : rep.energies) {
        rep.max_relative_drift = std::max(rep.max_relative_drift, std::abs(e.total - e0) / std::abs(e0));
    }
    rep.exceeded = rep.max_relative_drift > tolerance;
    return rep;
}

}  // namespace edfield
