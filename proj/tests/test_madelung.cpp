#include <cmath>
#include <complex>
#include <numbers>

#include <gtest/gtest.h>

#include "edfield/evolver.hpp"
#include "edfield/free_field.hpp"
#include "edfield/madelung.hpp"

using namespace edfield;

namespace {

FieldGrid grid1(int points = 801, double phi_max = 6.0) { return FieldGrid({1, phi_max, points}); }

EpistemicState gaussian(const FieldGrid& g, double sigma2, double center = 0.0, double phase_slope = 0.0) {
    std::vector<double> rho(g.size()), phi(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = g.coordinate(i)[0] - center;
        rho[i] = std::exp(-x * x / (2 * sigma2));
        phi[i] = phase_slope * g.coordinate(i)[0];
    }
    return EpistemicState(g, normalized_density(g, rho), phi);
}

// Distance up to one global phase, fixed at the largest component of a.
// Below the floor only moduli are compared since the phase is dropped there.
double max_phase_mismatch(const WaveState& a, const WaveState& b, const EpistemicState& mask) {
    std::size_t k = 0;
    for (std::size_t i = 0; i < a.psi().size(); ++i)
        if (std::abs(a.psi()[i]) > std::abs(a.psi()[k])) k = i;
    const Complex g = b.psi()[k] / a.psi()[k];
    const Complex unit = g / std::abs(g);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.psi().size(); ++i) {
        const double d = mask.phase_defined(i) ? std::abs(a.psi()[i] * unit - b.psi()[i])
                                               : std::abs(std::abs(a.psi()[i]) - std::abs(b.psi()[i]));
        worst = std::max(worst, d);
    }
    return worst;
}

}  // namespace

TEST(Madelung, StateValidation) {
    const auto g = grid1(101);
    EXPECT_THROW(EpistemicState(g, std::vector<double>(g.size(), 1.0), std::vector<double>(g.size(), 0.0)),
                 ValidationError);
    std::vector<double> rho(g.size(), 0.0);
    rho[50] = 1.0 / g.spacing();
    rho[10] = -1e-3;
    EXPECT_THROW(EpistemicState(g, rho, std::vector<double>(g.size(), 0.0)), ValidationError);
}

TEST(Madelung, RealGaussianGivesRealPositivePsi) {
    const auto s = gaussian(grid1(), 0.5);
    const auto w = to_wavefunction(s);
    for (std::size_t i = 0; i < w.psi().size(); ++i) {
        EXPECT_EQ(w.psi()[i].imag(), 0.0);
        EXPECT_GE(w.psi()[i].real(), 0.0);
        EXPECT_NEAR(std::norm(w.psi()[i]), s.rho()[i], 1e-12);
    }
}

TEST(Madelung, RoundTripUpToGlobalPhase) {
    const auto g = grid1();
    std::vector<Complex> psi(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = g.coordinate(i)[0];
        psi[i] = std::exp(-0.6 * (x - 0.4) * (x - 0.4)) * std::polar(1.0, 2.3 * x + 0.7 * x * x + 1.1);
    }
    const WaveState w(g, normalized_wave(g, psi));
    const auto s = from_wavefunction(w);
    const auto back = to_wavefunction(s);
    EXPECT_LE(max_phase_mismatch(w, back, s), 1e-12);
    // and the other direction
    const auto s2 = from_wavefunction(back);
    for (std::size_t i = 0; i < g.size(); ++i) {
        EXPECT_NEAR(s2.rho()[i], s.rho()[i], 1e-12);
        if (s.phase_defined(i)) { EXPECT_NEAR(std::remainder(s2.phi()[i] - s.phi()[i], 2 * std::numbers::pi), 0.0, 1e-12); }
    }
}

TEST(Madelung, UnwrapsLargePhaseRamp) {
    const auto g = grid1(1201, 4.0);
    std::vector<Complex> psi(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = g.coordinate(i)[0];
        psi[i] = std::exp(-0.5 * x * x) * std::polar(1.0, 9.0 * x);
    }
    const auto s = from_wavefunction(WaveState(g, normalized_wave(g, psi)));
    const std::size_t mid = g.size() / 2;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!s.phase_defined(i)) continue;
        EXPECT_NEAR(s.phi()[i] - s.phi()[mid], 9.0 * (g.coordinate(i)[0] - g.coordinate(mid)[0]), 1e-9);
    }
}

TEST(Madelung, UniformPhase) {
    const auto g = grid1(201);
    const auto s0 = gaussian(g, 0.5);
    std::vector<Complex> psi(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) psi[i] = std::sqrt(s0.rho()[i]) * std::polar(1.0, 1.0);
    const auto s = from_wavefunction(WaveState(g, psi));
    for (std::size_t i = 0; i < g.size(); ++i)
        if (s.phase_defined(i)) { EXPECT_NEAR(s.phi()[i], 1.0, 1e-12); }
}

TEST(Madelung, SpanningTreeUnwrapTwoDof) {
    const FieldGrid g({2, 3.0, 61});
    std::vector<Complex> psi(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto c = g.coordinate(i);
        psi[i] = std::exp(-0.5 * (c[0] * c[0] + c[1] * c[1])) * std::polar(1.0, 5.0 * c[0] - 4.0 * c[1]);
    }
    const auto s = from_wavefunction(WaveState(g, normalized_wave(g, psi)));
    const std::size_t mid = g.flat(30, 30);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!s.phase_defined(i)) continue;
        const auto c = g.coordinate(i);
        EXPECT_NEAR(s.phi()[i] - s.phi()[mid], 5.0 * c[0] - 4.0 * c[1], 1e-9);
    }
}

TEST(Madelung, FirstExcitedStateMasksNode) {
    const FieldGrid g({1, 7.0, 401});
    const auto h = build_hamiltonian(g, {1.0, 0.0, 0.0});
    const auto sys = eigensolve_oracle(h);
    const auto s = from_wavefunction(eigenstate(h, sys, 1));
    const std::size_t node = g.size() / 2;  // odd state vanishes at phi = 0
    EXPECT_NEAR(g.coordinate(node)[0], 0.0, 1e-12);
    EXPECT_FALSE(s.phase_defined(node));
    EXPECT_FALSE(s.phase_at(node).has_value());
    EXPECT_TRUE(s.phase_at(node + 40).has_value());
    // phase jumps by pi across the node
    EXPECT_NEAR(std::abs(std::remainder(*s.phase_at(node + 40) - *s.phase_at(node - 40), 2 * std::numbers::pi)),
                std::numbers::pi, 1e-9);
}

TEST(Madelung, VacuumMatchesAnalyticKernelGaussian) {
    // Two coupled degrees of freedom = the M=2 lattice; the analytic vacuum is
    // exp(-1/2 q^T G q) with G from the free-field module (a = 1).
    const auto lat = build_lattice({1, 2, 1.0});
    const double m = 1.0;
    const FieldGrid g({2, 5.0, 81});
    const double t = 0.37;
    const PotentialSpec pot{m * m};
    const auto s = gaussian_vacuum(g, pot, lattice_coupling(lat), t);
    const auto w = to_wavefunction(s);

    const auto vac = ground_state_kernel(lat, m);
    const double e0 = vacuum_energy(vac);
    std::vector<Complex> expected(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto c = g.coordinate(i);
        Eigen::Vector2d q(c[0], c[1]);
        expected[i] = std::exp(-0.5 * q.dot(vac.kernel() * q)) * std::polar(1.0, -e0 * t);
    }
    expected = normalized_wave(g, expected);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = s.phase_defined(i) ? std::abs(w.psi()[i] - expected[i])
                                            : std::abs(std::abs(w.psi()[i]) - std::abs(expected[i]));
        worst = std::max(worst, d);
    }
    EXPECT_LE(worst, 1e-12);
}

TEST(Velocities, StationaryVacuum) {
    const auto s = gaussian(grid1(), 0.5);
    const auto v = velocities(s);
    for (std::size_t i = 0; i < s.grid().size(); ++i) {
        if (!v.defined[i]) continue;
        EXPECT_EQ(v.current[0][i], 0.0);
        EXPECT_EQ(v.drift[0][i], -v.osmotic[0][i]);
    }
}

TEST(Velocities, GaussianOsmoticVelocity) {
    const double sigma2 = 0.7;
    const double eta = 1.3;
    const auto s = gaussian(grid1(1601), sigma2);
    const auto v = velocities(s, eta);
    for (std::size_t i = 0; i < s.grid().size(); ++i) {
        const double x = s.grid().coordinate(i)[0];
        if (!v.defined[i] || std::abs(x) < 0.1) continue;
        // u = -eta d/dx (-x^2 / 4 sigma2) = eta x / (2 sigma2)
        const double exact = eta * x / (2 * sigma2);
        EXPECT_NEAR(v.osmotic[0][i], exact, 1e-6 * std::abs(exact));
    }
}

TEST(Velocities, PlaneWavePhaseAndDecomposition) {
    const double c = 1.7;
    const auto s = gaussian(grid1(), 0.9, 0.3, c);
    const auto v = velocities(s);
    for (std::size_t i = 0; i < s.grid().size(); ++i) {
        if (!v.defined[i]) continue;
        EXPECT_NEAR(v.current[0][i], c, 1e-12);
        EXPECT_NEAR(v.drift[0][i] + v.osmotic[0][i], v.current[0][i], 1e-12);
    }
}

TEST(Velocities, SecondOrderGradientConvergence) {
    auto max_err = [](int points) {
        const FieldGrid g({1, 2.0, points});
        std::vector<double> f(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) f[i] = std::sin(1.3 * g.coordinate(i)[0]) + 0.2 * std::exp(g.coordinate(i)[0]);
        const auto d = central_gradient(g, f, 0);
        double e = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = g.coordinate(i)[0];
            e = std::max(e, std::abs(d[i] - (1.3 * std::cos(1.3 * x) + 0.2 * std::exp(x))));
        }
        return e;
    };
    const double e1 = max_err(101);
    const double e2 = max_err(201);
    const double e3 = max_err(401);
    const double order = std::log2(e2 / e3);
    EXPECT_NEAR(std::log2(e1 / e2), 2.0, 0.1);
    EXPECT_NEAR(order, 2.0, 0.1);
}

TEST(Velocities, TwoDofAxesIndependent) {
    const FieldGrid g({2, 4.0, 81});
    std::vector<double> rho(g.size()), phi(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto c = g.coordinate(i);
        rho[i] = std::exp(-c[0] * c[0] - 0.5 * c[1] * c[1]);
        phi[i] = 0.5 * c[0] - 2.0 * c[1];
    }
    const EpistemicState s(g, normalized_density(g, rho), phi);
    const auto v = velocities(s);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!v.defined[i]) continue;
        const auto c = g.coordinate(i);
        EXPECT_NEAR(v.current[0][i], 0.5, 1e-12);
        EXPECT_NEAR(v.current[1][i], -2.0, 1e-12);
        EXPECT_NEAR(v.osmotic[0][i], c[0], 1e-9);
        EXPECT_NEAR(v.osmotic[1][i], 0.5 * c[1], 1e-9);
    }
}
