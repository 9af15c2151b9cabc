#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "edfield/free_field.hpp"

using namespace edfield;

TEST(GroundState, SingleSiteOscillator) {
    const auto st = ground_state_kernel(build_lattice({1, 1, 1.0}), 1.7);
    EXPECT_NEAR(st.kernel()(0, 0), 1.7, 1e-14);
    EXPECT_NEAR(st.covariance()(0, 0), 1.0 / (2 * 1.7), 1e-14);
    EXPECT_NEAR(vacuum_energy(ground_state_kernel(build_lattice({1, 1, 1.0}), 1.0)), 0.5, 1e-15);
    EXPECT_NEAR(vacuum_variance(ground_state_kernel(build_lattice({1, 1, 1.0}), 2.0)), 0.25, 1e-15);
}

TEST(GroundState, TwoSiteFrequenciesAndSums) {
    // M = 2 wraps both bonds onto the same pair: -lap = [[2,-2],[-2,2]],
    // K = [[3,-2],[-2,3]] with eigenvalues 1 and 5.
    const auto lat = build_lattice({1, 2, 1.0});
    const auto oracle = coupling_matrix_oracle(lat, 1.0);
    EXPECT_NEAR(oracle.matrix(0, 0), 3.0, 1e-15);
    EXPECT_NEAR(oracle.matrix(0, 1), -2.0, 1e-15);
    EXPECT_NEAR(oracle.spectrum(0), 1.0, 1e-12);
    EXPECT_NEAR(oracle.spectrum(1), 5.0, 1e-12);

    const auto st = ground_state_kernel(lat, 1.0);
    EXPECT_NEAR(st.frequencies()[0], 1.0, 1e-15);
    EXPECT_NEAR(st.frequencies()[1], std::sqrt(5.0), 1e-14);
    EXPECT_NEAR(vacuum_energy(st), (1 + std::sqrt(5.0)) / 2, 1e-14);
    EXPECT_NEAR(vacuum_energy(st), 1.618034, 1e-6);
    EXPECT_NEAR(vacuum_variance(st), 0.25 * (1 + 1 / std::sqrt(5.0)), 1e-14);
    EXPECT_NEAR(vacuum_variance(st), 0.361803, 1e-6);
    EXPECT_NEAR(st.field_covariance()(0, 0), vacuum_variance(st), 1e-14);
}

TEST(GroundState, RejectsNonPositiveMass) {
    EXPECT_THROW(ground_state_kernel(build_lattice({1, 4, 1.0}), 0.0), ValidationError);
    EXPECT_THROW(ground_state_kernel(build_lattice({1, 4, 1.0}), -1.0), ValidationError);
}

class KernelOracle : public ::testing::TestWithParam<LatticeSpec> {};

TEST_P(KernelOracle, SpectralKernelEqualsDenseSquareRoot) {
    const Lattice lat(GetParam());
    const double m = 0.8;
    const auto st = ground_state_kernel(lat, m);
    const auto& g = st.kernel();
    const auto n = g.rows();

    EXPECT_NEAR((g - g.transpose()).cwiseAbs().maxCoeff(), 0.0, 1e-12);
    EXPECT_NEAR((g - dense_sqrt_kernel(lat, m)).cwiseAbs().maxCoeff(), 0.0, 1e-10);
    EXPECT_NEAR((g * (2.0 * st.covariance()) - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff(), 0.0, 1e-10);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_g(g);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_c(st.covariance());
    EXPECT_GT(es_g.eigenvalues().minCoeff(), 0.0);
    EXPECT_GT(es_c.eigenvalues().minCoeff(), 0.0);

    // E0 = 1/2 trace sqrt(K); <phi^2> equals every diagonal entry of the field covariance
    const auto oracle = coupling_matrix_oracle(lat, m);
    EXPECT_NEAR(vacuum_energy(st), 0.5 * oracle.spectrum.cwiseSqrt().sum(), 1e-8);
    const Eigen::MatrixXd fc = st.field_covariance();
    for (Eigen::Index i = 0; i < n; ++i) EXPECT_NEAR(fc(i, i), vacuum_variance(st), 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Lattices, KernelOracle,
                         ::testing::Values(LatticeSpec{1, 1, 1.0}, LatticeSpec{1, 2, 1.0}, LatticeSpec{1, 7, 0.6},
                                           LatticeSpec{1, 64, 0.25}, LatticeSpec{2, 5, 1.5}, LatticeSpec{2, 8, 0.5},
                                           LatticeSpec{3, 4, 0.9}));

TEST(CouplingOracle, MasslessRingSpectrum) {
    const auto o = coupling_matrix_oracle(build_lattice({1, 4, 1.0}), 0.0);
    const double expected[] = {0, 2, 2, 4};
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(o.spectrum(i), expected[i], 1e-12);
    const auto single = coupling_matrix_oracle(build_lattice({1, 1, 1.0}), 1.5);
    EXPECT_NEAR(single.matrix(0, 0), 2.25, 1e-15);
}

TEST(CouplingOracle, SizeGuard) {
    EXPECT_THROW(coupling_matrix_oracle(build_lattice({3, 17, 1.0}), 1.0), SizeLimitError);
    // spectral quantities still work past the dense limit
    const auto big = ground_state_kernel(build_lattice({3, 17, 1.0}), 1.0);
    EXPECT_FALSE(big.has_dense());
    EXPECT_GT(vacuum_energy(big), 0.0);
    EXPECT_THROW(big.kernel(), SizeLimitError);
}

TEST(Divergence, RefinementAtFixedVolumeIncreasesE0AndVariance) {
    const double length = 8.0;
    double prev_e = 0.0;
    double prev_v = 0.0;
    for (int m : {8, 16, 32, 64, 128}) {
        const auto st = ground_state_kernel(build_lattice({1, m, length / m}), 1.0);
        const double e = vacuum_energy(st);
        const double v = vacuum_variance(st);
        EXPECT_GT(e, prev_e);
        EXPECT_GT(v, prev_v);
        prev_e = e;
        prev_v = v;
    }
}
