#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "edfield/error.hpp"

namespace edfield {

/*
 * Units: hbar = eta = c = 1 unless an eta argument says otherwise. Lengths are
 * in units of the lattice spacing's unit, the field is dimensionless on the
 * lattice. Sums over modes relate to continuum integrals through
 *     sum_k f(k)  <->  V * int d^dk / (2 pi)^d f(k),   V = (M a)^dim.
 */

enum class Boundary { periodic };

struct LatticeSpec {
    int dim = 1;
    int sites_per_axis = 1;
    double spacing = 1.0;
    Boundary boundary = Boundary::periodic;

    void validate() const {
        if (dim < 1 || dim > 3) throw ValidationError("dim", "must be 1, 2 or 3");
        if (sites_per_axis < 1) throw ValidationError("sites_per_axis", "must be >= 1");
        if (!(spacing > 0.0) || !std::isfinite(spacing))
            throw ValidationError("spacing", "must be finite and > 0");
    }
};

/// Mode vector; components beyond `dim` are zero.
using ModeVector = std::array<double, 3>;
using SiteCoords = std::array<int, 3>;

/**
 * Periodic hypercubic lattice with M^dim sites.
 *
 * Sites and modes share the same row-major enumeration: the first axis is the
 * slowest index. Mode n has k_i = 2 pi n_i / (M a), n_i in {0..M-1}.
 */
class Lattice {
public:
    explicit Lattice(LatticeSpec spec) : spec_(spec) {
        spec_.validate();
        n_sites_ = 1;
        for (int d = 0; d < spec_.dim; ++d) n_sites_ *= static_cast<std::size_t>(spec_.sites_per_axis);

        const double dk = 2.0 * std::numbers::pi / (spec_.sites_per_axis * spec_.spacing);
        wavenumbers_.resize(n_sites_);
        for (std::size_t i = 0; i < n_sites_; ++i) {
            const SiteCoords n = coords(i);
            ModeVector k{0.0, 0.0, 0.0};
            for (int d = 0; d < spec_.dim; ++d) k[d] = dk * n[d];
            wavenumbers_[i] = k;
        }
    }

    const LatticeSpec& spec() const noexcept { return spec_; }
    int dim() const noexcept { return spec_.dim; }
    int sites_per_axis() const noexcept { return spec_.sites_per_axis; }
    double spacing() const noexcept { return spec_.spacing; }
    std::size_t n_sites() const noexcept { return n_sites_; }
    double cell_volume() const noexcept { return std::pow(spec_.spacing, spec_.dim); }
    double volume() const noexcept { return cell_volume() * static_cast<double>(n_sites_); }

    std::span<const ModeVector> wavenumbers() const noexcept { return wavenumbers_; }

    SiteCoords coords(std::size_t index) const noexcept {
        SiteCoords c{0, 0, 0};
        const auto m = static_cast<std::size_t>(spec_.sites_per_axis);
        for (int d = spec_.dim - 1; d >= 0; --d) {
            c[d] = static_cast<int>(index % m);
            index /= m;
        }
        return c;
    }

    std::size_t index(const SiteCoords& c) const noexcept {
        const int m = spec_.sites_per_axis;
        std::size_t idx = 0;
        for (int d = 0; d < spec_.dim; ++d) {
            const int wrapped = ((c[d] % m) + m) % m;
            idx = idx * static_cast<std::size_t>(m) + static_cast<std::size_t>(wrapped);
        }
        return idx;
    }

    /// Periodic neighbour of `site` one step along `axis` (step = +1 or -1).
    std::size_t neighbor(std::size_t site, int axis, int step) const noexcept {
        SiteCoords c = coords(site);
        c[axis] += step;
        return index(c);
    }

    /// Site index of the displacement x' - x, wrapped into the lattice.
    std::size_t displacement(std::size_t from, std::size_t to) const noexcept {
        const SiteCoords a = coords(from);
        const SiteCoords b = coords(to);
        SiteCoords d{0, 0, 0};
        for (int i = 0; i < spec_.dim; ++i) d[i] = b[i] - a[i];
        return index(d);
    }

private:
    LatticeSpec spec_;
    std::size_t n_sites_ = 0;
    std::vector<ModeVector> wavenumbers_;
};

inline Lattice build_lattice(const LatticeSpec& spec) { return Lattice(spec); }

/// One field configuration: a finite real value per lattice site.
class FieldConfig {
public:
    FieldConfig() = default;

    explicit FieldConfig(std::vector<double> values) : values_(std::move(values)) {
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (!std::isfinite(values_[i]))
                throw ValidationError("values[" + std::to_string(i) + "]", "field value must be finite");
        }
    }

    static FieldConfig zeros(std::size_t n) { return FieldConfig(std::vector<double>(n, 0.0)); }
    static FieldConfig constant(std::size_t n, double v) { return FieldConfig(std::vector<double>(n, v)); }

    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const noexcept { return values_[i]; }
    std::span<const double> values() const noexcept { return values_; }
    const std::vector<double>& vector() const noexcept { return values_; }

    Eigen::Map<const Eigen::VectorXd> as_eigen() const noexcept {
        return {values_.data(), static_cast<Eigen::Index>(values_.size())};
    }

    friend bool operator==(const FieldConfig&, const FieldConfig&) = default;

private:
    std::vector<double> values_;
};

/// Lattice frequency omega_k = sqrt(m^2 + sum_i (2/a)^2 sin^2(k_i a / 2)).
inline double dispersion(const Lattice& lattice, const ModeVector& k, double mass) {
    if (!(mass >= 0.0) || !std::isfinite(mass)) throw ValidationError("mass", "must be finite and >= 0");
    const double a = lattice.spacing();
    double w2 = mass * mass;
    for (int d = 0; d < lattice.dim(); ++d) {
        const double s = (2.0 / a) * std::sin(0.5 * k[d] * a);
        w2 += s * s;
    }
    return std::sqrt(w2);
}

/// omega_k for every mode, in canonical mode order.
inline std::vector<double> dispersion_table(const Lattice& lattice, double mass) {
    std::vector<double> w;
    w.reserve(lattice.n_sites());
    for (const auto& k : lattice.wavenumbers()) w.push_back(dispersion(lattice, k, mass));
    return w;
}

/// Squared configuration-space distance a^dim * sum_x (phi1_x - phi2_x)^2.
inline double config_distance(const Lattice& lattice, const FieldConfig& phi1, const FieldConfig& phi2) {
    if (phi1.size() != phi2.size())
        throw ValidationError("phi2", "length " + std::to_string(phi2.size()) + " does not match " +
                                          std::to_string(phi1.size()));
    double sum = 0.0;
    for (std::size_t i = 0; i < phi1.size(); ++i) {
        const double d = phi1[i] - phi2[i];
        sum += d * d;
    }
    return lattice.cell_volume() * sum;
}

namespace detail {

inline void require_lattice_size(const Lattice& lattice, std::size_t n, const char* field) {
    if (n != lattice.n_sites())
        throw ValidationError(field, "has " + std::to_string(n) + " entries, lattice has " +
                                         std::to_string(lattice.n_sites()) + " sites");
}

}  // namespace detail

/// Nearest-neighbour periodic Laplacian (sum_nb phi - 2 dim phi_x) / a^2.
inline FieldConfig discrete_laplacian(const Lattice& lattice, const FieldConfig& phi) {
    detail::require_lattice_size(lattice, phi.size(), "phi");
    const double inv_a2 = 1.0 / (lattice.spacing() * lattice.spacing());
    std::vector<double> out(phi.size());
    for (std::size_t x = 0; x < phi.size(); ++x) {
        double acc = -2.0 * lattice.dim() * phi[x];
        for (int axis = 0; axis < lattice.dim(); ++axis) {
            acc += phi[lattice.neighbor(x, axis, +1)];
            acc += phi[lattice.neighbor(x, axis, -1)];
        }
        out[x] = acc * inv_a2;
    }
    return FieldConfig(std::move(out));
}

/// Dense matrix of discrete_laplacian. Neighbour weights accumulate, so M = 2
/// wraps to a doubled bond and M = 1 gives the zero matrix.
inline Eigen::MatrixXd dense_laplacian(const Lattice& lattice) {
    const std::size_t n = lattice.n_sites();
    if (n > kDenseLimit) throw SizeLimitError("dense Laplacian limited to 4096 sites");
    const double inv_a2 = 1.0 / (lattice.spacing() * lattice.spacing());
    Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t x = 0; x < n; ++x) {
        const auto xi = static_cast<Eigen::Index>(x);
        lap(xi, xi) -= 2.0 * lattice.dim() * inv_a2;
        for (int axis = 0; axis < lattice.dim(); ++axis) {
            for (int step : {+1, -1}) {
                lap(xi, static_cast<Eigen::Index>(lattice.neighbor(x, axis, step))) += inv_a2;
            }
        }
    }
    return lap;
}

}  // namespace edfield
