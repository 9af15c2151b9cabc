#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>

#include "edfield/error.hpp"

namespace edfield {

/// Uniform grid over field-value space for 1 or 2 degrees of freedom.
struct GridSpec {
    int dof = 1;
    double phi_max = 8.0;
    int points = 1024;  // per axis

    void validate() const {
        if (dof < 1 || dof > 2) throw ValidationError("grid.dof", "grid routes support 1 or 2 degrees of freedom");
        if (!(phi_max > 0.0) || !std::isfinite(phi_max)) throw ValidationError("grid.phi_max", "must be > 0");
        if (points < 3) throw ValidationError("grid.points", "must be >= 3");
    }
};

/**
 * Nodes phi_j = -phi_max + j * dx, j = 0..points-1, on each axis, with
 * Dirichlet (zero) values assumed outside. Flat index is row-major with axis 0
 * slowest.
 */
class FieldGrid {
public:
    FieldGrid() : FieldGrid(GridSpec{}) {}
    explicit FieldGrid(GridSpec spec) : spec_(spec) {
        spec_.validate();
        dx_ = 2.0 * spec_.phi_max / (spec_.points - 1);
        size_ = static_cast<std::size_t>(spec_.points);
        if (spec_.dof == 2) size_ *= static_cast<std::size_t>(spec_.points);
    }

    const GridSpec& spec() const noexcept { return spec_; }
    int dof() const noexcept { return spec_.dof; }
    int points() const noexcept { return spec_.points; }
    double phi_max() const noexcept { return spec_.phi_max; }
    double spacing() const noexcept { return dx_; }
    std::size_t size() const noexcept { return size_; }
    double cell_volume() const noexcept { return spec_.dof == 1 ? dx_ : dx_ * dx_; }

    double node(int j) const noexcept { return -spec_.phi_max + j * dx_; }

    std::array<int, 2> indices(std::size_t flat) const noexcept {
        if (spec_.dof == 1) return {static_cast<int>(flat), 0};
        const auto p = static_cast<std::size_t>(spec_.points);
        return {static_cast<int>(flat / p), static_cast<int>(flat % p)};
    }

    std::size_t flat(int i, int j = 0) const noexcept {
        return spec_.dof == 1 ? static_cast<std::size_t>(i)
                              : static_cast<std::size_t>(i) * static_cast<std::size_t>(spec_.points) +
                                    static_cast<std::size_t>(j);
    }

    /// Field-value coordinates of a flat index (unused component zero).
    std::array<double, 2> coordinate(std::size_t flat_index) const noexcept {
        const auto ij = indices(flat_index);
        return {node(ij[0]), spec_.dof == 2 ? node(ij[1]) : 0.0};
    }

    /// Flat stride for one step along `axis`.
    std::size_t stride(int axis) const noexcept {
        return (spec_.dof == 2 && axis == 0) ? static_cast<std::size_t>(spec_.points) : 1;
    }

    /// Index of `flat_index` along `axis`.
    int axis_index(std::size_t flat_index, int axis) const noexcept { return indices(flat_index)[axis]; }

    friend bool operator==(const FieldGrid& a, const FieldGrid& b) noexcept {
        return a.spec_.dof == b.spec_.dof && a.spec_.points == b.spec_.points && a.spec_.phi_max == b.spec_.phi_max;
    }

private:
    GridSpec spec_;
    double dx_ = 0.0;
    std::size_t size_ = 0;
};

}  // namespace edfield
