#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "edfield/error.hpp"
#include "edfield/free_field.hpp"
#include "edfield/lattice.hpp"

namespace edfield {

struct ScanRow {
    double spacing = 0.0;
    double cutoff = 0.0;  // Lambda = pi / a
    int sites_per_axis = 0;
    double energy_density = 0.0;  // E0 / V
    double variance = 0.0;        // <phi_x^2>
};

/**
 * Exact vacuum sums at fixed physical box length L = M a for each spacing in
 * `spacings` (strictly decreasing). L / a must be an integer.
 */
inline std::vector<ScanRow> cutoff_scan(double mass, double length, std::span<const double> spacings, int dim = 1) {
    if (!(mass > 0.0)) throw ValidationError("mass", "must be > 0");
    if (!(length > 0.0)) throw ValidationError("volume", "box length must be > 0");
    if (spacings.empty()) throw ValidationError("spacings", "must be nonempty");
    std::vector<ScanRow> rows;
    for (std::size_t i = 0; i < spacings.size(); ++i) {
        const double a = spacings[i];
        const std::string field = "spacings[" + std::to_string(i) + "]";
        if (!(a > 0.0)) throw ValidationError(field, "must be > 0");
        if (i > 0 && !(a < spacings[i - 1])) throw ValidationError(field, "spacings must be strictly decreasing");
        const double m_real = length / a;
        const double m_round = std::round(m_real);
        if (m_round < 1.0 || std::abs(m_real - m_round) > 1e-9 * m_real)
            throw ValidationError(field, "box length / spacing = " + std::to_string(m_real) + " is not an integer");
        const GaussianState vac(Lattice({dim, static_cast<int>(m_round), a}), mass);
        ScanRow row;
        row.spacing = a;
        row.cutoff = std::numbers::pi / a;
        row.sites_per_axis = static_cast<int>(m_round);
        row.energy_density = vacuum_energy(vac) / vac.lattice().volume();
        row.variance = vacuum_variance(vac);
        rows.push_back(row);
    }
    return rows;
}

enum class ScalingModel { power_law, log };
enum class ScanColumn { energy_density, variance };

struct ScalingFit {
    double coefficient = 0.0;  // c in c Lambda^p, or intercept in c + s ln Lambda
    double exponent = 0.0;     // p, or slope s
    double residual = 0.0;     // RMS residual in the transformed coordinates
};

/// Least squares: ln y = ln c + p ln x (power_law) or y = c + s ln x (log).
inline ScalingFit fit_scaling(std::span<const double> x, std::span<const double> y, ScalingModel model) {
    if (x.size() != y.size()) throw ValidationError("table", "column lengths differ");
    if (x.size() < 4) throw ValidationError("table", "need at least 4 rows");
    std::vector<double> u(x.size());
    std::vector<double> w(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0)) throw ValidationError("table", "cutoff values must be > 0");
        u[i] = std::log(x[i]);
        if (model == ScalingModel::power_law) {
            if (!(y[i] > 0.0)) throw ValidationError("table", "power-law fit needs positive values");
            w[i] = std::log(y[i]);
        } else {
            w[i] = y[i];
        }
    }
    const double n = static_cast<double>(u.size());
    double su = 0.0, sw = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        su += u[i];
        sw += w[i];
    }
    const double mu = su / n;
    const double mw = sw / n;
    double suu = 0.0, suw = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        suu += (u[i] - mu) * (u[i] - mu);
        suw += (u[i] - mu) * (w[i] - mw);
    }
    if (!(suu > 1e-300)) throw ValidationError("table", "degenerate: all cutoffs equal");
    ScalingFit fit;
    fit.exponent = suw / suu;
    const double intercept = mw - fit.exponent * mu;
    fit.coefficient = model == ScalingModel::power_law ? std::exp(intercept) : intercept;
    double ss = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double r = w[i] - (intercept + fit.exponent * u[i]);
        ss += r * r;
    }
    fit.residual = std::sqrt(ss / n);
    return fit;
}

inline ScalingFit fit_scaling(std::span<const ScanRow> table, ScanColumn column, ScalingModel model) {
    std::vector<double> x, y;
    for (const auto& r : table) {
        x.push_back(r.cutoff);
        y.push_back(column == ScanColumn::variance ? r.variance : r.energy_density);
    }
    return fit_scaling(x, y, model);
}

}  // namespace edfield
