#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "edfield/experiment.hpp"
#include "edfield/free_field.hpp"
#include "edfield/madelung.hpp"

namespace edfield {

/// Pinned tolerances; every check passes when measured <= tolerance.
struct ToleranceSet {
    std::map<std::string, double> values;
    double quick_widening = 1.5;  // applied to statistical checks under --quick

    static ToleranceSet defaults() {
        ToleranceSet t;
        t.values = {
            {"vacuum.max_abs_error", 1e-8},
            {"vacuum.seconds", 1.0},
            {"stationarity.single_site_z", 3.0},
            {"stationarity.lattice_max_z", 4.0},
            {"stationarity.seconds", 60.0},
            {"clock.max_z", 4.0},
            {"clock.drift_exponent_error", 0.05},
            {"clock.fluctuation_exponent_error", 0.02},
            {"route.l1", 1e-3},
            {"route.mean_error", 1e-3},
            {"route.seconds", 60.0},
            {"energy.schrodinger_drift", 1e-6},
            {"energy.fp_hj_drift", 1e-4},
            {"energy.vacuum_drift", 1e-9},
            {"divergence.slope_rel_error", 0.10},
            {"divergence.exponent_rel_error", 0.05},
            {"divergence.nonmonotone_steps", 0.0},
            {"divergence.seconds", 10.0},
            {"anharmonic.abs_error", 1e-4},
            {"madelung.round_trip", 1e-12},
            {"madelung.velocity_identity", 1e-12},
            {"reproducibility.differing_files", 0.0},
        };
        return t;
    }

    double at(const std::string& key) const {
        const auto it = values.find(key);
        if (it == values.end()) throw ValidationError("tolerances." + key, "missing");
        return it->second;
    }
};

inline bool is_statistical(const std::string& key) {
    return key.rfind("stationarity.", 0) == 0 ? key != "stationarity.seconds" : key.rfind("clock.", 0) == 0;
}

inline json to_json(const ToleranceSet& t) {
    json tol = json::object();
    for (const auto& [k, v] : t.values) tol[k] = v;
    return {{"schema_version", 1}, {"quick_widening", t.quick_widening}, {"tolerances", tol}};
}

/// Keys absent from the file keep their defaults; unknown keys are errors.
inline ToleranceSet parse_tolerances(const json& doc) {
    ToleranceSet t = ToleranceSet::defaults();
    detail::Section root(doc, "");
    const json* ver = root.find("schema_version");
    if (!ver || !ver->is_number_integer() || ver->get<int>() != 1)
        throw ValidationError("schema_version", "tolerance fixture must declare schema_version 1");
    t.quick_widening = root.number("quick_widening", t.quick_widening);
    if (!(t.quick_widening >= 1.0)) throw ValidationError("quick_widening", "must be >= 1");
    if (auto tol = root.child("tolerances")) {
        const ToleranceSet defaults = ToleranceSet::defaults();
        for (const auto& [key, def] : defaults.values) {
            const double v = tol->number(key, def);
            if (!(v >= 0.0)) throw ValidationError(tol->field(key), "must be >= 0");
            t.values[key] = v;
        }
        tol->finish();
    }
    root.finish();
    return t;
}

inline ToleranceSet load_tolerances(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ValidationError("<root>", std::string("not valid JSON: ") + e.what());
    }
    return parse_tolerances(doc);
}

struct Check {
    std::string key;
    double measured = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct CriterionResult {
    int id = 0;
    std::string name;
    std::vector<Check> checks;
    std::string note;  // set when the criterion aborted
    double seconds = 0.0;

    bool pass() const {
        if (!note.empty() || checks.empty()) return false;
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

struct ValidationReport {
    bool quick = false;
    std::vector<CriterionResult> criteria;

    bool all_pass() const {
        for (const auto& c : criteria)
            if (!c.pass()) return false;
        return true;
    }

    std::string table() const {
        std::string out;
        char line[256];
        std::snprintf(line, sizeof line, "%-9s  %-34s  %-14s  %-10s  %s\n", "criterion", "check", "measured", "tolerance",
                      "verdict");
        out += line;
        for (const auto& c : criteria) {
            for (const auto& k : c.checks) {
                std::snprintf(line, sizeof line, "%-9d  %-34s  %-14.6g  %-10.3g  %s\n", c.id, k.key.c_str(), k.measured,
                              k.tolerance, k.pass ? "PASS" : "FAIL");
                out += line;
            }
            if (!c.note.empty()) out += std::to_string(c.id) + "          aborted: " + c.note + "\n";
        }
        return out;
    }

    std::string verdict_lines() const {
        std::string out;
        for (const auto& c : criteria) {
            out += "criterion " + std::to_string(c.id) + " " + c.name + ": " + (c.pass() ? "PASS" : "FAIL");
            if (!c.pass()) {
                std::string failed;
                for (const auto& k : c.checks)
                    if (!k.pass) failed += (failed.empty() ? "" : ", ") + k.key;
                if (!c.note.empty()) failed += (failed.empty() ? "" : ", ") + std::string("aborted");
                out += " (" + failed + ")";
            }
            out += "\n";
        }
        return out;
    }

    std::string csv() const {
        CsvTable t({"criterion", "name", "check", "measured", "tolerance", "verdict"});
        for (const auto& c : criteria)
            for (const auto& k : c.checks)
                t.add_row({static_cast<std::int64_t>(c.id), c.name, k.key, k.measured, k.tolerance,
                           std::string(k.pass ? "PASS" : "FAIL")});
        return t.str();
    }
};

struct ValidationOptions {
    bool quick = false;
    ToleranceSet tolerances = ToleranceSet::defaults();
    std::set<int> only;  // empty: all criteria
    std::uint64_t seed = 20240601;
    std::filesystem::path scratch;  // for the reproducibility runs; temp dir if empty
};

namespace detail {

class CheckSink {
public:
    CheckSink(CriterionResult& r, const ValidationOptions& o) : r_(r), o_(o) {}

    void add(const std::string& key, double measured) {
        double tol = o_.tolerances.at(key);
        if (o_.quick && is_statistical(key)) tol *= o_.tolerances.quick_widening;
        r_.checks.push_back({key, measured, tol, measured <= tol});
    }

    std::size_t walkers(std::size_t full, std::size_t quick) const { return o_.quick ? quick : full; }
    std::uint64_t seed(std::uint64_t offset) const { return o_.seed + offset; }

private:
    CriterionResult& r_;
    const ValidationOptions& o_;
};

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

inline void criterion_vacuum(CheckSink& out) {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (int m : {2, 4, 8, 16, 32}) {
        const Lattice lat({1, m, 1.0});
        const double e0 = vacuum_energy(GaussianState(lat, 1.0));
        const auto oracle = coupling_matrix_oracle(lat, 1.0);
        const double dense = 0.5 * oracle.spectrum.cwiseMax(0.0).cwiseSqrt().sum();
        worst = std::max(worst, std::abs(e0 - dense));
    }
    out.add("vacuum.max_abs_error", worst);
    out.add("vacuum.seconds", seconds_since(t0));
}

inline void criterion_stationarity(CheckSink& out) {
    const auto t0 = std::chrono::steady_clock::now();
    {
        const VacuumEntropyModel model(GaussianState(Lattice({1, 1, 1.0}), 1.0));
        const std::size_t n = out.walkers(100000, 10000);
        auto e = make_ensemble(std::vector<FieldConfig>(n, FieldConfig::constant(1, 0.0)), out.seed(1));
        e = propagate_ensemble(std::move(e), model, 0.01, 1000);
        const auto mom = ensemble_moments(e);
        out.add("stationarity.single_site_z", std::abs(mom.covariance(0, 0) - 0.5) / mom.covariance_se(0, 0));
    }
    {
        const GaussianState st(Lattice({1, 16, 1.0}), 1.0);
        const VacuumEntropyModel model(st);
        const std::size_t n = out.walkers(40000, 5000);
        auto e = make_ensemble(std::vector<FieldConfig>(n, FieldConfig::constant(16, 0.0)), out.seed(2));
        e = propagate_ensemble(std::move(e), model, 0.005, 1000);  // t = 5, covariance settled to e^-10
        const auto mom = ensemble_moments(e);
        const Eigen::MatrixXd target = st.field_covariance();
        // walkers are independent: SE from the Gaussian sampling variance (C_ii C_jj + C_ij^2) / n,
        // steadier than 32 batch means
        const Eigen::MatrixXd& c = mom.covariance;
        double worst = 0.0;
        for (Eigen::Index i = 0; i < 16; ++i)
            for (Eigen::Index j = 0; j <= i; ++j) {
                const double se = std::sqrt((c(i, i) * c(j, j) + c(i, j) * c(i, j)) / static_cast<double>(n));
                worst = std::max(worst, std::abs(c(i, j) - target(i, j)) / se);
            }
        out.add("stationarity.lattice_max_z", worst);
    }
    out.add("stationarity.seconds", seconds_since(t0));
}

inline void criterion_clock(CheckSink& out) {
    const double eta = 1.0;
    const double dt = 0.01;
    const GaussianState st(Lattice({1, 4, 1.0}), 1.0);
    const VacuumEntropyModel model(st);
    const std::size_t n = out.walkers(20000, 5000);
    auto e = vacuum_ensemble(st, n, out.seed(3));
    double worst = 0.0;
    for (int step = 0; step < 10; ++step) {
        auto next = propagate_ensemble(e, model, dt, 1, eta);
        for (std::size_t s = 0; s < 4; ++s) {
            double s1 = 0, s2 = 0;
            for (std::size_t w = 0; w < n; ++w) {
                const auto b = drift_velocity(model, e.walkers[w], 0.0, eta);
                const double d = next.walkers[w][s] - e.walkers[w][s] - dt * b[s];
                s1 += d;
                s2 += d * d;
            }
            const double nn = static_cast<double>(n);
            const double var = s2 / nn - (s1 / nn) * (s1 / nn);
            worst = std::max(worst, std::abs(var - eta * dt) / (eta * dt * std::sqrt(2.0 / nn)));
        }
        e = std::move(next);
    }
    out.add("clock.max_z", worst);

    // one step from far out: the mean shift goes as dt, the spread as dt^(1/2)
    const VacuumEntropyModel single(GaussianState(Lattice({1, 1, 1.0}), 1.0));
    const std::size_t draws = out.walkers(1000000, 100000);
    std::vector<double> log_dt, log_mean, log_rms;
    std::uint64_t offset = 10;
    for (double h : {1e-1, 1e-2, 1e-3, 1e-4}) {
        auto ens = make_ensemble(std::vector<FieldConfig>(draws, FieldConfig::constant(1, 50.0)), out.seed(offset++));
        ens = propagate_ensemble(std::move(ens), single, h, 1);
        double s1 = 0, s2 = 0;
        for (const auto& w : ens.walkers) {
            const double d = w[0] - 50.0;
            s1 += d;
            s2 += d * d;
        }
        const double nn = static_cast<double>(draws);
        const double mean = s1 / nn;
        log_dt.push_back(std::log(h));
        log_mean.push_back(std::log(std::abs(mean)));
        log_rms.push_back(0.5 * std::log(s2 / nn - mean * mean));
    }
    out.add("clock.drift_exponent_error", std::abs(fit_slope(log_dt, log_mean) - 1.0));
    out.add("clock.fluctuation_exponent_error", std::abs(fit_slope(log_dt, log_rms) - 0.5));
}

struct RouteRun {
    double l1 = 0.0;
    double mean_error = 0.0;
    double cn_drift = 0.0;
    double fp_drift = 0.0;
    double seconds = 0.0;
};

// Coherent state, one period, both routes on the same 1024-point grid.
inline RouteRun coherent_period_run() {
    const auto t0 = std::chrono::steady_clock::now();
    const double period = 2.0 * std::numbers::pi;
    const double phi0 = 1.0;
    const FieldGrid g({1, 8.0, 1024});
    const auto h = build_hamiltonian(g, {1.0});
    const int checks = 20;
    const int cn_per_check = 100;
    const CrankNicolson cn(h, period / (checks * cn_per_check));
    auto w = coherent_state(g, 1.0, phi0);
    auto s = from_wavefunction(w);
    const double dt = fp_hj_stable_dt(h, s);
    std::vector<EpistemicState> traj_cn{s}, traj_fp{s};
    RouteRun r;
    for (int c = 1; c <= checks; ++c) {
        for (int k = 0; k < cn_per_check; ++k) w = cn.step(w);
        const double target = period * c / checks;
        while (s.t() < target - 1e-12) s = fp_hj_step(s, h, std::min(dt, target - s.t()));
        double d = 0.0, mean_cn = 0.0, mean_fp = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double q = g.coordinate(i)[0];
            d += std::abs(s.rho()[i] - std::norm(w.psi()[i]));
            mean_cn += std::norm(w.psi()[i]) * q;
            mean_fp += s.rho()[i] * q;
        }
        const double exact = phi0 * std::cos(target);
        r.l1 = std::max(r.l1, d * g.cell_volume());
        r.mean_error = std::max({r.mean_error, std::abs(mean_cn * g.cell_volume() - exact),
                                 std::abs(mean_fp * g.cell_volume() - exact)});
        traj_cn.push_back(from_wavefunction(w));
        traj_fp.push_back(s);
    }
    r.seconds = seconds_since(t0);
    r.cn_drift = conservation_report(traj_cn, h, 1.0).max_relative_drift;
    r.fp_drift = conservation_report(traj_fp, h, 1.0).max_relative_drift;
    return r;
}

inline void criterion_route(CheckSink& out, const RouteRun& r) {
    out.add("route.l1", r.l1);
    out.add("route.mean_error", r.mean_error);
    out.add("route.seconds", r.seconds);
}

inline void criterion_energy(CheckSink& out, const RouteRun& r) {
    out.add("energy.schrodinger_drift", r.cn_drift);
    out.add("energy.fp_hj_drift", r.fp_drift);
    const FieldGrid g({1, 8.0, 1024});
    const auto h = build_hamiltonian(g, {1.0});
    std::vector<EpistemicState> traj{gaussian_vacuum(g, h.potential_spec())};
    const double dt = fp_hj_stable_dt(h, traj.front());
    for (int k = 0; k < 200; ++k) traj.push_back(fp_hj_step(traj.back(), h, dt));
    out.add("energy.vacuum_drift", conservation_report(traj, h, 1.0).max_relative_drift);
}

inline void criterion_divergence(CheckSink& out) {
    const auto t0 = std::chrono::steady_clock::now();
    const ScanConfig sc;  // L = 32, a = 1/2 .. 1/16, Lambda / m up to 50
    const auto rows = cutoff_scan(sc.mass, sc.length, sc.spacings, sc.dim);
    const auto var = fit_scaling(rows, ScanColumn::variance, ScalingModel::log);
    const auto e0 = fit_scaling(rows, ScanColumn::energy_density, ScalingModel::power_law);
    int bad = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (!(rows[i].variance > rows[i - 1].variance)) ++bad;
        if (!(rows[i].energy_density > rows[i - 1].energy_density)) ++bad;
    }
    out.add("divergence.slope_rel_error", std::abs(var.exponent * 2.0 * std::numbers::pi - 1.0));
    out.add("divergence.exponent_rel_error", std::abs(e0.exponent / 2.0 - 1.0));
    out.add("divergence.nonmonotone_steps", bad);
    out.add("divergence.seconds", seconds_since(t0));
}

inline void criterion_anharmonic(CheckSink& out) {
    const double lambda = 0.01;
    const PotentialSpec pot{1.0, 0.0, lambda};
    // 3-point stencil error removed by Richardson extrapolation over nested grids
    const HamiltonianOptions loose{1.0, 4.0};
    const double coarse =
        eigensolve_oracle(build_hamiltonian(FieldGrid({1, 8.0, 513}), pot, std::nullopt, loose), false).values(0);
    const double fine =
        eigensolve_oracle(build_hamiltonian(FieldGrid({1, 8.0, 1025}), pot, std::nullopt, loose), false).values(0);
    const double e0 = fine + (fine - coarse) / 3.0;
    const double first_order = 0.5 + 0.75 * lambda;
    out.add("anharmonic.abs_error", std::abs(e0 - first_order));
}

inline void criterion_madelung(CheckSink& out) {
    const FieldGrid g({1, 6.0, 801});
    std::vector<Complex> psi(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = g.coordinate(i)[0];
        psi[i] = std::exp(-0.6 * (x - 0.4) * (x - 0.4)) * std::polar(1.0, 2.3 * x + 0.7 * x * x + 1.1);
    }
    const WaveState w(g, normalized_wave(g, psi));
    const auto s = from_wavefunction(w);
    const auto back = to_wavefunction(s);
    std::size_t k = 0;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (std::abs(w.psi()[i]) > std::abs(w.psi()[k])) k = i;
    const Complex ratio = back.psi()[k] / w.psi()[k];
    const Complex unit = ratio / std::abs(ratio);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        // the phase is dropped below the density floor, so compare moduli there
        const double d = s.phase_defined(i) ? std::abs(w.psi()[i] * unit - back.psi()[i])
                                            : std::abs(std::abs(w.psi()[i]) - std::abs(back.psi()[i]));
        worst = std::max(worst, d);
    }
    out.add("madelung.round_trip", worst);

    double identity = 0.0;
    const auto check = [&](const EpistemicState& st) {
        const auto v = velocities(st);
        for (int axis = 0; axis < v.dof; ++axis)
            for (std::size_t i = 0; i < st.grid().size(); ++i)
                if (v.defined[i])
                    identity = std::max(identity, std::abs(v.drift[axis][i] - (v.current[axis][i] - v.osmotic[axis][i])));
    };
    check(s);
    const FieldGrid g2({2, 4.0, 81});
    std::vector<Complex> psi2(g2.size());
    for (std::size_t i = 0; i < g2.size(); ++i) {
        const auto q = g2.coordinate(i);
        psi2[i] = std::exp(-0.5 * q[0] * q[0] - 0.8 * (q[1] - 0.2) * (q[1] - 0.2) + 0.1 * q[0] * q[1]) *
                  std::polar(1.0, 1.5 * q[0] - 0.4 * q[1] * q[1]);
    }
    check(from_wavefunction(WaveState(g2, normalized_wave(g2, psi2))));
    out.add("madelung.velocity_identity", identity);
}

inline ExperimentConfig reproducibility_config() {
    ExperimentConfig c;
    c.seed = 97;
    SampleConfig s;
    s.lattice = {1, 4, 1.0};
    s.walkers = 2000;
    s.quick_walkers = 2000;
    s.burn_in = 100;
    s.steps = 100;
    s.record_every = 50;
    s.initial = "vacuum";
    c.sample = s;
    EvolveConfig e;
    e.grid = {1, 8.0, 512};
    e.t_end = 1.0;
    e.frames = 4;
    e.cn_steps_per_frame = 32;
    c.evolve = e;
    c.scan = ScanConfig{};
    return c;
}

inline void criterion_reproducibility(CheckSink& out, const std::filesystem::path& scratch_root) {
    namespace fs = std::filesystem;
    const fs::path root =
        scratch_root.empty() ? fs::temp_directory_path() / ("edfield-repro-" + std::to_string(::getpid())) : scratch_root;
    const auto config = reproducibility_config();
    int differing = 0;
    using Runner = RunResult (*)(const ExperimentConfig&, const RunOptions&);
    const std::vector<std::pair<std::string, Runner>> runs{{"sample", run_sample}, {"evolve", run_evolve}, {"scan", run_scan}};
    for (const auto& [name, fn] : runs) {
        RunOptions a;
        a.out_dir = (root / "a" / name).string();
        RunOptions b;
        b.out_dir = (root / "b" / name).string();
        const auto ra = fn(config, a);
        fn(config, b);
        auto files = ra.products;
        files.push_back("manifest.json");
        for (const auto& f : files) {
            const fs::path pa = root / "a" / name / f;
            const fs::path pb = root / "b" / name / f;
            if (!fs::exists(pa) || !fs::exists(pb) || read_text_file(pa) != read_text_file(pb)) ++differing;
        }
    }
    if (scratch_root.empty()) fs::remove_all(root);
    out.add("reproducibility.differing_files", differing);
}

}  // namespace detail

inline const std::vector<std::pair<int, std::string>>& criterion_names() {
    static const std::vector<std::pair<int, std::string>> names{
        {1, "vacuum_exactness"},   {2, "sampler_stationarity"},    {3, "fluctuation_clock"},
        {4, "route_equivalence"},  {5, "energy_conservation"},     {6, "divergence_reproduction"},
        {7, "anharmonic_sanity"},  {8, "madelung_identities"},     {9, "reproducibility"},
    };
    return names;
}

/// Runs the acceptance battery; a criterion that throws is reported as aborted.
inline ValidationReport run_validation(const ValidationOptions& opts,
                                       const std::function<void(const CriterionResult&)>& progress = {}) {
    for (int id : opts.only)
        if (id < 1 || id > 9) throw ValidationError("only", "criterion " + std::to_string(id) + " does not exist");
    for (const auto& [key, def] : ToleranceSet::defaults().values) (void)opts.tolerances.at(key);

    ValidationReport report;
    report.quick = opts.quick;
    std::optional<detail::RouteRun> route;
    auto route_run = [&]() -> const detail::RouteRun& {
        if (!route) route = detail::coherent_period_run();
        return *route;
    };
    for (const auto& [id, name] : criterion_names()) {
        if (!opts.only.empty() && !opts.only.count(id)) continue;
        CriterionResult r;
        r.id = id;
        r.name = name;
        detail::CheckSink sink(r, opts);
        const auto t0 = std::chrono::steady_clock::now();
        try {
            switch (id) {
                case 1: detail::criterion_vacuum(sink); break;
                case 2: detail::criterion_stationarity(sink); break;
                case 3: detail::criterion_clock(sink); break;
                case 4: detail::criterion_route(sink, route_run()); break;
                case 5: detail::criterion_energy(sink, route_run()); break;
                case 6: detail::criterion_divergence(sink); break;
                case 7: detail::criterion_anharmonic(sink); break;
                case 8: detail::criterion_madelung(sink); break;
                case 9: detail::criterion_reproducibility(sink, opts.scratch); break;
            }
        } catch (const std::exception& e) {
            r.note = e.what();
        }
        r.seconds = detail::seconds_since(t0);
        if (progress) progress(r);
        report.criteria.push_back(std::move(r));
    }
    return report;
}

}  // namespace edfield
