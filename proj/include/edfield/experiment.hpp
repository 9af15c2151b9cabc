#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <boost/version.hpp>
#include <json.hpp>

#include "edfield/divergence.hpp"
#include "edfield/energy.hpp"
#include "edfield/evolver.hpp"
#include "edfield/io.hpp"
#include "edfield/sampler.hpp"

#ifndef EDFIELD_VERSION
#define EDFIELD_VERSION "0.0.0"
#endif

namespace edfield {

using json = nlohmann::json;

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr const char* kOutDirEnv = "EDFIELD_OUT_DIR";

struct SampleConfig {
    LatticeSpec lattice{1, 1, 1.0};
    double mass = 1.0;
    double eta = 1.0;
    double dt = 0.01;
    std::int64_t walkers = 100000;
    std::int64_t quick_walkers = 10000;
    std::int64_t burn_in = 1000;
    std::int64_t steps = 0;
    std::int64_t record_every = 0;  // 0: only the final ensemble
    std::string initial = "zero";   // zero | constant | vacuum
    double initial_value = 0.0;
    std::int64_t threads = 0;
};

struct EvolveConfig {
    std::string state = "coherent";  // coherent | vacuum
    double phi0 = 1.0;
    PotentialSpec potential{};
    bool lattice_coupling = true;  // dof = 2 only: the M = 2 lattice bond
    double eta = 1.0;
    GridSpec grid{};
    double min_points_per_sigma = 16.0;
    double t_end = 2.0 * std::numbers::pi;
    std::int64_t frames = 16;
    std::int64_t cn_steps_per_frame = 64;
    std::vector<std::string> routes{"schrodinger", "fp_hj"};
    double energy_tolerance = 1e-4;
};

struct ScanConfig {
    double mass = 1.0;
    double length = 32.0;
    int dim = 1;
    std::vector<double> spacings{0.5, 0.25, 0.125, 0.0625};
};

struct ExperimentConfig {
    int schema_version = kConfigSchemaVersion;
    std::uint64_t seed = 0;
    std::optional<std::string> output_dir;
    std::optional<SampleConfig> sample;
    std::optional<EvolveConfig> evolve;
    std::optional<ScanConfig> scan;
};

namespace detail {

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown fields.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ValidationError(path_.empty() ? "<root>" : path_, "must be an object");
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* find(const std::string& key) {
        used_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    double number(const std::string& key, double def) {
        const json* v = find(key);
        if (!v) return def;
        if (!v->is_number()) throw ValidationError(field(key), "must be a number");
        const double x = v->get<double>();
        if (!std::isfinite(x)) throw ValidationError(field(key), "must be finite");
        return x;
    }

    std::int64_t integer(const std::string& key, std::int64_t def) {
        const json* v = find(key);
        if (!v) return def;
        if (!v->is_number_integer()) throw ValidationError(field(key), "must be an integer");
        return v->get<std::int64_t>();
    }

    std::uint64_t unsigned_integer(const std::string& key, std::uint64_t def) {
        const json* v = find(key);
        if (!v) return def;
        if (!v->is_number_unsigned()) throw ValidationError(field(key), "must be a nonnegative integer");
        return v->get<std::uint64_t>();
    }

    bool boolean(const std::string& key, bool def) {
        const json* v = find(key);
        if (!v) return def;
        if (!v->is_boolean()) throw ValidationError(field(key), "must be true or false");
        return v->get<bool>();
    }

    std::string choice(const std::string& key, const std::string& def, std::initializer_list<const char*> allowed) {
        const json* v = find(key);
        if (!v) return def;
        if (!v->is_string()) throw ValidationError(field(key), "must be a string");
        const auto s = v->get<std::string>();
        std::string list;
        for (const char* a : allowed) {
            if (s == a) return s;
            list += list.empty() ? a : std::string(", ") + a;
        }
        throw ValidationError(field(key), "\"" + s + "\" is not one of " + list);
    }

    std::optional<std::string> optional_string(const std::string& key) {
        const json* v = find(key);
        if (!v) return std::nullopt;
        if (!v->is_string()) throw ValidationError(field(key), "must be a string");
        return v->get<std::string>();
    }

    std::vector<double> numbers(const std::string& key, std::vector<double> def) {
        const json* v = find(key);
        if (!v) return def;
        if (!v->is_array()) throw ValidationError(field(key), "must be an array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < v->size(); ++i) {
            const auto& e = (*v)[i];
            if (!e.is_number()) throw ValidationError(field(key) + "[" + std::to_string(i) + "]", "must be a number");
            out.push_back(e.get<double>());
        }
        return out;
    }

    std::optional<Section> child(const std::string& key) {
        const json* v = find(key);
        if (!v) return std::nullopt;
        return Section(*v, field(key));
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) throw ValidationError(field(it.key()), "unknown field");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

inline void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw ValidationError(field, what);
}

inline SampleConfig parse_sample(Section s) {
    SampleConfig c;
    if (auto lat = s.child("lattice")) {
        c.lattice.dim = static_cast<int>(lat->integer("dim", 1));
        c.lattice.sites_per_axis = static_cast<int>(lat->integer("sites", 1));
        c.lattice.spacing = lat->number("spacing", 1.0);
        lat->finish();
        require(c.lattice.dim >= 1 && c.lattice.dim <= 3, lat->field("dim"), "must be 1, 2 or 3");
        require(c.lattice.sites_per_axis >= 1, lat->field("sites"), "must be >= 1");
        require(c.lattice.spacing > 0.0, lat->field("spacing"), "must be > 0");
        require(std::pow(static_cast<double>(c.lattice.sites_per_axis), c.lattice.dim) <= kDenseLimit,
                lat->field("sites"), "sampling needs the dense kernel: at most 4096 sites in total");
    }
    c.mass = s.number("mass", c.mass);
    c.eta = s.number("eta", c.eta);
    c.dt = s.number("dt", c.dt);
    c.walkers = s.integer("walkers", c.walkers);
    c.quick_walkers = s.integer("quick_walkers", c.quick_walkers);
    c.burn_in = s.integer("burn_in", c.burn_in);
    c.steps = s.integer("steps", c.steps);
    c.record_every = s.integer("record_every", c.record_every);
    c.initial = s.choice("initial", c.initial, {"zero", "constant", "vacuum"});
    c.initial_value = s.number("initial_value", c.initial_value);
    c.threads = s.integer("threads", c.threads);
    s.finish();
    require(c.mass > 0.0, s.field("mass"), "must be > 0");
    require(c.eta > 0.0, s.field("eta"), "must be > 0");
    require(c.dt > 0.0, s.field("dt"), "must be > 0");
    require(c.walkers >= 2, s.field("walkers"), "must be >= 2");
    require(c.quick_walkers >= 2, s.field("quick_walkers"), "must be >= 2");
    require(c.burn_in >= 0, s.field("burn_in"), "must be >= 0");
    require(c.steps >= 0, s.field("steps"), "must be >= 0");
    require(c.record_every >= 0, s.field("record_every"), "must be >= 0");
    require(c.threads >= 0, s.field("threads"), "must be >= 0");
    return c;
}

inline EvolveConfig parse_evolve(Section s) {
    EvolveConfig c;
    c.state = s.choice("state", c.state, {"coherent", "vacuum"});
    c.phi0 = s.number("phi0", c.phi0);
    if (auto pot = s.child("potential")) {
        c.potential.m2 = pot->number("m2", c.potential.m2);
        c.potential.lambda3 = pot->number("lambda3", c.potential.lambda3);
        c.potential.lambda4 = pot->number("lambda4", c.potential.lambda4);
        pot->finish();
        try {
            c.potential.validate();
        } catch (const ValidationError& e) {
            throw ValidationError(s.field(e.field()), std::string(e.what()).substr(e.field().size() + 2));
        }
    }
    c.lattice_coupling = s.boolean("lattice_coupling", c.lattice_coupling);
    c.eta = s.number("eta", c.eta);
    if (auto g = s.child("grid")) {
        c.grid.dof = static_cast<int>(g->integer("dof", c.grid.dof));
        c.grid.phi_max = g->number("phi_max", c.grid.phi_max);
        c.grid.points = static_cast<int>(g->integer("points", c.grid.points));
        g->finish();
        require(c.grid.dof == 1 || c.grid.dof == 2, g->field("dof"), "must be 1 or 2");
        require(c.grid.phi_max > 0.0, g->field("phi_max"), "must be > 0");
        require(c.grid.points >= 3, g->field("points"), "must be >= 3");
    }
    c.min_points_per_sigma = s.number("min_points_per_sigma", c.min_points_per_sigma);
    c.t_end = s.number("t_end", c.t_end);
    c.frames = s.integer("frames", c.frames);
    c.cn_steps_per_frame = s.integer("cn_steps_per_frame", c.cn_steps_per_frame);
    if (const json* r = s.find("routes")) {
        require(r->is_array() && !r->empty(), s.field("routes"), "must be a nonempty array");
        c.routes.clear();
        for (std::size_t i = 0; i < r->size(); ++i) {
            const auto f = s.field("routes") + "[" + std::to_string(i) + "]";
            require((*r)[i].is_string(), f, "must be a string");
            const auto name = (*r)[i].get<std::string>();
            require(name == "schrodinger" || name == "fp_hj", f, "\"" + name + "\" is not one of schrodinger, fp_hj");
            for (const auto& seen : c.routes) require(seen != name, f, "duplicate route");
            c.routes.push_back(name);
        }
    }
    c.energy_tolerance = s.number("energy_tolerance", c.energy_tolerance);
    s.finish();
    require(c.eta > 0.0, s.field("eta"), "must be > 0");
    require(c.t_end > 0.0, s.field("t_end"), "must be > 0");
    require(c.frames >= 1, s.field("frames"), "must be >= 1");
    require(c.cn_steps_per_frame >= 1, s.field("cn_steps_per_frame"), "must be >= 1");
    require(c.energy_tolerance > 0.0, s.field("energy_tolerance"), "must be > 0");
    require(c.min_points_per_sigma > 0.0, s.field("min_points_per_sigma"), "must be > 0");
    require(!(c.state == "coherent" && c.grid.dof != 1), s.field("state"), "coherent needs grid.dof = 1");
    return c;
}

inline ScanConfig parse_scan(Section s) {
    ScanConfig c;
    c.mass = s.number("mass", c.mass);
    c.length = s.number("length", c.length);
    c.dim = static_cast<int>(s.integer("dim", c.dim));
    c.spacings = s.numbers("spacings", c.spacings);
    s.finish();
    require(c.mass > 0.0, s.field("mass"), "must be > 0");
    require(c.length > 0.0, s.field("length"), "must be > 0");
    require(c.dim >= 1 && c.dim <= 3, s.field("dim"), "must be 1, 2 or 3");
    require(c.spacings.size() >= 4, s.field("spacings"), "need at least 4 spacings for the scaling fits");
    return c;
}

}  // namespace detail

/// Parse and validate a config document; errors name the offending field path.
inline ExperimentConfig parse_config(const json& doc) {
    detail::Section root(doc, "");
    ExperimentConfig c;
    const json* ver = root.find("schema_version");
    if (!ver) throw ValidationError("schema_version", "required");
    if (!ver->is_number_integer() || ver->get<std::int64_t>() != kConfigSchemaVersion)
        throw ValidationError("schema_version", "unsupported version " + ver->dump() + ", expected " +
                                                    std::to_string(kConfigSchemaVersion));
    c.seed = root.unsigned_integer("seed", 0);
    c.output_dir = root.optional_string("output_dir");
    if (auto s = root.child("sample")) c.sample = detail::parse_sample(*s);
    if (auto s = root.child("evolve")) c.evolve = detail::parse_evolve(*s);
    if (auto s = root.child("scan")) c.scan = detail::parse_scan(*s);
    root.finish();
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    const auto text = read_text_file(path);
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError("<root>", std::string("not valid JSON: ") + e.what());
    }
    return parse_config(doc);
}

inline json to_json(const SampleConfig& c) {
    return {{"lattice", {{"dim", c.lattice.dim}, {"sites", c.lattice.sites_per_axis}, {"spacing", c.lattice.spacing}}},
            {"mass", c.mass},
            {"eta", c.eta},
            {"dt", c.dt},
            {"walkers", c.walkers},
            {"quick_walkers", c.quick_walkers},
            {"burn_in", c.burn_in},
            {"steps", c.steps},
            {"record_every", c.record_every},
            {"initial", c.initial},
            {"initial_value", c.initial_value},
            {"threads", c.threads}};
}

inline json to_json(const EvolveConfig& c) {
    return {{"state", c.state},
            {"phi0", c.phi0},
            {"potential", {{"m2", c.potential.m2}, {"lambda3", c.potential.lambda3}, {"lambda4", c.potential.lambda4}}},
            {"lattice_coupling", c.lattice_coupling},
            {"eta", c.eta},
            {"grid", {{"dof", c.grid.dof}, {"phi_max", c.grid.phi_max}, {"points", c.grid.points}}},
            {"min_points_per_sigma", c.min_points_per_sigma},
            {"t_end", c.t_end},
            {"frames", c.frames},
            {"cn_steps_per_frame", c.cn_steps_per_frame},
            {"routes", c.routes},
            {"energy_tolerance", c.energy_tolerance}};
}

inline json to_json(const ScanConfig& c) {
    return {{"mass", c.mass}, {"length", c.length}, {"dim", c.dim}, {"spacings", c.spacings}};
}

inline json to_json(const ExperimentConfig& c) {
    json j = {{"schema_version", c.schema_version}, {"seed", c.seed}};
    if (c.output_dir) j["output_dir"] = *c.output_dir;
    if (c.sample) j["sample"] = to_json(*c.sample);
    if (c.evolve) j["evolve"] = to_json(*c.evolve);
    if (c.scan) j["scan"] = to_json(*c.scan);
    return j;
}

/// Canonical dump of the fully defaulted config.
inline std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a64(to_json(c).dump())); }

inline json version_info() {
    return {{"edfield", EDFIELD_VERSION},
            {"config_schema", kConfigSchemaVersion},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"boost", BOOST_LIB_VERSION},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

/// --out beats the environment, which beats the config file.
inline std::filesystem::path resolve_output_dir(const std::optional<std::string>& cli_out, const ExperimentConfig& c,
                                                const std::string& command) {
    if (cli_out && !cli_out->empty()) return *cli_out;
    if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
    if (c.output_dir && !c.output_dir->empty()) return *c.output_dir;
    return std::filesystem::path("edfield_out") / command;
}

struct RunOptions {
    std::optional<std::uint64_t> seed;  // overrides the config
    std::optional<std::string> out_dir;
    bool quick = false;
};

struct RunResult {
    std::filesystem::path dir;
    std::vector<std::string> products;
    json summary;
};

namespace detail {

inline void write_manifest(const std::filesystem::path& dir, const std::string& command, const ExperimentConfig& c,
                           bool quick, const std::vector<std::string>& products) {
    const json m = {{"command", command},
                    {"config_hash", config_hash(c)},
                    {"seed", c.seed},
                    {"quick", quick},
                    {"versions", version_info()},
                    {"config", to_json(c)},
                    {"products", products}};
    write_text_file(dir / "manifest.json", m.dump(2) + "\n");
}

inline ExperimentConfig effective(ExperimentConfig c, const RunOptions& opts) {
    if (opts.seed) c.seed = *opts.seed;
    return c;
}

inline double mean_coordinate(const EpistemicState& st, int axis) {
    double s = 0.0;
    for (std::size_t i = 0; i < st.rho().size(); ++i) s += st.rho()[i] * st.grid().coordinate(i)[axis];
    return s * st.grid().cell_volume();
}

}  // namespace detail

/// Ensemble run under the free-vacuum entropy: moments over entropic time.
inline RunResult run_sample(const ExperimentConfig& config, const RunOptions& opts = {}) {
    if (!config.sample) throw ValidationError("sample", "required for the sample command");
    const ExperimentConfig c = detail::effective(config, opts);
    const SampleConfig& sc = *c.sample;
    const auto walkers = static_cast<std::size_t>(opts.quick ? std::min(sc.walkers, sc.quick_walkers) : sc.walkers);

    const GaussianState state(Lattice(sc.lattice), sc.mass);
    const VacuumEntropyModel model(state);
    const std::size_t n = model.n_sites();
    Ensemble e;
    if (sc.initial == "vacuum") {
        e = vacuum_ensemble(state, walkers, c.seed);
    } else {
        const double v0 = sc.initial == "constant" ? sc.initial_value : 0.0;
        e = make_ensemble(std::vector<FieldConfig>(walkers, FieldConfig::constant(n, v0)), c.seed);
    }
    const auto threads = static_cast<std::size_t>(sc.threads);
    e = propagate_ensemble(std::move(e), model, sc.dt, sc.burn_in, sc.eta, threads);

    // Stationary law of the continuous process (eta cancels); the Euler-Maruyama chain is O(dt) off it.
    const Eigen::MatrixXd target = state.field_covariance();
    CsvTable moments({"step", "t", "site", "mean", "mean_se", "variance", "variance_se", "target_variance"});
    auto record = [&](const Ensemble& ens) {
        const auto mom = ensemble_moments(ens);
        for (std::size_t s = 0; s < n; ++s) {
            const auto i = static_cast<Eigen::Index>(s);
            moments.add_row({static_cast<std::int64_t>(ens.step), ens.t, static_cast<std::int64_t>(s), mom.mean[s],
                             mom.mean_se[s], mom.covariance(i, i), mom.covariance_se(i, i), target(i, i)});
        }
    };
    if (sc.steps > 0 && sc.record_every > 0) {
        record(e);
        std::int64_t done = 0;
        while (done < sc.steps) {
            const std::int64_t chunk = std::min(sc.record_every, sc.steps - done);
            e = propagate_ensemble(std::move(e), model, sc.dt, chunk, sc.eta, threads);
            done += chunk;
            record(e);
        }
    } else {
        e = propagate_ensemble(std::move(e), model, sc.dt, sc.steps, sc.eta, threads);
        record(e);
    }

    const auto mom = ensemble_moments(e);
    CsvTable cov({"i", "j", "covariance", "covariance_se", "target", "z"});
    double max_z = 0.0;
    for (Eigen::Index i = 0; i < mom.covariance.rows(); ++i) {
        for (Eigen::Index j = 0; j < mom.covariance.cols(); ++j) {
            const double z = std::abs(mom.covariance(i, j) - target(i, j)) / mom.covariance_se(i, j);
            max_z = std::max(max_z, z);
            cov.add_row({static_cast<std::int64_t>(i), static_cast<std::int64_t>(j), mom.covariance(i, j),
                         mom.covariance_se(i, j), target(i, j), z});
        }
    }

    RunResult r;
    r.dir = resolve_output_dir(opts.out_dir, c, "sample");
    r.products = {"moments.csv", "covariance.csv", "summary.json"};
    r.summary = {{"walkers", walkers},
                 {"steps", e.step},
                 {"t", e.t},
                 {"variance_site0", mom.covariance(0, 0)},
                 {"variance_site0_se", mom.covariance_se(0, 0)},
                 {"target_variance", target(0, 0)},
                 {"max_covariance_z", max_z}};
    write_text_file(r.dir / "moments.csv", moments.str());
    write_text_file(r.dir / "covariance.csv", cov.str());
    write_text_file(r.dir / "summary.json", r.summary.dump(2) + "\n");
    detail::write_manifest(r.dir, "sample", c, opts.quick, r.products);
    return r;
}

/// Both grid routes from one initial state, with energies and the route distance per frame.
inline RunResult run_evolve(const ExperimentConfig& config, const RunOptions& opts = {}) {
    if (!config.evolve) throw ValidationError("evolve", "required for the evolve command");
    const ExperimentConfig c = detail::effective(config, opts);
    const EvolveConfig& ec = *c.evolve;

    const FieldGrid grid(ec.grid);
    std::optional<Lattice> coupling;
    if (ec.grid.dof == 2 && ec.lattice_coupling) coupling = build_lattice({1, 2, 1.0});
    const auto h = build_hamiltonian(grid, ec.potential, coupling, {ec.eta, ec.min_points_per_sigma});
    const WaveState w0 = ec.state == "coherent"
                             ? coherent_state(grid, std::sqrt(ec.potential.m2), ec.phi0, ec.eta)
                             : to_wavefunction(gaussian_vacuum(grid, ec.potential, h.coupling(), 0.0, ec.eta));

    const bool use_cn = std::find(ec.routes.begin(), ec.routes.end(), "schrodinger") != ec.routes.end();
    const bool use_fp = std::find(ec.routes.begin(), ec.routes.end(), "fp_hj") != ec.routes.end();
    const auto frames = static_cast<int>(ec.frames);
    const double cn_dt = ec.t_end / static_cast<double>(frames * ec.cn_steps_per_frame);
    std::optional<CrankNicolson> cn;
    if (use_cn) cn.emplace(h, cn_dt);

    WaveState w = w0;
    EpistemicState s = from_wavefunction(w0);
    std::vector<EpistemicState> traj_cn{s}, traj_fp{s};
    std::vector<double> l1(1, 0.0);
    for (int f = 1; f <= frames; ++f) {
        const double target = ec.t_end * f / frames;
        if (use_cn) {
            for (std::int64_t k = 0; k < ec.cn_steps_per_frame; ++k) w = cn->step(w);
            traj_cn.push_back(from_wavefunction(w));
        }
        if (use_fp) {
            const double dt = fp_hj_stable_dt(h, s);
            while (s.t() < target - 1e-12) s = fp_hj_step(s, h, std::min(dt, target - s.t()));
            traj_fp.push_back(s);
        }
        if (use_cn && use_fp) {
            double d = 0.0;
            for (std::size_t i = 0; i < s.rho().size(); ++i) d += std::abs(s.rho()[i] - std::norm(w.psi()[i]));
            l1.push_back(d * grid.cell_volume());
        }
    }

    CsvTable frames_csv({"frame", "t", "route", "mean_q0", "mean_q1", "kinetic", "osmotic", "potential", "total"});
    json routes = json::object();
    auto emit = [&](const std::string& name, const std::vector<EpistemicState>& traj) {
        const auto rep = conservation_report(traj, h, ec.energy_tolerance);
        for (std::size_t k = 0; k < traj.size(); ++k) {
            const auto& e = rep.energies[k];
            const double q1 = grid.dof() == 2 ? detail::mean_coordinate(traj[k], 1) : 0.0;
            frames_csv.add_row({static_cast<std::int64_t>(k), traj[k].t(), name, detail::mean_coordinate(traj[k], 0), q1,
                                e.kinetic, e.osmotic, e.potential, e.total});
        }
        routes[name] = {{"initial_energy", rep.energies.front().total},
                        {"max_relative_drift", rep.max_relative_drift},
                        {"tolerance", rep.tolerance},
                        {"exceeded", rep.exceeded}};
    };
    if (use_cn) emit("schrodinger", traj_cn);
    if (use_fp) emit("fp_hj", traj_fp);

    RunResult r;
    r.dir = resolve_output_dir(opts.out_dir, c, "evolve");
    r.products = {"frames.csv", "final_density.csv", "summary.json"};
    r.summary = {{"routes", routes}, {"t_end", ec.t_end}, {"frames", frames}};
    if (use_cn && use_fp) {
        CsvTable dist({"frame", "t", "l1"});
        double worst = 0.0;
        for (std::size_t k = 0; k < l1.size(); ++k) {
            dist.add_row({static_cast<std::int64_t>(k), ec.t_end * static_cast<double>(k) / frames, l1[k]});
            worst = std::max(worst, l1[k]);
        }
        r.summary["max_route_l1"] = worst;
        r.products.insert(r.products.begin() + 1, "route_distance.csv");
        write_text_file(r.dir / "route_distance.csv", dist.str());
    }

    std::vector<std::string> head{"q0"};
    if (grid.dof() == 2) head.push_back("q1");
    if (use_cn) head.push_back("rho_schrodinger");
    if (use_fp) head.push_back("rho_fp_hj");
    CsvTable dens(head);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto q = grid.coordinate(i);
        std::vector<CsvCell> row{q[0]};
        if (grid.dof() == 2) row.emplace_back(q[1]);
        if (use_cn) row.emplace_back(std::norm(w.psi()[i]));
        if (use_fp) row.emplace_back(s.rho()[i]);
        dens.add_row(std::move(row));
    }
    write_text_file(r.dir / "frames.csv", frames_csv.str());
    write_text_file(r.dir / "final_density.csv", dens.str());
    write_text_file(r.dir / "summary.json", r.summary.dump(2) + "\n");
    detail::write_manifest(r.dir, "evolve", c, opts.quick, r.products);
    return r;
}

/// Vacuum energy density and variance against the cutoff, with scaling fits.
inline RunResult run_scan(const ExperimentConfig& config, const RunOptions& opts = {}) {
    if (!config.scan) throw ValidationError("scan", "required for the scan command");
    const ExperimentConfig c = detail::effective(config, opts);
    const ScanConfig& sc = *c.scan;
    std::vector<ScanRow> rows;
    try {
        rows = cutoff_scan(sc.mass, sc.length, sc.spacings, sc.dim);
    } catch (const ValidationError& e) {
        throw ValidationError("scan." + e.field(), std::string(e.what()).substr(e.field().size() + 2));
    }
    CsvTable table({"spacing", "cutoff", "sites_per_axis", "energy_density", "variance"});
    for (const auto& row : rows)
        table.add_row({row.spacing, row.cutoff, static_cast<std::int64_t>(row.sites_per_axis), row.energy_density,
                       row.variance});
    const auto var = fit_scaling(rows, ScanColumn::variance, ScalingModel::log);
    const auto e0 = fit_scaling(rows, ScanColumn::energy_density, ScalingModel::power_law);

    RunResult r;
    r.dir = resolve_output_dir(opts.out_dir, c, "scan");
    r.products = {"scan.csv", "fits.json"};
    r.summary = {{"variance_vs_log_cutoff", {{"intercept", var.coefficient}, {"slope", var.exponent}, {"residual", var.residual}}},
                 {"energy_density_power_law",
                  {{"coefficient", e0.coefficient}, {"exponent", e0.exponent}, {"residual", e0.residual}}}};
    write_text_file(r.dir / "scan.csv", table.str());
    write_text_file(r.dir / "fits.json", r.summary.dump(2) + "\n");
    detail::write_manifest(r.dir, "scan", c, opts.quick, r.products);
    return r;
}

}  // namespace edfield
