#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "edfield/experiment.hpp"
#include "edfield/validation.hpp"

namespace {

constexpr int kExitFailure = 1;   // validation verdict
constexpr int kExitConfig = 2;    // bad config / usage
constexpr int kExitNumeric = 3;   // numerical abort

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    bool quick = false;
};

void add_common(CLI::App* cmd, Flags& f, bool need_config) {
    auto* c = cmd->add_option("--config", f.config, "experiment config (JSON, schema_version 1)");
    if (need_config) c->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "override the config seed");
    cmd->add_option("--out", f.out, "output directory (beats EDFIELD_OUT_DIR and the config)");
    cmd->add_flag("--quick", f.quick, "reduced walker counts, widened statistical bands");
}

int run_experiment(const std::string& command, const Flags& f) {
    const auto config = edfield::load_config(f.config);
    edfield::RunOptions opts;
    opts.seed = f.seed;
    opts.out_dir = f.out;
    opts.quick = f.quick;
    edfield::RunResult r;
    if (command == "sample") r = edfield::run_sample(config, opts);
    else if (command == "evolve") r = edfield::run_evolve(config, opts);
    else r = edfield::run_scan(config, opts);
    std::cout << r.summary.dump(2) << "\n";
    std::cout << "wrote " << r.dir.string() << "/manifest.json";
    for (const auto& p : r.products) std::cout << ", " << p;
    std::cout << "\n";
    return 0;
}

int run_validate(const Flags& f, const std::string& tolerances, const std::vector<int>& only) {
    edfield::ValidationOptions opts;
    opts.quick = f.quick;
    if (!tolerances.empty()) opts.tolerances = edfield::load_tolerances(tolerances);
    opts.only = {only.begin(), only.end()};
    if (f.seed) opts.seed = *f.seed;
    const auto report = edfield::run_validation(opts, [](const edfield::CriterionResult& r) {
        std::fprintf(stderr, "criterion %d %s done in %.1f s\n", r.id, r.name.c_str(), r.seconds);
    });
    std::cout << report.table() << "\n" << report.verdict_lines();

    std::optional<std::string> out = f.out;
    if (!out) {
        if (const char* env = std::getenv(edfield::kOutDirEnv); env && *env) out = env;
    }
    if (out) {
        edfield::write_text_file(std::filesystem::path(*out) / "validation.csv", report.csv());
        const edfield::json manifest = {{"command", "validate"},
                                        {"seed", opts.seed},
                                        {"quick", opts.quick},
                                        {"versions", edfield::version_info()},
                                        {"tolerances", edfield::to_json(opts.tolerances)},
                                        {"products", {"validation.csv"}}};
        edfield::write_text_file(std::filesystem::path(*out) / "manifest.json", manifest.dump(2) + "\n");
    }
    return report.all_pass() ? 0 : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"edfield: entropic dynamics of a lattice scalar field"};
    app.set_version_flag("--version", EDFIELD_VERSION);
    app.require_subcommand(1);

    Flags flags;
    std::string tolerances;
    std::vector<int> only;
    auto* sample = app.add_subcommand("sample", "ensemble run under the vacuum entropy");
    auto* evolve = app.add_subcommand("evolve", "Schrodinger and Fokker-Planck/Hamilton-Jacobi grid routes");
    auto* scan = app.add_subcommand("scan", "vacuum energy and variance against the cutoff");
    auto* validate = app.add_subcommand("validate", "run the acceptance battery");
    for (auto* cmd : {sample, evolve, scan}) add_common(cmd, flags, true);
    add_common(validate, flags, false);
    validate->add_option("--tolerances", tolerances, "tolerance fixture (JSON)")->check(CLI::ExistingFile);
    validate->add_option("--only", only, "criterion ids to run")->check(CLI::Range(1, 9));

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) return run_validate(flags, tolerances, only);
        const std::string command = sample->parsed() ? "sample" : evolve->parsed() ? "evolve" : "scan";
        return run_experiment(command, flags);
    } catch (const edfield::ValidationError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const edfield::NumericalError& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const edfield::SizeLimitError& e) {
        std::cerr << "size limit: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}
