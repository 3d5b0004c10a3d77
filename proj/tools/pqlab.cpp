// pqlab: command-line front end for the price-quantity dynamics lab.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "pqdyn/cli.hpp"

namespace {

using pqdyn::Error;
using pqdyn::ErrorKind;
namespace cli = pqdyn::cli;

int fail(const Error& e) {
    std::cerr << cli::error_json(e).dump() << "\n";
    return cli::exit_code_for(e.kind());
}

template <class T>
std::optional<T> opt(const CLI::Option* o, const T& v) {
    return o->count() ? std::optional<T>(v) : std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pqlab: simulate, decompose and diagnose second-order price-quantity adjustment"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "run a scenario and write trajectory, activity and manifest");
    std::string sim_config, sim_out;
    long long sim_seed = 0, sim_steps = 0;
    double sim_dt = 0.0;
    sim->add_option("config", sim_config, "scenario JSON file or library scenario name")->required();
    auto* o_seed = sim->add_option("--seed", sim_seed, "noise seed");
    auto* o_dt = sim->add_option("--dt", sim_dt, "time step");
    auto* o_steps = sim->add_option("--steps", sim_steps, "number of steps");
    auto* o_sim_out = sim->add_option("--out", sim_out, "run directory (default $PQLAB_OUTPUT_ROOT/<scenario>-seed<seed>)");

    // decompose
    auto* dec = app.add_subcommand("decompose", "Helmholtz-Hodge split of a field on a grid");
    std::string dec_config, dec_backend, dec_region, dec_out;
    std::vector<int> dec_grid;
    dec->add_option("config", dec_config, "field JSON file")->required();
    auto* o_grid = dec->add_option("--grid", dec_grid, "points per axis (one value or one per axis)")->delimiter(',');
    auto* o_backend = dec->add_option("--backend", dec_backend, "quadrature | spectral");
    auto* o_region = dec->add_option("--region", dec_region, "ball | box");
    auto* o_dec_out = dec->add_option("--out", dec_out, "output directory");

    // diagnose
    auto* dia = app.add_subcommand("diagnose", "verify a run directory and compute its diagnostics");
    std::string dia_dir;
    dia->add_option("run_dir", dia_dir, "directory written by simulate")->required();

    // sweep
    auto* swp = app.add_subcommand("sweep", "run a scenario over a parameter grid");
    std::string swp_scenario, swp_grid_file, swp_out, swp_overrides;
    std::vector<std::string> swp_axes;
    int swp_parallel = 1;
    swp->add_option("scenario", swp_scenario, "library scenario name")->required();
    swp->add_option("--grid", swp_axes, "axis as name=v1,v2,.. or name=start:stop:step (repeatable)");
    swp->add_option("--grid-file", swp_grid_file, "JSON grid spec");
    auto* o_par = swp->add_option("--parallel", swp_parallel, "worker threads (default $PQLAB_THREADS or all cores)");
    auto* o_swp_out = swp->add_option("--out", swp_out, "output directory");
    swp->add_option("--set", swp_overrides, "JSON object of fixed parameter overrides");

    auto* lst = app.add_subcommand("list-scenarios", "print the scenario library as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        return fail(Error(ErrorKind::Config, std::string("arguments: ") + e.what()));
    }

    try {
        pqdyn::json_util::Json result;
        if (*sim) {
            result = cli::cmd_simulate({sim_config, opt(o_seed, sim_seed), opt(o_dt, sim_dt), opt(o_steps, sim_steps),
                                        opt(o_sim_out, std::filesystem::path(sim_out))});
        } else if (*dec) {
            result = cli::cmd_decompose({dec_config, opt(o_grid, dec_grid), opt(o_backend, dec_backend),
                                         opt(o_region, dec_region), opt(o_dec_out, std::filesystem::path(dec_out))});
        } else if (*dia) {
            result = cli::cmd_diagnose(dia_dir);
        } else if (*swp) {
            cli::SweepArgs a;
            a.scenario = swp_scenario;
            if (!swp_grid_file.empty()) a.axes = cli::axes_from_json(cli::load_json_file(swp_grid_file));
            for (const auto& s : swp_axes) a.axes.push_back(cli::parse_axis(s));
            a.parallel = opt(o_par, swp_parallel);
            a.out = opt(o_swp_out, std::filesystem::path(swp_out));
            if (!swp_overrides.empty()) {
                try {
                    a.base_overrides = pqdyn::json_util::Json::parse(swp_overrides);
                } catch (const pqdyn::json_util::Json::parse_error& e) {
                    throw Error(ErrorKind::Config, std::string("--set: malformed JSON: ") + e.what());
                }
                // Validate keys and kinds against the scenario before running anything.
                (void)pqdyn::build_scenario(a.scenario, a.base_overrides);
            }
            result = cli::cmd_sweep(a);
        } else if (*lst) {
            result = cli::cmd_list_scenarios();
        }
        std::cout << result.dump(2) << "\n";
        return 0;
    } catch (const Error& e) {
        return fail(e);
    } catch (const std::exception& e) {
        return fail(Error(ErrorKind::Io, std::string("unexpected failure: ") + e.what()));
    }
}
