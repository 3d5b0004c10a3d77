#pragma once

// Command implementations behind the pqlab executable. Each command throws
// pqdyn::Error on failure; exit_code_for() maps the error kind to a status.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "pqdyn/artifacts.hpp"
#include "pqdyn/field_json.hpp"
#include "pqdyn/hhd.hpp"
#include "pqdyn/scenarios.hpp"

namespace pqdyn::cli {

namespace fs = std::filesystem;
using json_util::Json;

/// 0 ok, 2 invalid config or arguments, 3 integration abort, 4 IO, 5 integrity.
[[nodiscard]] inline int exit_code_for(ErrorKind k) {
    switch (k) {
        case ErrorKind::Config:
        case ErrorKind::InvalidArgument:
        case ErrorKind::DimensionMismatch:
        case ErrorKind::BudgetExceeded: return 2;
        case ErrorKind::NonFinite:
        case ErrorKind::OutsideDomain:
        case ErrorKind::NotClosed:
        case ErrorKind::InsufficientData: return 3;
        case ErrorKind::Io: return 4;
        case ErrorKind::Integrity: return 5;
    }
    return 2;
}

[[nodiscard]] inline Json error_json(const Error& e) {
    return {{"error", {{"kind", to_string(e.kind())}, {"message", e.what()}, {"exit_code", exit_code_for(e.kind())}}}};
}

/// $PQLAB_OUTPUT_ROOT, else ./runs.
[[nodiscard]] inline fs::path output_root() {
    const char* env = std::getenv("PQLAB_OUTPUT_ROOT");
    return env && *env ? fs::path(env) : fs::path("runs");
}

/// Explicit request, else $PQLAB_THREADS, else hardware concurrency.
[[nodiscard]] inline unsigned thread_count(std::optional<int> requested = std::nullopt) {
    if (requested) {
        if (*requested < 1) throw Error(ErrorKind::InvalidArgument, "--parallel must be >= 1");
        return static_cast<unsigned>(*requested);
    }
    if (const char* env = std::getenv("PQLAB_THREADS"); env && *env) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (*end != '\0' || v < 1) throw Error(ErrorKind::Config, "PQLAB_THREADS must be a positive integer");
        return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Parse a JSON file; syntax errors report line and column.
[[nodiscard]] inline Json load_json_file(const fs::path& p) {
    if (!fs::exists(p)) throw Error(ErrorKind::Config, "config file not found: '" + p.string() + "'");
    const auto text = artifacts::read_file(p);
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorKind::Config, "malformed JSON in '" + p.string() + "': " + e.what());
    }
}

/// A config argument is a JSON file path or a library scenario name.
[[nodiscard]] inline Json load_scenario_document(const std::string& arg) {
    const auto& names = scenario_names();
    if (std::find(names.begin(), names.end(), arg) != names.end() && !fs::exists(arg))
        return {{"scenario", arg}};
    return load_json_file(arg);
}

[[nodiscard]] inline std::string scenario_hash(const Scenario& s) {
    return artifacts::sha256_hex(scenario_to_json(s).dump());
}

[[nodiscard]] inline std::string activity_csv(const std::optional<ActivitySeries>& a) {
    artifacts::CsvWriter w(
        {"t", "activity", "rate", "alpha_term", "damping_term", "noise_term", "residual", "scale"});
    if (a) {
        for (std::size_t k = 0; k < a->size(); ++k) {
            w.number(a->times[k]).number(a->activity[k]).number(a->rate[k]).number(a->alpha_term[k]);
            w.number(a->damping_term[k]).number(a->noise_term[k]).number(a->residual[k]).number(a->scale[k]);
            w.end_row();
        }
    }
    return w.str();
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string config;
    std::optional<long long> seed;
    std::optional<double> dt;
    std::optional<long long> steps;
    std::optional<fs::path> out;
};

/// Writes trajectory.csv, activity.csv and manifest.json into the run directory.
inline Json cmd_simulate(const SimulateArgs& a) {
    const auto started = artifacts::utc_now();
    const Json doc = apply_run_overrides(load_scenario_document(a.config), a.seed, a.dt, a.steps);
    const Scenario s = scenario_from_json(doc);
    const auto hash = scenario_hash(s);
    const auto seed = s.noise.seed;
    const fs::path dir = a.out ? *a.out : output_root() / (s.name + "-seed" + std::to_string(seed));

    auto [tr, pop] = simulate_scenario(s);
    std::optional<ActivitySeries> act;
    if (!s.population && s.field->has_analytic_decomposition())
        act = activity_series(tr, DecompositionAccess::analytic(*s.field), s.damping);

    Json files = Json::array();
    files.push_back(artifacts::write_artifact(dir, "trajectory.csv", artifacts::trajectory_csv(tr), "trajectory"));
    files.push_back(artifacts::write_artifact(dir, "activity.csv", activity_csv(act), "activity"));
    Json manifest = {{"run_id", s.name + "-seed" + std::to_string(seed) + "-" + hash.substr(0, 12)},
                     {"scenario_name", s.name},
                     {"scenario_hash", hash},
                     {"scenario", scenario_to_json(s)},
                     {"seed", seed},
                     {"tool_version", artifacts::kToolVersion},
                     {"integrator", tr.metadata.integrator},
                     {"dt", tr.dt},
                     {"steps", s.steps},
                     {"dimension", tr.dim()},
                     {"started_utc", started},
                     {"finished_utc", artifacts::utc_now()},
                     {"activity", act ? "analytic" : "unavailable: no analytic decomposition for this run"},
                     {"files", files}};
    artifacts::write_manifest(dir, manifest);
    return {{"command", "simulate"}, {"run_dir", dir.string()}, {"run_id", manifest["run_id"]},
            {"files", {"trajectory.csv", "activity.csv", "manifest.json"}}};
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

/// Verify a run directory, recompute diagnostics, write diagnostics.json.
inline Json cmd_diagnose(const fs::path& run_dir) {
    Json m = artifacts::load_verified_manifest(run_dir);
    if (!m.contains("scenario") || !m.contains("scenario_hash") || !m.contains("dt"))
        throw Error(ErrorKind::Integrity, "manifest lacks scenario, scenario_hash or dt");
    Scenario s;
    try {
        s = scenario_from_json(m["scenario"]);
    } catch (const Error& e) {
        throw Error(ErrorKind::Integrity, std::string("manifest scenario does not rebuild: ") + e.what());
    }
    if (scenario_hash(s) != m["scenario_hash"].get<std::string>())
        throw Error(ErrorKind::Integrity, "scenario hash mismatch");
    const auto text = artifacts::read_file(run_dir / "trajectory.csv");
    Trajectory tr = artifacts::trajectory_from_csv(text, m["dt"].get<double>());
    tr.metadata = {s.name, s.noise.seed, m.value("integrator", std::string())};

    std::optional<PopulationRun> pop;
    if (s.population) {
        // Group paths are not persisted; regenerate and require the mean path to match.
        auto [mean, run] = simulate_scenario(s);
        if (artifacts::trajectory_csv(mean) != text)
            throw Error(ErrorKind::Integrity, "population run does not reproduce the stored mean path");
        pop = std::move(run);
    }
    const auto report = diagnose_run(s, std::move(tr), std::move(pop));
    Json out = report_to_json(report);
    out["run_id"] = m.value("run_id", std::string());

    const auto entry = artifacts::write_artifact(run_dir, "diagnostics.json", out.dump(2) + "\n", "diagnostics");
    Json files = Json::array();
    for (const auto& f : m["files"])
        if (f["name"] != "diagnostics.json") files.push_back(f);
    files.push_back(entry);
    m["files"] = files;
    m["diagnosed_utc"] = artifacts::utc_now();
    artifacts::write_manifest(run_dir, m);
    return out;
}

// ---------------------------------------------------------------------------
// decompose
// ---------------------------------------------------------------------------

struct DecomposeArgs {
    std::string config;
    std::optional<std::vector<int>> grid;
    std::optional<std::string> backend;
    std::optional<std::string> region;
    std::optional<fs::path> out;
};

[[nodiscard]] inline std::string grid_csv(const hhd::GridField& f, const std::vector<std::string>& names) {
    const auto& g = f.domain;
    std::vector<std::string> header;
    for (int i = 1; i <= g.dim(); ++i) header.push_back("x_" + std::to_string(i));
    header.insert(header.end(), names.begin(), names.end());
    artifacts::CsvWriter w(header);
    for (std::size_t p = 0; p < g.size(); ++p) {
        const Vector c = g.coordinate(p);
        for (Eigen::Index i = 0; i < c.size(); ++i) w.number(c[i]);
        for (Eigen::Index j = 0; j < f.values.cols(); ++j) w.number(f.values(static_cast<Eigen::Index>(p), j));
        w.end_row();
    }
    return w.str();
}

/// Config: a field document, or {"field", "domain": {"lower", "upper"}, "grid",
/// "backend", "region", "interior_fraction"}. The domain defaults to the field box.
inline Json cmd_decompose(const DecomposeArgs& a) {
    const Json doc = load_json_file(a.config);
    if (!doc.is_object()) json_util::fail("decompose", "expected an object");
    const bool wrapped = doc.contains("field");
    const Json& fj = wrapped ? doc["field"] : doc;
    const FieldSpec field = field_from_json(fj, "field");
    const auto d = field.dim();

    Vector lower, upper;
    if (wrapped && doc.contains("domain")) {
        lower = json_util::vector(json_util::at(doc["domain"], "lower", "domain"), "domain.lower");
        upper = json_util::vector(json_util::at(doc["domain"], "upper", "domain"), "domain.upper");
    } else if (fj.contains("box")) {
        lower = field.box().lower;
        upper = field.box().upper;
    } else {
        json_util::fail("domain", "missing required key (field declares no box)");
    }
    if (lower.size() != d || upper.size() != d) json_util::fail("domain", "dimension differs from field");

    std::vector<int> points;
    if (a.grid) points = *a.grid;
    else if (wrapped && doc.contains("grid")) {
        const auto& gj = doc["grid"];
        points = gj.is_number_integer() ? std::vector<int>{json_util::integer(gj, "grid")}
                                        : json_util::int_list(gj, "grid");
    } else {
        points = {32};
    }
    if (points.size() == 1) points.assign(static_cast<std::size_t>(d), points.front());
    if (static_cast<Eigen::Index>(points.size()) != d) json_util::fail("grid", "need one size or one per axis");

    hhd::DecomposeOptions opts;
    std::string backend = a.backend.value_or(wrapped && doc.contains("backend")
                                                 ? json_util::string(doc["backend"], "backend")
                                                 : std::string("quadrature"));
    if (backend == "quadrature") opts.backend = hhd::Backend::Quadrature;
    else if (backend == "spectral") opts.backend = hhd::Backend::Spectral;
    else json_util::fail("backend", "must be quadrature or spectral");
    std::string region = a.region.value_or(wrapped && doc.contains("region") ? json_util::string(doc["region"], "region")
                                                                             : std::string("ball"));
    if (region == "ball") opts.region = hhd::Region::Ball;
    else if (region == "box") opts.region = hhd::Region::Box;
    else json_util::fail("region", "must be ball or box");
    if (wrapped && doc.contains("interior_fraction"))
        opts.interior_fraction = json_util::number(doc["interior_fraction"], "interior_fraction");

    const hhd::GridDomain g(lower, upper, points);
    const auto v = hhd::sample_field(field, g);
    const auto r = hhd::decompose(v, opts);

    const fs::path dir = a.out ? *a.out : output_root() / "decompose";
    std::vector<std::string> comps;
    for (Eigen::Index i = 1; i <= d; ++i) comps.push_back("c_" + std::to_string(i));
    Json files = Json::array();
    files.push_back(artifacts::write_artifact(dir, "field.csv", grid_csv(v, comps), "field"));
    files.push_back(artifacts::write_artifact(dir, "psi.csv", grid_csv(r.psi, comps), "psi"));
    files.push_back(artifacts::write_artifact(dir, "phi.csv", grid_csv(r.phi, {"phi"}), "phi"));
    files.push_back(artifacts::write_artifact(dir, "alpha.csv", grid_csv(r.alpha, comps), "alpha"));
    Json manifest = {{"command", "decompose"},
                     {"tool_version", artifacts::kToolVersion},
                     {"field", field_to_json(field)},
                     {"domain", {{"lower", json_util::to_json(lower)}, {"upper", json_util::to_json(upper)}}},
                     {"resolution", points},
                     {"backend", backend},
                     {"region", region},
                     {"interior_fraction", opts.interior_fraction},
                     {"interior_points", r.interior_count},
                     {"kernel_evaluations", r.kernel_evaluations},
                     {"residual_poisson", r.residual_poisson},
                     {"residual_div_alpha", r.residual_div_alpha},
                     {"residual_reconstruction", r.residual_reconstruction},
                     {"created_utc", artifacts::utc_now()},
                     {"files", files}};
    if (field.has_analytic_decomposition()) {
        const auto e = hhd::split_errors(r, field);
        manifest["split_errors"] = {{"gradient_part", e.gradient_part},
                                    {"solenoidal_part", e.solenoidal_part},
                                    {"potential", e.potential}};
    }
    artifacts::write_manifest(dir, manifest);
    Json summary = manifest;
    summary.erase("files");
    summary.erase("field");
    summary["out_dir"] = dir.string();
    return summary;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepAxis {
    std::string name;
    std::vector<double> values;
};

/// "name=v1,v2,..." or "name=start:stop:step" (inclusive stop).
[[nodiscard]] inline SweepAxis parse_axis(const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) json_util::fail("grid", "expected name=values, got '" + spec + "'");
    SweepAxis ax{spec.substr(0, eq), {}};
    const auto rhs = spec.substr(eq + 1);
    auto num = [&](const std::string& t) {
        try {
            std::size_t used = 0;
            const double v = std::stod(t, &used);
            if (used != t.size() || !std::isfinite(v)) throw std::invalid_argument(t);
            return v;
        } catch (const std::exception&) {
            json_util::fail("grid." + ax.name, "not a finite number: '" + t + "'");
        }
    };
    if (rhs.empty()) return ax;
    if (rhs.find(':') != std::string::npos) {
        const auto a = rhs.find(':'), b = rhs.find(':', a + 1);
        if (b == std::string::npos) json_util::fail("grid." + ax.name, "range needs start:stop:step");
        const double lo = num(rhs.substr(0, a)), hi = num(rhs.substr(a + 1, b - a - 1)), st = num(rhs.substr(b + 1));
        if (!(st > 0.0)) json_util::fail("grid." + ax.name, "step must be > 0");
        const auto n = static_cast<long long>(std::floor((hi - lo) / st + 1e-9));
        if (n > 100000) json_util::fail("grid." + ax.name, "too many values");
        for (long long i = 0; i <= n; ++i) ax.values.push_back(lo + static_cast<double>(i) * st);
        return ax;
    }
    std::size_t pos = 0;
    while (pos <= rhs.size()) {
        const auto comma = rhs.find(',', pos);
        ax.values.push_back(num(rhs.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos)));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return ax;
}

/// {"axes": [{"name": .., "values": [..]}, ...]} or {"name": [values], ...}.
[[nodiscard]] inline std::vector<SweepAxis> axes_from_json(const Json& j) {
    std::vector<SweepAxis> axes;
    if (j.is_object() && j.contains("axes")) {
        const auto& arr = j["axes"];
        if (!arr.is_array()) json_util::fail("axes", "expected an array");
        for (std::size_t k = 0; k < arr.size(); ++k) {
            const auto p = "axes[" + std::to_string(k) + "]";
            SweepAxis ax{json_util::string(json_util::at(arr[k], "name", p), p + ".name"), {}};
            const Vector v = json_util::vector(json_util::at(arr[k], "values", p), p + ".values");
            ax.values.assign(v.data(), v.data() + v.size());
            axes.push_back(std::move(ax));
        }
        return axes;
    }
    if (!j.is_object()) json_util::fail("grid", "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const Vector v = json_util::vector(it.value(), "grid." + it.key());
        axes.push_back({it.key(), std::vector<double>(v.data(), v.data() + v.size())});
    }
    return axes;
}

struct SweepArgs {
    std::string scenario;
    std::vector<SweepAxis> axes;
    std::optional<int> parallel;
    std::optional<fs::path> out;
    Json base_overrides = Json::object();
};

struct SweepCell {
    std::vector<double> values;
    long long seed = 0;
    bool ok = false;
    std::string error;
    std::string error_kind;
    Json diagnostics = Json::object();
    bool passed = false;
};

/// Runs the Cartesian product of the axes; zero axes or an empty axis gives
/// an empty table. Seeds are base seed + cell index unless `seed` is an axis.
inline Json cmd_sweep(const SweepArgs& a) {
    const Json defaults = detail::library_defaults(a.scenario);
    std::set<std::string> seen;
    for (const auto& ax : a.axes) {
        if (!defaults.contains(ax.name))
            json_util::fail("grid." + ax.name, "not a parameter of scenario '" + a.scenario + "'");
        if (!seen.insert(ax.name).second) json_util::fail("grid." + ax.name, "duplicate axis");
        if (defaults[ax.name].is_array()) json_util::fail("grid." + ax.name, "array parameters cannot be swept");
        if (defaults[ax.name].is_number_integer())
            for (double v : ax.values)
                if (v != std::floor(v)) json_util::fail("grid." + ax.name, "expected integer values");
    }
    std::size_t n_cells = a.axes.empty() ? 0 : 1;
    for (const auto& ax : a.axes) n_cells *= ax.values.size();
    const bool seed_axis = seen.count("seed") > 0;
    const long long base_seed =
        a.base_overrides.contains("seed") ? a.base_overrides["seed"].get<long long>() : defaults["seed"].get<long long>();

    std::vector<SweepCell> cells(n_cells);
    for (std::size_t c = 0; c < n_cells; ++c) {
        std::size_t rem = c;
        cells[c].values.resize(a.axes.size());
        for (std::size_t i = a.axes.size(); i-- > 0;) {
            cells[c].values[i] = a.axes[i].values[rem % a.axes[i].values.size()];
            rem /= a.axes[i].values.size();
        }
    }
    const fs::path dir = a.out ? *a.out : output_root() / ("sweep-" + a.scenario);

    auto run_cell = [&](std::size_t c) {
        auto& cell = cells[c];
        Json ov = a.base_overrides;
        for (std::size_t i = 0; i < a.axes.size(); ++i) {
            const auto& name = a.axes[i].name;
            if (defaults[name].is_number_integer()) ov[name] = static_cast<long long>(cell.values[i]);
            else ov[name] = cell.values[i];
        }
        if (!seed_axis) ov["seed"] = base_seed + static_cast<long long>(c);
        cell.seed = ov["seed"].get<long long>();
        try {
            const auto report = run_scenario(build_scenario(a.scenario, ov));
            cell.diagnostics = report.diagnostics;
            cell.passed = report.passed;
            cell.ok = true;
        } catch (const Error& e) {
            cell.error = e.what();
            cell.error_kind = to_string(e.kind());
        } catch (const std::exception& e) {
            cell.error = e.what();
            cell.error_kind = "internal";
        }
    };
    const unsigned workers = std::min<unsigned>(thread_count(a.parallel), static_cast<unsigned>(std::max<std::size_t>(n_cells, 1)));
    std::atomic<std::size_t> next{0};
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t c = next++; c < n_cells; c = next++) run_cell(c);
            });
    }

    // Single collector: per-cell reports, then the table in cell order.
    std::set<std::string> diag_keys;
    for (const auto& cell : cells)
        for (auto it = cell.diagnostics.begin(); it != cell.diagnostics.end(); ++it)
            if (it.value().is_number() || it.value().is_string()) diag_keys.insert(it.key());
    diag_keys.erase("verdict");
    std::vector<std::string> header{"cell"};
    for (const auto& ax : a.axes) header.push_back(ax.name);
    for (const char* h : {"seed", "status", "error", "verdict", "expectations_passed"}) header.emplace_back(h);
    header.insert(header.end(), diag_keys.begin(), diag_keys.end());
    artifacts::CsvWriter table(header);
    Json files = Json::array();
    for (std::size_t c = 0; c < n_cells; ++c) {
        const auto& cell = cells[c];
        table.integer(static_cast<long long>(c));
        for (double v : cell.values) table.number(v);
        table.integer(cell.seed).text(cell.ok ? "ok" : "error").text(cell.error);
        if (cell.diagnostics.contains("verdict")) table.text(cell.diagnostics["verdict"].get<std::string>());
        else table.empty();
        if (cell.ok) table.integer(cell.passed ? 1 : 0);
        else table.empty();
        for (const auto& k : diag_keys) {
            if (!cell.diagnostics.contains(k)) table.empty();
            else if (cell.diagnostics[k].is_string()) table.text(cell.diagnostics[k].get<std::string>());
            else table.number(cell.diagnostics[k].get<double>());
        }
        table.end_row();
        Json cell_json = {{"cell", c}, {"seed", cell.seed}, {"status", cell.ok ? "ok" : "error"},
                          {"diagnostics", cell.diagnostics}, {"expectations_passed", cell.passed}};
        Json params = Json::object();
        for (std::size_t i = 0; i < a.axes.size(); ++i) params[a.axes[i].name] = cell.values[i];
        cell_json["params"] = params;
        if (!cell.ok) cell_json["error"] = {{"kind", cell.error_kind}, {"message", cell.error}};
        files.push_back(artifacts::write_artifact(dir, "cells/" + std::to_string(c) + "/report.json",
                                                  cell_json.dump(2) + "\n", "cell"));
    }
    files.insert(files.begin(), artifacts::write_artifact(dir, "sweep.csv", table.str(), "sweep_table"));
    Json axes = Json::array();
    for (const auto& ax : a.axes) axes.push_back({{"name", ax.name}, {"values", ax.values}});
    std::size_t failed = 0;
    for (const auto& cell : cells) failed += cell.ok ? 0 : 1;
    artifacts::write_manifest(dir, {{"command", "sweep"},
                                    {"scenario_name", a.scenario},
                                    {"axes", axes},
                                    {"base_overrides", a.base_overrides},
                                    {"cells", n_cells},
                                    {"failed_cells", failed},
                                    {"threads", workers},
                                    {"tool_version", artifacts::kToolVersion},
                                    {"created_utc", artifacts::utc_now()},
                                    {"files", files}});
    return {{"command", "sweep"}, {"out_dir", dir.string()}, {"cells", n_cells}, {"failed_cells", failed}};
}

// ---------------------------------------------------------------------------
// list-scenarios
// ---------------------------------------------------------------------------

[[nodiscard]] inline Json cmd_list_scenarios() {
    Json out = Json::array();
    for (const auto& n : scenario_names()) {
        const auto s = build_scenario(n);
        out.push_back({{"name", n},
                       {"summary", scenario_summary(n)},
                       {"params", s.params},
                       {"expectations", detail::expectations_to_json(s.expectations)}});
    }
    return out;
}

}  // namespace pqdyn::cli
