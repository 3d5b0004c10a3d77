#pragma once

// Named, parameterized experiments with their expected diagnostics as data.
// Every default below is an artifact choice, not a value from the source model.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pqdyn/diagnostics.hpp"
#include "pqdyn/dynamics.hpp"
#include "pqdyn/error.hpp"
#include "pqdyn/field.hpp"
#include "pqdyn/field_json.hpp"
#include "pqdyn/json_util.hpp"

namespace pqdyn {

using json_util::Json;

/// `observed <predicate> value` with slack `tolerance`. Predicates: equals,
/// at_most, at_least. String values only support equals.
struct Expectation {
    std::string diagnostic;
    std::string predicate = "equals";
    Json value;
    double tolerance = 0.0;
};

struct ExpectationResult {
    Expectation expectation;
    Json observed;
    bool passed = false;
    std::string note;
};

struct Scenario {
    std::string name;   // library name, or "custom"
    Json params;        // resolved library parameters (empty for custom)
    std::shared_ptr<const FieldSpec> field;
    DampingSpec damping;
    NoiseSpec noise;
    PhaseState initial;
    std::optional<PopulationSpec> population;
    double time_rescale = 1.0;
    double dt = 1e-3;
    long long steps = 0;
    Vector center;                 // x*
    std::vector<int> subspace;     // Σ for decay fits
    AsymptoticThresholds thresholds;
    std::vector<Expectation> expectations;
    Matrix mapping;                // degenerate_manifold: y = M(x - x*)
};

struct RunReport {
    std::string scenario;
    Json params;
    Trajectory trajectory;                    // mean path for population runs
    std::optional<PopulationRun> population;
    std::optional<ActivitySeries> activity;
    Json diagnostics = Json::object();
    std::vector<ExpectationResult> results;
    std::vector<std::string> flags;
    bool passed = true;
};

[[nodiscard]] inline const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> names{"damped_well",         "rotational_well",
                                                "substitutable_subspace", "heterogeneous_agents",
                                                "degenerate_manifold",  "biased_expectations"};
    return names;
}

[[nodiscard]] inline std::string scenario_summary(const std::string& name) {
    if (name == "damped_well") return "pure-gradient well, gamma = I, no noise: equilibrium with non-increasing activity";
    if (name == "rotational_well") return "well plus rotation and quartic confinement: circulation on a limit cycle";
    if (name == "substitutable_subspace") return "substitutable block on the first k axes: perturbation decay rate";
    if (name == "heterogeneous_agents") return "two seller groups: mean path versus the damped continuous model";
    if (name == "degenerate_manifold") return "field -M^T M (x - x*): range decays, null space drifts only by noise";
    if (name == "biased_expectations") return "well with biased noise: equilibrium displaced by bias / a";
    return "";
}

namespace detail {

inline Expectation expect(std::string diag, std::string pred, Json value, double tol = 0.0) {
    return {std::move(diag), std::move(pred), std::move(value), tol};
}

inline Json thresholds_defaults() {
    const AsymptoticThresholds t;
    return {{"tol_v", t.tol_v}, {"tol_f", t.tol_f}, {"dwell_fraction", t.dwell_fraction},
            {"recurrence_fraction", t.recurrence_fraction}};
}

inline Json library_defaults(const std::string& name) {
    Json p;
    if (name == "damped_well") {
        p = {{"center", {0.5, 1.0, 0.25, 0.75}}, {"offset", {1.0, -0.5, 0.5, 0.25}},
             {"stiffness", 1.0}, {"gamma", 1.0}, {"dt", 0.01}, {"steps", 10000}, {"seed", 1},
             {"box_half_width", 10.0}};
    } else if (name == "rotational_well") {
        p = {{"c", 2.0}, {"gamma", 1.0}, {"beta", 1.0}, {"center", {0.5, -0.25}},
             {"offset", {0.5, 0.0}}, {"dt", 1e-3}, {"steps", 120000}, {"seed", 1},
             {"box_half_width", 10.0}};
    } else if (name == "substitutable_subspace") {
        p = {{"a", 2.0}, {"b", 0.5}, {"k", 2}, {"gamma", 4.0}, {"center", {0.5, 0.5, 0.0, 0.0}},
             {"offset", {0.3, -0.1, 0.2, 0.0}}, {"dt", 0.01}, {"steps", 6000}, {"seed", 1}};
    } else if (name == "heterogeneous_agents") {
        p = {{"a", 0.05}, {"f_b", 0.5}, {"nu", 1.0}, {"sellers_a", 10}, {"sellers_b", 10},
             {"dispersion", 0.01}, {"center", {1.0, 1.0}}, {"offset", {1.0, 0.5}}, {"steps", 400},
             {"seed", 1}, {"sigma", 0.0}, {"time_rescale", 1.0}};
    } else if (name == "degenerate_manifold") {
        p = {{"n", 4}, {"m", 1}, {"gamma", 1.0}, {"sigma", 1e-9}, {"dt", 0.01}, {"steps", 6000},
             {"seed", 1}, {"matrix_seed", 20240611}};
    } else if (name == "biased_expectations") {
        p = {{"a", 2.0}, {"gamma", 1.0}, {"bias", {0.1, 0.0}}, {"sigma", 0.01},
             {"center", {1.0, 0.5}}, {"offset", {0.2, -0.1}}, {"dt", 0.01}, {"steps", 10000},
             {"seed", 1}, {"tail_fraction", 0.5}};
    } else {
        throw Error(ErrorKind::Config, "config key 'scenario': unknown scenario '" + name + "'");
    }
    if (name != "heterogeneous_agents") p.update(thresholds_defaults());
    return p;
}

/// Overlay overrides on defaults; every key must exist and keep its JSON kind.
inline Json merge_params(const std::string& name, const Json& overrides) {
    Json p = library_defaults(name);
    if (overrides.is_null()) return p;
    if (!overrides.is_object()) json_util::fail("overrides", "expected an object");
    for (auto it = overrides.begin(); it != overrides.end(); ++it) {
        const std::string path = "overrides." + it.key();
        if (!p.contains(it.key())) json_util::fail(path, "not a parameter of scenario '" + name + "'");
        const Json& def = p[it.key()];
        const Json& val = it.value();
        const bool ok = (def.is_number_integer() && val.is_number_integer()) ||
                        (def.is_number_float() && val.is_number()) ||
                        (def.is_array() && val.is_array());
        if (!ok) json_util::fail(path, def.is_number_integer() ? "expected an integer"
                                      : def.is_array()         ? "expected an array"
                                                               : "expected a number");
        p[it.key()] = val;
    }
    return p;
}

inline double pnum(const Json& p, const char* key) { return json_util::number(p.at(key), std::string("params.") + key); }
inline long long pint(const Json& p, const char* key) { return json_util::integer64(p.at(key), std::string("params.") + key); }
inline Vector pvec(const Json& p, const char* key, Eigen::Index dim) {
    Vector v = json_util::vector(p.at(key), std::string("params.") + key);
    if (v.size() != dim)
        json_util::fail(std::string("params.") + key, "expected " + std::to_string(dim) + " entries");
    return v;
}

inline void positive(const Json& p, const char* key) {
    if (!(pnum(p, key) > 0.0)) json_util::fail(std::string("params.") + key, "must be > 0");
}

inline AsymptoticThresholds thresholds_from(const Json& p) {
    AsymptoticThresholds t;
    if (p.contains("tol_v")) t.tol_v = pnum(p, "tol_v");
    if (p.contains("tol_f")) t.tol_f = pnum(p, "tol_f");
    if (p.contains("dwell_fraction")) t.dwell_fraction = pnum(p, "dwell_fraction");
    if (p.contains("recurrence_fraction")) t.recurrence_fraction = pnum(p, "recurrence_fraction");
    return t;
}

inline void run_params(Scenario& s, const Json& p) {
    s.dt = p.contains("dt") ? pnum(p, "dt") : 1.0;
    s.steps = pint(p, "steps");
    if (!(s.dt > 0.0)) json_util::fail("params.dt", "must be > 0");
    if (s.steps < 1) json_util::fail("params.steps", "must be >= 1");
    s.thresholds = thresholds_from(p);
}

inline NoiseSpec noise_from(const Json& p, Eigen::Index dim, double sigma, Vector bias = {}) {
    NoiseSpec n;
    n.bias = bias.size() == dim ? bias : Vector::Zero(dim);
    n.sigma = Vector::Constant(dim, sigma);
    const long long seed = pint(p, "seed");
    if (seed < 0) json_util::fail("params.seed", "must be >= 0");
    n.seed = static_cast<std::uint64_t>(seed);
    return n;
}

/// 2m × 2n mapping with orthonormal rows scaled by 1 … 1.5, deterministic in `seed`.
inline Matrix degenerate_mapping(int n, int m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    Matrix G(2 * n, 2 * m);
    for (Eigen::Index i = 0; i < G.size(); ++i) G.data()[i] = n01(rng);
    Eigen::HouseholderQR<Matrix> qr(G);
    const Matrix Q = qr.householderQ() * Matrix::Identity(2 * n, 2 * m);
    Matrix M = Q.transpose();
    for (int j = 0; j < 2 * m; ++j) M.row(j) *= 1.0 + 0.5 * j / std::max(1, 2 * m - 1);
    return M;
}

inline Scenario build_library(const std::string& name, const Json& p) {
    Scenario s;
    s.name = name;
    s.params = p;
    run_params(s, p);
    if (name == "damped_well") {
        const Eigen::Index d = 4;
        positive(p, "stiffness");
        positive(p, "gamma");
        positive(p, "box_half_width");
        s.center = pvec(p, "center", d);
        s.field = std::make_shared<const FieldSpec>(
            d, std::vector<FieldTerm>{quadratic_well(s.center, pnum(p, "stiffness"))},
            Box::around(s.center, pnum(p, "box_half_width")));
        s.damping = DampingSpec::uniform(d, pnum(p, "gamma"));
        s.noise = noise_from(p, d, 0.0);
        s.initial = {s.center + pvec(p, "offset", d), Vector::Zero(d)};
        s.expectations = {expect("verdict", "equals", "equilibrium"),
                          expect("distance_to_center", "at_most", 1e-6),
                          expect("activity_max_ratio", "at_most", 10.0),
                          expect("activity_non_increasing", "equals", 1)};
    } else if (name == "rotational_well") {
        const Eigen::Index d = 2;
        positive(p, "gamma");
        positive(p, "box_half_width");
        if (pnum(p, "beta") < 0.0) json_util::fail("params.beta", "must be >= 0");
        s.center = pvec(p, "center", d);
        Polynomial quartic;  // β/4 |δ|⁴
        const double beta = pnum(p, "beta");
        quartic.monomials = {{beta / 4, {4, 0}}, {beta / 2, {2, 2}}, {beta / 4, {0, 4}}};
        s.field = std::make_shared<const FieldSpec>(
            d,
            std::vector<FieldTerm>{quadratic_well(s.center, 1.0), PolynomialPotential{s.center, quartic},
                                   Rotation{0, 1, s.center, pnum(p, "c")}},
            Box::around(s.center, pnum(p, "box_half_width")));
        s.damping = DampingSpec::uniform(d, pnum(p, "gamma"));
        s.noise = noise_from(p, d, 0.0);
        s.initial = {s.center + pvec(p, "offset", d), Vector::Zero(d)};
        s.subspace = {0, 1};
        s.expectations = {expect("verdict", "equals", "circulation"),
                          expect("period_spread", "at_most", 0.10),
                          expect("loop_balance_ratio", "at_most", 0.01),
                          expect("stokes_mismatch", "at_most", 0.02),
                          expect("activity_max_ratio", "at_most", 10.0)};
    } else if (name == "substitutable_subspace") {
        const Eigen::Index d = 4;
        positive(p, "a");
        positive(p, "gamma");
        const long long k = pint(p, "k");
        if (k < 2 || k > d) json_util::fail("params.k", "must be in [2, 4]");
        s.center = pvec(p, "center", d);
        s.field = std::make_shared<const FieldSpec>(
            make_substitutable_field(pnum(p, "a"), pnum(p, "b"), static_cast<int>(k), StateVector(s.center)));
        s.damping = DampingSpec::uniform(d, pnum(p, "gamma"));
        s.noise = noise_from(p, d, 0.0);
        s.initial = {s.center + pvec(p, "offset", d), Vector::Zero(d)};
        for (int i = 0; i < k; ++i) s.subspace.push_back(i);
        s.expectations = {expect("decaying", "equals", 1),
                          expect("decay_rate_error", "at_most", 0.05)};
    } else if (name == "heterogeneous_agents") {
        const Eigen::Index d = 2;
        positive(p, "a");
        positive(p, "nu");
        positive(p, "time_rescale");
        const double fb = pnum(p, "f_b");
        if (fb < 0.0 || fb > 1.0) json_util::fail("params.f_b", "must be in [0, 1]");
        s.center = pvec(p, "center", d);
        s.field = std::make_shared<const FieldSpec>(d, std::vector<FieldTerm>{quadratic_well(s.center, pnum(p, "a"))});
        PopulationSpec pop;
        pop.f_b = fb;
        pop.f_a = 1.0 - fb;
        pop.nu = pnum(p, "nu");
        pop.sellers_a = static_cast<int>(pint(p, "sellers_a"));
        pop.sellers_b = static_cast<int>(pint(p, "sellers_b"));
        pop.initial_dispersion = pnum(p, "dispersion");
        pop.initial_mean = s.center + pvec(p, "offset", d);
        pop.initial_delta = Vector::Zero(d);
        s.population = pop;
        s.time_rescale = pnum(p, "time_rescale");
        s.noise = noise_from(p, d, pnum(p, "sigma"));
        s.damping = DampingSpec::uniform(d, 1.0);
        s.initial = {pop.initial_mean, pop.initial_delta};
        s.expectations = {expect("regime_match", "equals", 1),
                          expect("second_difference_residual", "at_most", 1e-12)};
    } else if (name == "degenerate_manifold") {
        const long long n = pint(p, "n"), m = pint(p, "m");
        if (n < 2) json_util::fail("params.n", "must be >= 2");
        if (m < 1 || m >= n) json_util::fail("params.m", "must satisfy 1 <= m < n");
        positive(p, "gamma");
        if (pnum(p, "sigma") < 0.0) json_util::fail("params.sigma", "must be >= 0");
        const auto d = static_cast<Eigen::Index>(2 * n);
        s.mapping = degenerate_mapping(static_cast<int>(n), static_cast<int>(m),
                                       static_cast<std::uint64_t>(pint(p, "matrix_seed")));
        s.center = Vector::Constant(d, 0.25);
        auto inner = std::make_shared<const FieldSpec>(
            2 * m, std::vector<FieldTerm>{quadratic_well(Vector::Zero(2 * m), 1.0)});
        s.field = std::make_shared<const FieldSpec>(
            make_degenerate_field({{1.0, s.mapping, -(s.mapping * s.center)}}, inner));
        s.damping = DampingSpec::uniform(d, pnum(p, "gamma"));
        s.noise = noise_from(p, d, pnum(p, "sigma"));
        Vector offset(d);
        for (Eigen::Index i = 0; i < d; ++i) offset[i] = 0.5 * static_cast<double>(i % 3) - 0.4;
        s.initial = {s.center + offset, Vector::Zero(d)};
        s.expectations = {expect("range_component_final", "at_most", 1e-6),
                          expect("null_drift_excess", "at_most", 0.0)};
    } else if (name == "biased_expectations") {
        const Eigen::Index d = 2;
        positive(p, "a");
        positive(p, "gamma");
        const double tail = pnum(p, "tail_fraction");
        if (!(tail > 0.0 && tail < 1.0)) json_util::fail("params.tail_fraction", "must be in (0, 1)");
        if (pnum(p, "sigma") < 0.0) json_util::fail("params.sigma", "must be >= 0");
        s.center = pvec(p, "center", d);
        s.field = std::make_shared<const FieldSpec>(d, std::vector<FieldTerm>{quadratic_well(s.center, pnum(p, "a"))});
        s.damping = DampingSpec::uniform(d, pnum(p, "gamma"));
        s.noise = noise_from(p, d, pnum(p, "sigma"), pvec(p, "bias", d));
        s.initial = {s.center + pvec(p, "offset", d), Vector::Zero(d)};
        s.expectations = {expect("displacement_error", "at_most", 0.05)};
    }
    return s;
}

inline std::vector<Expectation> expectations_from_json(const Json& j, const std::string& path) {
    if (!j.is_array()) json_util::fail(path, "expected an array");
    std::vector<Expectation> out;
    for (std::size_t k = 0; k < j.size(); ++k) {
        const auto ep = path + "[" + std::to_string(k) + "]";
        Expectation e;
        e.diagnostic = json_util::string(json_util::at(j[k], "diagnostic", ep), ep + ".diagnostic");
        e.predicate = json_util::string(json_util::at(j[k], "predicate", ep), ep + ".predicate");
        if (e.predicate != "equals" && e.predicate != "at_most" && e.predicate != "at_least")
            json_util::fail(ep + ".predicate", "must be equals, at_most or at_least");
        e.value = json_util::at(j[k], "value", ep);
        if (!e.value.is_number() && !e.value.is_string())
            json_util::fail(ep + ".value", "expected a number or string");
        if (e.value.is_string() && e.predicate != "equals")
            json_util::fail(ep + ".predicate", "string values only support equals");
        if (j[k].contains("tolerance")) e.tolerance = json_util::number(j[k]["tolerance"], ep + ".tolerance");
        out.push_back(std::move(e));
    }
    return out;
}

inline Json expectations_to_json(const std::vector<Expectation>& es) {
    Json a = Json::array();
    for (const auto& e : es)
        a.push_back({{"diagnostic", e.diagnostic}, {"predicate", e.predicate}, {"value", e.value},
                     {"tolerance", e.tolerance}});
    return a;
}

inline Scenario build_custom(const Json& doc) {
    Scenario s;
    s.name = "custom";
    s.field = std::make_shared<const FieldSpec>(field_from_json(json_util::at(doc, "field", "scenario"), "field"));
    const auto d = s.field->dim();
    const auto& damp = json_util::at(doc, "damping", "scenario");
    s.damping.gamma = damp.is_number() ? Vector::Constant(d, damp.get<double>()) : json_util::vector(damp, "damping");
    try {
        s.damping.validate(d);
    } catch (const Error& e) {
        json_util::fail("damping", e.what());
    }
    s.noise = NoiseSpec::none(d);
    if (doc.contains("noise")) {
        const auto& n = doc["noise"];
        if (n.contains("bias")) s.noise.bias = json_util::vector(n["bias"], "noise.bias");
        if (n.contains("sigma")) {
            s.noise.sigma = n["sigma"].is_number() ? Vector::Constant(d, n["sigma"].get<double>())
                                                   : json_util::vector(n["sigma"], "noise.sigma");
        }
        if (n.contains("seed")) {
            const auto seed = json_util::integer64(n["seed"], "noise.seed");
            if (seed < 0) json_util::fail("noise.seed", "must be >= 0");
            s.noise.seed = static_cast<std::uint64_t>(seed);
        }
        try {
            s.noise.validate(d);
        } catch (const Error& e) {
            json_util::fail("noise", e.what());
        }
    }
    const auto& init = json_util::at(doc, "initial", "scenario");
    s.initial.x = json_util::vector(json_util::at(init, "x", "initial"), "initial.x");
    s.initial.v = init.contains("v") ? json_util::vector(init["v"], "initial.v") : Vector::Zero(d);
    if (s.initial.x.size() != d || s.initial.v.size() != d)
        json_util::fail("initial", "x and v must have " + std::to_string(d) + " entries");
    s.dt = json_util::number(json_util::at(doc, "dt", "scenario"), "dt");
    s.steps = json_util::integer64(json_util::at(doc, "steps", "scenario"), "steps");
    if (!(s.dt > 0.0)) json_util::fail("dt", "must be > 0");
    if (s.steps < 1) json_util::fail("steps", "must be >= 1");
    s.center = doc.contains("center") ? json_util::vector(doc["center"], "center") : Vector::Zero(d);
    if (s.center.size() != d) json_util::fail("center", "dimension mismatch");
    if (doc.contains("subspace")) s.subspace = json_util::int_list(doc["subspace"], "subspace");
    for (int i : s.subspace)
        if (i < 0 || i >= d) json_util::fail("subspace", "index out of range");
    if (doc.contains("thresholds")) s.thresholds = thresholds_from(doc["thresholds"]);
    if (doc.contains("expectations")) s.expectations = expectations_from_json(doc["expectations"], "expectations");
    s.params = Json::object();
    s.params["document"] = doc;
    return s;
}

}  // namespace detail

/// Library scenario with parameter overrides (keys must be known parameters).
[[nodiscard]] inline Scenario build_scenario(const std::string& name, const Json& overrides = Json::object()) {
    return detail::build_library(name, detail::merge_params(name, overrides));
}

/// Either {"scenario": name, "overrides": {...}, "expectations": [...]} or a
/// custom document {"field", "damping", "initial", "dt", "steps", ...}.
[[nodiscard]] inline Scenario scenario_from_json(const Json& doc) {
    if (!doc.is_object()) json_util::fail("scenario", "expected an object");
    static const std::set<std::string> library_keys{"scenario", "overrides", "params", "expectations"};
    static const std::set<std::string> custom_keys{"name",   "field",      "damping",  "noise",      "initial",
                                                   "dt",     "steps",      "center",   "subspace",   "thresholds",
                                                   "expectations"};
    const auto& allowed = doc.contains("scenario") ? library_keys : custom_keys;
    for (auto it = doc.begin(); it != doc.end(); ++it)
        if (!allowed.count(it.key())) json_util::fail(it.key(), "unknown key");
    Scenario s;
    if (doc.contains("scenario")) {
        const auto name = json_util::string(doc["scenario"], "scenario");
        Json ov = doc.contains("overrides") ? doc["overrides"] : Json::object();
        if (doc.contains("params")) ov = doc["params"];
        s = build_scenario(name, ov);
        if (doc.contains("expectations"))
            s.expectations = detail::expectations_from_json(doc["expectations"], "expectations");
    } else {
        s = detail::build_custom(doc);
    }
    return s;
}

/// Canonical document that rebuilds the same scenario.
[[nodiscard]] inline Json scenario_to_json(const Scenario& s) {
    if (s.name == "custom") {
        Json doc = s.params.at("document");
        doc["expectations"] = detail::expectations_to_json(s.expectations);
        return doc;
    }
    return {{"scenario", s.name}, {"params", s.params},
            {"expectations", detail::expectations_to_json(s.expectations)}};
}

/// Apply seed/dt/steps overrides to a scenario document (library or custom).
[[nodiscard]] inline Json apply_run_overrides(Json doc, std::optional<long long> seed, std::optional<double> dt,
                                              std::optional<long long> steps) {
    if (doc.contains("scenario")) {
        Json& ov = doc.contains("params") ? doc["params"] : doc["overrides"];
        if (ov.is_null()) ov = Json::object();
        if (seed) ov["seed"] = *seed;
        if (dt) ov["dt"] = *dt;
        if (steps) ov["steps"] = *steps;
    } else {
        if (seed) doc["noise"]["seed"] = *seed;
        if (dt) doc["dt"] = *dt;
        if (steps) doc["steps"] = *steps;
    }
    return doc;
}

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

[[nodiscard]] inline ExpectationResult evaluate_expectation(const Expectation& e, const Json& diagnostics) {
    ExpectationResult r{e, Json(), false, ""};
    if (!diagnostics.contains(e.diagnostic)) {
        r.note = "diagnostic not computed";
        return r;
    }
    r.observed = diagnostics[e.diagnostic];
    if (e.value.is_string()) {
        r.passed = r.observed.is_string() && r.observed.get<std::string>() == e.value.get<std::string>();
        return r;
    }
    if (!r.observed.is_number()) {
        r.note = "diagnostic is not numeric";
        return r;
    }
    const double obs = r.observed.get<double>();
    const double val = e.value.get<double>();
    if (e.predicate == "equals") r.passed = std::abs(obs - val) <= e.tolerance;
    else if (e.predicate == "at_most") r.passed = obs <= val + e.tolerance;
    else if (e.predicate == "at_least") r.passed = obs >= val - e.tolerance;
    else r.note = "unknown predicate";
    return r;
}

namespace detail {

inline double relative_error(double observed, double expected) {
    return std::abs(observed - expected) / std::max(std::abs(expected), 1e-300);
}

/// Verdict, activity and loop diagnostics shared by all continuous runs.
inline void continuous_diagnostics(const Scenario& s, RunReport& rep) {
    auto& dg = rep.diagnostics;
    const auto& tr = rep.trajectory;
    const auto& field = *s.field;
    const auto verdict = classify_asymptotics(tr, field, s.thresholds);
    const auto& ev = verdict.evidence;
    dg["verdict"] = to_string(verdict.kind);
    dg["final_speed"] = ev.final_speed;
    dg["final_field_norm"] = ev.final_field_norm;
    dg["recurrences"] = ev.recurrence_indices.size();
    dg["period"] = ev.period;
    dg["period_spread"] = ev.period_spread;
    dg["enclosed_curl"] = ev.enclosed_curl;
    dg["distance_to_center"] = (tr.states.back().x - s.center).norm();
    dg["clamped"] = tr.any_clamped() ? 1 : 0;
    if (tr.any_clamped()) rep.flags.push_back("trajectory clamped to the domain box");

    if (!field.has_analytic_decomposition()) return;
    const auto dec = DecompositionAccess::analytic(field);
    rep.activity = activity_series(tr, dec, s.damping);
    const auto chk = check_activity(*rep.activity, tr.dt);
    dg["activity_max_ratio"] = chk.max_ratio;
    dg["activity_non_increasing"] = chk.non_increasing ? 1 : 0;

    const auto whole = path_integrals(tr, 0, tr.size() - 1, dec, s.damping);
    dg["path_circulation"] = whole.circulation;
    dg["path_dissipation"] = whole.dissipation;
    dg["path_bias"] = whole.bias;
    dg["path_delta_activity"] = whole.delta_activity;
    dg["path_balance_ratio"] = whole.balance_residual / std::max(whole.max_term, 1e-300);

    if (verdict.kind == VerdictKind::Circulation) {
        const std::size_t a = ev.reference_index;
        const std::size_t b = ev.recurrence_indices.front();
        const auto loop = path_integrals(tr, a, b, dec, s.damping);
        const double largest = std::max({std::abs(loop.circulation), loop.dissipation, std::abs(loop.bias)});
        dg["loop_circulation"] = loop.circulation;
        dg["loop_dissipation"] = loop.dissipation;
        dg["loop_bias"] = loop.bias;
        dg["loop_closure_gap"] = loop.closure_gap;
        dg["loop_closure_residual"] = loop.closure_residual;
        dg["loop_balance_ratio"] =
            std::abs(loop.circulation - loop.dissipation + loop.bias) / std::max(largest, 1e-300);
        if (tr.dim() == 2) {
            const auto st = stokes_check(loop_points(tr, a, b), field, 0, 1);
            dg["stokes_line"] = st.line_integral;
            dg["stokes_surface"] = st.surface_integral;
            dg["stokes_mismatch"] = st.mismatch;
        }
    }
}

inline Trajectory prefix_until_clamp(const Trajectory& tr) {
    Trajectory out = tr;
    for (std::size_t k = 0; k < tr.size(); ++k)
        if (tr.flags[k]) {
            const auto keep = static_cast<std::ptrdiff_t>(k);
            out.times.resize(k);
            out.states.resize(k);
            out.noise_draws.resize(k);
            out.flags.resize(k);
            if (!out.activity.empty()) out.activity.resize(std::min(out.activity.size(), k));
            (void)keep;
            break;
        }
    return out;
}

inline void substitutable_diagnostics(const Scenario& s, RunReport& rep) {
    auto& dg = rep.diagnostics;
    const double a = pnum(s.params, "a"), b = pnum(s.params, "b"), g = pnum(s.params, "gamma");
    const int k = static_cast<int>(pint(s.params, "k"));
    const auto spec = analyze_substitutable(a, b, k);
    const double predicted = predicted_substitutable_rate(a, b, k, g);
    dg["predicted_decay_rate"] = predicted;
    dg["symmetric_eigenvalue"] = spec.symmetric_mode;
    dg["contrast_eigenvalue"] = spec.contrast_mode;
    dg["stable_block"] = spec.decaying ? 1 : 0;
    if (!spec.decaying) rep.flags.push_back("stability boundary: a <= (k-1) b, symmetric mode does not decay");
    try {
        const auto fit = fit_decay_rate(prefix_until_clamp(rep.trajectory), s.subspace, s.center);
        dg["decay_rate"] = fit.rate;
        dg["decay_fit_residual"] = fit.residual;
        dg["decay_fit_peaks"] = fit.used_peaks ? 1 : 0;
        // Decaying only when the amplitude shrinks measurably over the run, so a
        // neutral mode fitted to roundoff does not count.
        const double horizon = static_cast<double>(s.steps) * s.dt;
        dg["decaying"] = fit.rate * horizon > 1e-6 ? 1 : 0;
        dg["decay_rate_error"] = relative_error(fit.rate, predicted);
    } catch (const Error& e) {
        dg["decay_fit_error"] = e.what();
    }
}

inline void degenerate_diagnostics(const Scenario& s, RunReport& rep) {
    auto& dg = rep.diagnostics;
    const auto& tr = rep.trajectory;
    const Matrix& M = s.mapping;
    const auto d = M.cols();
    const Matrix P_range = M.transpose() * (M * M.transpose()).ldlt().solve(M);
    const Matrix P_null = Matrix::Identity(d, d) - P_range;
    const Vector d0 = tr.states.front().x - s.center;
    const Vector dT = tr.states.back().x - s.center;
    dg["range_component_initial"] = (P_range * d0).norm();
    dg["range_component_final"] = (P_range * dT).norm();
    const double drift = (P_null * (dT - d0)).norm();
    // Replay the recorded noise through the damped free particle on the null space.
    const double g = pnum(s.params, "gamma");
    double bound = 0.0;
    Vector xn = Vector::Zero(d), vn = P_null * tr.states.front().v;
    for (std::size_t k = 0; k + 1 < tr.size(); ++k) {
        const Vector e = P_null * tr.noise_draws[k];
        bound += e.norm() * tr.dt / g;
        const double h = tr.dt, decay = std::exp(-g * h);
        xn += vn * (1.0 - decay) / g + e * (h - (1.0 - decay) / g) / g;
        vn = vn * decay + e * (1.0 - decay) / g;
    }
    dg["null_drift"] = drift;
    dg["null_drift_bound"] = bound;
    dg["null_drift_excess"] = std::max(0.0, drift - bound - 1e-12 * (1.0 + d0.norm()));
    dg["null_replay_error"] = (P_null * (dT - d0) - xn).norm();
    dg["rank"] = static_cast<long long>(M.rows());
}

inline void biased_diagnostics(const Scenario& s, RunReport& rep) {
    auto& dg = rep.diagnostics;
    const auto& tr = rep.trajectory;
    const double a = pnum(s.params, "a");
    const Vector bias = pvec(s.params, "bias", 2);
    const double tail = pnum(s.params, "tail_fraction");
    const auto start = static_cast<std::size_t>(std::floor((1.0 - tail) * static_cast<double>(tr.size())));
    Vector mean = Vector::Zero(2);
    for (std::size_t k = start; k < tr.size(); ++k) mean += tr.states[k].x - s.center;
    mean /= static_cast<double>(tr.size() - start);
    const Vector predicted = bias / a;
    dg["displacement"] = mean.norm();
    dg["predicted_displacement"] = predicted.norm();
    dg["displacement_error"] = (mean - predicted).norm() / std::max(predicted.norm(), 1e-300);
}

inline Regime continuous_regime(double stiffness, double gamma, double horizon) {
    if (gamma <= 0.0) return gamma * gamma < 4.0 * stiffness ? Regime::Ringing : Regime::Monotone;
    const FieldSpec f(2, {quadratic_well(Vector::Zero(2), stiffness)});
    const double dt = std::min(0.05, 0.01 / std::sqrt(std::max(stiffness, 1e-12)));
    const auto steps = static_cast<long long>(std::ceil(horizon / dt));
    Vector x0 = Vector::Zero(2);
    x0[0] = 1.0;
    const auto tr = integrate_second_order(f, DampingSpec::uniform(2, gamma), {x0, Vector::Zero(2)}, dt, steps,
                                           NoiseSpec::none(2));
    std::vector<double> series;
    for (const auto& st : tr.states) series.push_back(st.x[0]);
    return classify_regime(series);
}

inline void population_diagnostics(const Scenario& s, RunReport& rep) {
    auto& dg = rep.diagnostics;
    const auto& pop = *s.population;
    const auto& run = *rep.population;
    const double fbnu = pop.damping_product();
    dg["damping_product"] = fbnu;
    dg["undamped"] = run.undamped ? 1 : 0;
    if (run.undamped) rep.flags.push_back("f_b * nu >= 1: zero or negative damping");
    std::vector<double> series;
    for (const auto& st : run.mean.states) series.push_back(st.x[0] - s.center[0]);
    const Regime discrete = classify_regime(series);
    dg["discrete_regime"] = to_string(discrete);
    double worst = 0.0;
    for (const auto& st : run.second_difference)
        worst = std::max(worst, (st.realized - (st.field_term + st.noise_term + st.damping_term)).cwiseAbs().maxCoeff());
    dg["second_difference_residual"] = worst;
    if (fbnu > 0.0) {
        const double g = gamma_equivalent(pop.f_b, pop.nu);
        const double a = pnum(s.params, "a");
        // Continuous analogue with the factors of the second-difference form and time t' = τ t.
        const double tau = s.time_rescale;
        const double stiffness = pop.f_a * a / fbnu / (tau * tau);
        const double gamma = g / tau;
        const Regime cont = continuous_regime(stiffness, gamma, tau * static_cast<double>(s.steps));
        dg["gamma_equivalent"] = g;
        dg["continuous_stiffness"] = stiffness;
        dg["continuous_gamma"] = gamma;
        dg["continuous_regime"] = to_string(cont);
        dg["regime_match"] = cont == discrete ? 1 : 0;
    }
}

}  // namespace detail

/// Diagnostics and expectation checks for an existing path (simulated or loaded).
[[nodiscard]] inline RunReport diagnose_run(const Scenario& s, Trajectory trajectory,
                                            std::optional<PopulationRun> population = std::nullopt) {
    RunReport rep;
    rep.scenario = s.name;
    rep.params = s.params;
    rep.trajectory = std::move(trajectory);
    rep.population = std::move(population);
    if (s.population) {
        detail::require(rep.population.has_value(), ErrorKind::InvalidArgument,
                        "population scenario needs the group paths");
        detail::population_diagnostics(s, rep);
    } else {
        detail::require(rep.trajectory.dim() == s.field->dim(), ErrorKind::DimensionMismatch,
                        "trajectory dimension differs from scenario field");
        detail::continuous_diagnostics(s, rep);
        if (s.name == "substitutable_subspace") detail::substitutable_diagnostics(s, rep);
        if (s.name == "degenerate_manifold") detail::degenerate_diagnostics(s, rep);
        if (s.name == "biased_expectations") detail::biased_diagnostics(s, rep);
        if (s.name == "custom" && !s.subspace.empty()) {
            try {
                const auto fit = fit_decay_rate(detail::prefix_until_clamp(rep.trajectory), s.subspace, s.center);
                rep.diagnostics["decay_rate"] = fit.rate;
            } catch (const Error& e) {
                rep.diagnostics["decay_fit_error"] = e.what();
            }
        }
    }
    for (const auto& e : s.expectations) {
        rep.results.push_back(evaluate_expectation(e, rep.diagnostics));
        rep.passed = rep.passed && rep.results.back().passed;
    }
    return rep;
}

/// Integrate (or step the population) and diagnose.
[[nodiscard]] inline std::pair<Trajectory, std::optional<PopulationRun>> simulate_scenario(const Scenario& s) {
    RunMetadata meta{s.name, s.noise.seed, ""};
    try {
        if (s.population) {
            auto run = simulate_population(*s.population, *s.field, s.steps, s.noise, meta);
            Trajectory mean = run.mean;
            return {std::move(mean), std::move(run)};
        }
        return {integrate_second_order(*s.field, s.damping, s.initial, s.dt, s.steps, s.noise, meta), std::nullopt};
    } catch (const Error& e) {
        throw Error(e.kind(), "scenario '" + s.name + "': integration failed: " + e.what());
    }
}

[[nodiscard]] inline RunReport run_scenario(const Scenario& s) {
    auto [tr, pop] = simulate_scenario(s);
    return diagnose_run(s, std::move(tr), std::move(pop));
}

struct ThresholdEstimate {
    double lower = 0.0;  // largest c seen without circulation
    double upper = 0.0;  // smallest c seen with circulation
    int evaluations = 0;
    [[nodiscard]] double estimate() const { return 0.5 * (lower + upper); }
};

/// Bisection on the rotation strength c of rotational_well for fixed γ:
/// the smallest c whose run classifies as circulation.
[[nodiscard]] inline ThresholdEstimate measure_circulation_threshold(double gamma, double c_lo, double c_hi,
                                                                     int iterations, Json overrides = Json::object()) {
    auto circulates = [&](double c) {
        overrides["gamma"] = gamma;
        overrides["c"] = c;
        const auto s = build_scenario("rotational_well", overrides);
        auto [tr, pop] = simulate_scenario(s);
        return classify_asymptotics(tr, *s.field, s.thresholds).kind == VerdictKind::Circulation;
    };
    ThresholdEstimate t{c_lo, c_hi, 2};
    detail::require(!circulates(c_lo) && circulates(c_hi), ErrorKind::InvalidArgument,
                    "threshold bracket must straddle the onset of circulation");
    for (int i = 0; i < iterations; ++i) {
        const double mid = t.estimate();
        ++t.evaluations;
        (circulates(mid) ? t.upper : t.lower) = mid;
    }
    return t;
}

[[nodiscard]] inline Json report_to_json(const RunReport& r) {
    Json res = Json::array();
    for (const auto& x : r.results) {
        Json e = {{"diagnostic", x.expectation.diagnostic}, {"predicate", x.expectation.predicate},
                  {"value", x.expectation.value}, {"tolerance", x.expectation.tolerance},
                  {"observed", x.observed}, {"passed", x.passed}};
        if (!x.note.empty()) e["note"] = x.note;
        res.push_back(std::move(e));
    }
    return {{"scenario", r.scenario}, {"params", r.params}, {"diagnostics", r.diagnostics},
            {"expectations", res}, {"flags", r.flags}, {"passed", r.passed}};
}

}  // namespace pqdyn
