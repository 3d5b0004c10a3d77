#pragma once

// FieldSpec <-> JSON. Schema: docs/field-schema.md.

#include <memory>
#include <string>
#include <tuple>

#include "pqdyn/field.hpp"
#include "pqdyn/json_util.hpp"

namespace pqdyn {

namespace detail {

using json_util::Json;

inline Polynomial polynomial_from_json(const Json& j, const std::string& path) {
    Polynomial p;
    if (j.is_number()) {
        p.constant = j.get<double>();
        return p;
    }
    if (!j.is_object()) json_util::fail(path, "expected a number or polynomial object");
    if (j.contains("constant")) p.constant = json_util::number(j["constant"], path + ".constant");
    if (j.contains("monomials")) {
        const auto& ms = j["monomials"];
        if (!ms.is_array()) json_util::fail(path + ".monomials", "expected an array");
        for (std::size_t k = 0; k < ms.size(); ++k) {
            const auto mp = path + ".monomials[" + std::to_string(k) + "]";
            Monomial m;
            m.coef = json_util::number(json_util::at(ms[k], "coef", mp), mp + ".coef");
            m.powers = json_util::int_list(json_util::at(ms[k], "powers", mp), mp + ".powers");
            p.monomials.push_back(std::move(m));
        }
    }
    return p;
}

inline Json polynomial_to_json(const Polynomial& p) {
    Json ms = Json::array();
    for (const auto& m : p.monomials) ms.push_back({{"coef", m.coef}, {"powers", m.powers}});
    return {{"constant", p.constant}, {"monomials", ms}};
}

inline std::vector<Polynomial> polynomial_list(const Json& j, const std::string& path) {
    if (!j.is_array()) json_util::fail(path, "expected an array");
    std::vector<Polynomial> out;
    for (std::size_t k = 0; k < j.size(); ++k)
        out.push_back(polynomial_from_json(j[k], path + "[" + std::to_string(k) + "]"));
    return out;
}

inline Vector center_or_zero(const Json& j, Eigen::Index dim, const std::string& path) {
    if (!j.contains("center")) return Vector::Zero(dim);
    return json_util::vector(j["center"], path + ".center");
}

inline std::pair<int, int> plane_from_json(const Json& j, const std::string& path) {
    if (!j.contains("plane")) return {0, 1};
    const auto ax = json_util::int_list(j["plane"], path + ".plane");
    if (ax.size() != 2) json_util::fail(path + ".plane", "expected two axis indices");
    return {ax[0], ax[1]};
}

}  // namespace detail

inline FieldSpec field_from_json(const json_util::Json& j, const std::string& path = "field");

inline FieldTerm term_from_json(const json_util::Json& j, Eigen::Index dim, const std::string& path) {
    using json_util::at;
    using json_util::number;
    const auto type = json_util::string(at(j, "type", path), path + ".type");
    if (type == "quadratic_well") {
        const auto c = detail::center_or_zero(j, dim, path);
        const auto& k = at(j, "stiffness", path);
        if (k.is_number()) return quadratic_well(c, k.get<double>());
        return quadratic_well(c, json_util::vector(k, path + ".stiffness"));
    }
    if (type == "quadratic_form") {
        return QuadraticPotential{detail::center_or_zero(j, dim, path),
                                  json_util::matrix(at(j, "hessian", path), path + ".hessian")};
    }
    if (type == "double_well") {
        DoubleWell t;
        t.axis = json_util::integer(at(j, "axis", path), path + ".axis");
        t.center = detail::center_or_zero(j, dim, path);
        t.depth = number(at(j, "depth", path), path + ".depth");
        t.width = number(at(j, "width", path), path + ".width");
        return t;
    }
    if (type == "polynomial_potential") {
        return PolynomialPotential{detail::center_or_zero(j, dim, path),
                                   detail::polynomial_from_json(at(j, "potential", path),
                                                                path + ".potential")};
    }
    if (type == "substitutable_block") {
        SubstitutableBlock t;
        t.a = number(at(j, "a", path), path + ".a");
        t.b = number(at(j, "b", path), path + ".b");
        t.indices = json_util::int_list(at(j, "indices", path), path + ".indices");
        t.center = detail::center_or_zero(j, dim, path);
        return t;
    }
    if (type == "rotation") {
        Rotation t;
        std::tie(t.i, t.j) = detail::plane_from_json(j, path);
        t.center = detail::center_or_zero(j, dim, path);
        t.strength = number(at(j, "strength", path), path + ".strength");
        return t;
    }
    if (type == "vortex") {
        Vortex t;
        std::tie(t.i, t.j) = detail::plane_from_json(j, path);
        t.center = detail::center_or_zero(j, dim, path);
        t.strength = number(at(j, "strength", path), path + ".strength");
        t.radius = number(at(j, "radius", path), path + ".radius");
        return t;
    }
    if (type == "market") {
        MarketTerm t;
        t.kappa = json_util::vector(at(j, "kappa", path), path + ".kappa");
        t.eta = detail::polynomial_list(at(j, "eta", path), path + ".eta");
        t.pi = detail::polynomial_list(at(j, "pi", path), path + ".pi");
        return t;
    }
    if (type == "degenerate") {
        DegenerateTerm t;
        const auto& cs = at(j, "consumers", path);
        if (!cs.is_array()) json_util::fail(path + ".consumers", "expected an array");
        for (std::size_t k = 0; k < cs.size(); ++k) {
            const auto cp = path + ".consumers[" + std::to_string(k) + "]";
            AffineMapping m;
            m.weight = number(at(cs[k], "weight", cp), cp + ".weight");
            m.jacobian = json_util::matrix(at(cs[k], "matrix", cp), cp + ".matrix");
            m.offset = cs[k].contains("offset")
                           ? json_util::vector(cs[k]["offset"], cp + ".offset")
                           : Vector::Zero(m.jacobian.rows());
            t.consumers.push_back(std::move(m));
        }
        t.inner = std::make_shared<const FieldSpec>(field_from_json(at(j, "inner", path), path + ".inner"));
        return t;
    }
    json_util::fail(path + ".type", "unknown term type '" + type + "'");
}

inline FieldSpec field_from_json(const json_util::Json& j, const std::string& path) {
    const int dim = json_util::integer(json_util::at(j, "dim", path), path + ".dim");
    if (dim < 2 || dim % 2 != 0) json_util::fail(path + ".dim", "must be even and >= 2");
    std::optional<Box> box;
    if (j.contains("box")) {
        const auto& b = j["box"];
        box = Box{json_util::vector(json_util::at(b, "lower", path + ".box"), path + ".box.lower"),
                  json_util::vector(json_util::at(b, "upper", path + ".box"), path + ".box.upper")};
    }
    const auto& ts = json_util::at(j, "terms", path);
    if (!ts.is_array()) json_util::fail(path + ".terms", "expected an array");
    std::vector<FieldTerm> terms;
    for (std::size_t k = 0; k < ts.size(); ++k)
        terms.push_back(term_from_json(ts[k], dim, path + ".terms[" + std::to_string(k) + "]"));
    try {
        return FieldSpec(dim, std::move(terms), std::move(box));
    } catch (const Error& e) {
        json_util::fail(path, e.what());
    }
}

inline json_util::Json field_to_json(const FieldSpec& spec);

inline json_util::Json term_to_json(const FieldTerm& term) {
    using json_util::Json;
    using json_util::to_json;
    return std::visit(
        [](const auto& t) -> Json {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, QuadraticPotential>) {
                return {{"type", "quadratic_form"}, {"center", to_json(t.center)},
                        {"hessian", to_json(t.hessian)}};
            } else if constexpr (std::is_same_v<T, DoubleWell>) {
                return {{"type", "double_well"}, {"axis", t.axis}, {"center", to_json(t.center)},
                        {"depth", t.depth}, {"width", t.width}};
            } else if constexpr (std::is_same_v<T, PolynomialPotential>) {
                return {{"type", "polynomial_potential"}, {"center", to_json(t.center)},
                        {"potential", detail::polynomial_to_json(t.poly)}};
            } else if constexpr (std::is_same_v<T, SubstitutableBlock>) {
                return {{"type", "substitutable_block"}, {"a", t.a}, {"b", t.b},
                        {"indices", t.indices}, {"center", to_json(t.center)}};
            } else if constexpr (std::is_same_v<T, Rotation>) {
                return {{"type", "rotation"}, {"plane", {t.i, t.j}}, {"center", to_json(t.center)},
                        {"strength", t.strength}};
            } else if constexpr (std::is_same_v<T, Vortex>) {
                return {{"type", "vortex"}, {"plane", {t.i, t.j}}, {"center", to_json(t.center)},
                        {"strength", t.strength}, {"radius", t.radius}};
            } else if constexpr (std::is_same_v<T, MarketTerm>) {
                Json eta = Json::array(), pi = Json::array();
                for (const auto& p : t.eta) eta.push_back(detail::polynomial_to_json(p));
                for (const auto& p : t.pi) pi.push_back(detail::polynomial_to_json(p));
                return {{"type", "market"}, {"kappa", to_json(t.kappa)}, {"eta", eta}, {"pi", pi}};
            } else {
                Json cs = Json::array();
                for (const auto& c : t.consumers)
                    cs.push_back({{"weight", c.weight}, {"matrix", to_json(c.jacobian)},
                                  {"offset", to_json(c.offset)}});
                return {{"type", "degenerate"}, {"consumers", cs}, {"inner", field_to_json(*t.inner)}};
            }
        },
        term);
}

inline json_util::Json field_to_json(const FieldSpec& spec) {
    json_util::Json terms = json_util::Json::array();
    for (const auto& t : spec.terms()) terms.push_back(term_to_json(t));
    return {{"dim", spec.dim()},
            {"box", {{"lower", json_util::to_json(spec.box().lower)},
                     {"upper", json_util::to_json(spec.box().upper)}}},
            {"terms", terms}};
}

}  // namespace pqdyn
