#pragma once

// Excess demand and price deviation fields ξ(x) built from parameterized
// families: gradient wells, divergence-free rotations, the (κη, π) market
// form, substitutable blocks, and degenerate consumer mappings.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "pqdyn/error.hpp"
#include "pqdyn/state.hpp"

namespace pqdyn {

class FieldSpec;

/// coef · Π δ_k^{powers[k]}
struct Monomial {
    double coef = 0.0;
    std::vector<int> powers;
};

/// Polynomial in D variables: constant + Σ monomials.
struct Polynomial {
    double constant = 0.0;
    std::vector<Monomial> monomials;

    [[nodiscard]] double value(const Vector& z) const {
        double s = constant;
        for (const auto& m : monomials) {
            double t = m.coef;
            for (std::size_t k = 0; k < m.powers.size(); ++k)
                if (m.powers[k] != 0) t *= std::pow(z[static_cast<Eigen::Index>(k)], m.powers[k]);
            s += t;
        }
        return s;
    }

    [[nodiscard]] Vector gradient(const Vector& z) const {
        Vector g = Vector::Zero(z.size());
        for (const auto& m : monomials) {
            for (std::size_t d = 0; d < m.powers.size(); ++d) {
                if (m.powers[d] == 0) continue;
                double t = m.coef * m.powers[d];
                for (std::size_t k = 0; k < m.powers.size(); ++k) {
                    const int p = (k == d) ? m.powers[k] - 1 : m.powers[k];
                    if (p != 0) t *= std::pow(z[static_cast<Eigen::Index>(k)], p);
                }
                g[static_cast<Eigen::Index>(d)] += t;
            }
        }
        return g;
    }
};

// ---------------------------------------------------------------------------
// Gradient families (ξ = -∇φ)
// ---------------------------------------------------------------------------

/// φ = ½ δᵀ H δ with δ = x - center, H symmetric.
struct QuadraticPotential {
    Vector center;
    Matrix hessian;
};

/// φ = depth · ((δ_axis / width)² - 1)², a double well along one axis.
struct DoubleWell {
    int axis = 0;
    Vector center;
    double depth = 1.0;
    double width = 1.0;
};

/// φ = P(x - center) for a user-supplied polynomial P.
struct PolynomialPotential {
    Vector center;
    Polynomial poly;
};

/// Substitutable commodities Σ: Jacobian -a on the diagonal and +b off it,
/// potential ½a Σ δ² - b Σ_{i<j} δ_i δ_j over Σ, zero elsewhere.
struct SubstitutableBlock {
    double a = 1.0;
    double b = 0.0;
    std::vector<int> indices;
    Vector center;
};

// ---------------------------------------------------------------------------
// Divergence-free families
// ---------------------------------------------------------------------------

/// Rigid rotation in the (i, j) plane: ξ_i = -c δ_j, ξ_j = c δ_i.
struct Rotation {
    int i = 0;
    int j = 1;
    Vector center;
    double strength = 1.0;
};

/// Rotation with a Gaussian profile c·exp(-r²/2σ²) in the (i, j) plane.
struct Vortex {
    int i = 0;
    int j = 1;
    Vector center;
    double strength = 1.0;
    double radius = 1.0;
};

// ---------------------------------------------------------------------------
// General families
// ---------------------------------------------------------------------------

/// ξ = (κ η(x), π(x)) with κ diagonal (n entries) and η, π polynomial maps R^D → R^n.
struct MarketTerm {
    Vector kappa;
    std::vector<Polynomial> eta;
    std::vector<Polynomial> pi;
};

/// y = M x + offset for one consumer class.
struct AffineMapping {
    double weight = 1.0;
    Matrix jacobian;  // 2m × D, ∂y_j/∂x_i stored as (j, i)
    Vector offset;
};

/// ξ_i(x) = Σ_c w_c Σ_j (∂y_j/∂x_i) χ_j(y_c(x)).
struct DegenerateTerm {
    std::vector<AffineMapping> consumers;
    std::shared_ptr<const FieldSpec> inner;
};

using FieldTerm = std::variant<QuadraticPotential, DoubleWell, PolynomialPotential,
                               SubstitutableBlock, Rotation, Vortex, MarketTerm,
                               DegenerateTerm>;

enum class TermKind { Gradient, Solenoidal, General };

[[nodiscard]] inline TermKind term_kind(const FieldTerm& term);

inline constexpr double kDefaultBoxHalfWidth = 1e6;

/// Immutable description of ξ over a bounded box in R^D.
class FieldSpec {
public:
    FieldSpec(Eigen::Index dim, std::vector<FieldTerm> terms, std::optional<Box> box = std::nullopt);

    [[nodiscard]] Eigen::Index dim() const noexcept { return dim_; }
    [[nodiscard]] const std::vector<FieldTerm>& terms() const noexcept { return terms_; }
    [[nodiscard]] const Box& box() const noexcept { return box_; }

    /// ξ(x). Throws outside the box or on non-finite output.
    [[nodiscard]] Vector eval(const Vector& x) const;

    /// True when every term is a gradient or a divergence-free family, so φ and α are known.
    [[nodiscard]] bool has_analytic_decomposition() const;
    /// True when every term is a gradient family.
    [[nodiscard]] bool is_pure_gradient() const;

    /// Scalar potential φ of the gradient terms (additive constant fixed by each family).
    [[nodiscard]] double potential(const Vector& x) const;
    /// Sum of the gradient terms, -∇φ.
    [[nodiscard]] Vector gradient_part(const Vector& x) const;
    /// Sum of the divergence-free terms, α.
    [[nodiscard]] Vector solenoidal_part(const Vector& x) const;

private:
    void check_point(const Vector& x) const;

    Eigen::Index dim_;
    std::vector<FieldTerm> terms_;
    Box box_;
};

// ---------------------------------------------------------------------------
// Term evaluation
// ---------------------------------------------------------------------------

namespace detail {

inline Vector eval_term(const QuadraticPotential& t, const Vector& x) {
    return -(t.hessian * (x - t.center));
}
inline double potential_term(const QuadraticPotential& t, const Vector& x) {
    const Vector d = x - t.center;
    return 0.5 * d.dot(t.hessian * d);
}

inline Vector eval_term(const DoubleWell& t, const Vector& x) {
    Vector out = Vector::Zero(x.size());
    const double s = (x[t.axis] - t.center[t.axis]) / t.width;
    out[t.axis] = -4.0 * t.depth * s * (s * s - 1.0) / t.width;
    return out;
}
inline double potential_term(const DoubleWell& t, const Vector& x) {
    const double s = (x[t.axis] - t.center[t.axis]) / t.width;
    return t.depth * (s * s - 1.0) * (s * s - 1.0);
}

inline Vector eval_term(const PolynomialPotential& t, const Vector& x) {
    return -t.poly.gradient(x - t.center);
}
inline double potential_term(const PolynomialPotential& t, const Vector& x) {
    return t.poly.value(x - t.center);
}

inline Vector eval_term(const SubstitutableBlock& t, const Vector& x) {
    Vector out = Vector::Zero(x.size());
    double sum = 0.0;
    for (int i : t.indices) sum += x[i] - t.center[i];
    for (int i : t.indices) {
        const double d = x[i] - t.center[i];
        out[i] = -t.a * d + t.b * (sum - d);
    }
    return out;
}
inline double potential_term(const SubstitutableBlock& t, const Vector& x) {
    double sq = 0.0;
    double sum = 0.0;
    for (int i : t.indices) {
        const double d = x[i] - t.center[i];
        sq += d * d;
        sum += d;
    }
    // Σ_{i<j} δ_i δ_j = ½((Σδ)² - Σδ²)
    return 0.5 * t.a * sq - t.b * 0.5 * (sum * sum - sq);
}

inline Vector eval_term(const Rotation& t, const Vector& x) {
    Vector out = Vector::Zero(x.size());
    out[t.i] = -t.strength * (x[t.j] - t.center[t.j]);
    out[t.j] = t.strength * (x[t.i] - t.center[t.i]);
    return out;
}

inline Vector eval_term(const Vortex& t, const Vector& x) {
    Vector out = Vector::Zero(x.size());
    const double di = x[t.i] - t.center[t.i];
    const double dj = x[t.j] - t.center[t.j];
    const double g =
        t.strength * std::exp(-(di * di + dj * dj) / (2.0 * t.radius * t.radius));
    out[t.i] = -g * dj;
    out[t.j] = g * di;
    return out;
}

inline Vector eval_term(const MarketTerm& t, const Vector& x) {
    const auto n = t.kappa.size();
    Vector out(2 * n);
    for (Eigen::Index k = 0; k < n; ++k) {
        out[k] = t.kappa[k] * t.eta[static_cast<std::size_t>(k)].value(x);
        out[n + k] = t.pi[static_cast<std::size_t>(k)].value(x);
    }
    return out;
}

inline Vector eval_term(const DegenerateTerm& t, const Vector& x);
inline double potential_term(const DegenerateTerm& t, const Vector& x);

template <class T>
concept HasPotential = requires(const T& t, const Vector& x) {
    { potential_term(t, x) } -> std::convertible_to<double>;
};

inline Vector eval_any(const FieldTerm& term, const Vector& x) {
    return std::visit([&](const auto& t) -> Vector { return eval_term(t, x); }, term);
}

inline void check_center(const Vector& c, Eigen::Index dim, const char* what) {
    require(c.size() == dim, ErrorKind::DimensionMismatch,
            std::string(what) + ": center has dimension " + std::to_string(c.size()) +
                ", field has " + std::to_string(dim));
    require(all_finite(c), ErrorKind::NonFinite, std::string(what) + ": non-finite center");
}

inline void check_axis(int axis, Eigen::Index dim, const char* what) {
    require(axis >= 0 && axis < dim, ErrorKind::InvalidArgument,
            std::string(what) + ": axis " + std::to_string(axis) + " out of range");
}

inline void check_polynomial(const Polynomial& p, Eigen::Index dim, const char* what) {
    for (const auto& m : p.monomials) {
        require(static_cast<Eigen::Index>(m.powers.size()) == dim, ErrorKind::DimensionMismatch,
                std::string(what) + ": monomial powers must have one entry per coordinate");
        for (int pw : m.powers)
            require(pw >= 0, ErrorKind::InvalidArgument,
                    std::string(what) + ": negative monomial power");
    }
}

inline void validate_term(const QuadraticPotential& t, Eigen::Index dim) {
    check_center(t.center, dim, "quadratic");
    require(t.hessian.rows() == dim && t.hessian.cols() == dim, ErrorKind::DimensionMismatch,
            "quadratic: hessian must be D x D");
    const double scale = std::max(1.0, t.hessian.cwiseAbs().maxCoeff());
    require((t.hessian - t.hessian.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale,
            ErrorKind::InvalidArgument, "quadratic: hessian must be symmetric");
}
inline void validate_term(const DoubleWell& t, Eigen::Index dim) {
    check_center(t.center, dim, "double_well");
    check_axis(t.axis, dim, "double_well");
    require(t.width > 0.0, ErrorKind::InvalidArgument, "double_well: width must be > 0");
}
inline void validate_term(const PolynomialPotential& t, Eigen::Index dim) {
    check_center(t.center, dim, "polynomial_potential");
    check_polynomial(t.poly, dim, "polynomial_potential");
}
inline void validate_term(const SubstitutableBlock& t, Eigen::Index dim) {
    check_center(t.center, dim, "substitutable_block");
    require(t.a > 0.0, ErrorKind::InvalidArgument, "substitutable_block: a must be > 0");
    require(t.indices.size() >= 2, ErrorKind::InvalidArgument,
            "substitutable_block: needs at least two commodities");
    std::set<int> seen;
    for (int i : t.indices) {
        check_axis(i, dim, "substitutable_block");
        require(seen.insert(i).second, ErrorKind::InvalidArgument,
                "substitutable_block: repeated index");
    }
}
inline void validate_plane(int i, int j, Eigen::Index dim, const char* what) {
    check_axis(i, dim, what);
    check_axis(j, dim, what);
    require(i != j, ErrorKind::InvalidArgument, std::string(what) + ": plane axes must differ");
}
inline void validate_term(const Rotation& t, Eigen::Index dim) {
    check_center(t.center, dim, "rotation");
    validate_plane(t.i, t.j, dim, "rotation");
}
inline void validate_term(const Vortex& t, Eigen::Index dim) {
    check_center(t.center, dim, "vortex");
    validate_plane(t.i, t.j, dim, "vortex");
    require(t.radius > 0.0, ErrorKind::InvalidArgument, "vortex: radius must be > 0");
}
inline void validate_term(const MarketTerm& t, Eigen::Index dim) {
    const auto n = t.kappa.size();
    require(2 * n == dim, ErrorKind::DimensionMismatch, "market: kappa must have D/2 entries");
    for (Eigen::Index k = 0; k < n; ++k)
        require(t.kappa[k] > 0.0, ErrorKind::InvalidArgument,
                "market: kappa must be a diagonal matrix with all positive elements");
    require(static_cast<Eigen::Index>(t.eta.size()) == n &&
                static_cast<Eigen::Index>(t.pi.size()) == n,
            ErrorKind::DimensionMismatch, "market: eta and pi need one component per commodity");
    for (const auto& p : t.eta) check_polynomial(p, dim, "market.eta");
    for (const auto& p : t.pi) check_polynomial(p, dim, "market.pi");
}
inline void validate_term(const DegenerateTerm& t, Eigen::Index dim);

}  // namespace detail

inline TermKind term_kind(const FieldTerm& term) {
    return std::visit(
        [](const auto& t) -> TermKind {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, Rotation> || std::is_same_v<T, Vortex>) {
                return TermKind::Solenoidal;
            } else if constexpr (std::is_same_v<T, MarketTerm>) {
                return TermKind::General;
            } else if constexpr (std::is_same_v<T, DegenerateTerm>) {
                return t.inner->is_pure_gradient() ? TermKind::Gradient : TermKind::General;
            } else {
                return TermKind::Gradient;
            }
        },
        term);
}

// ---------------------------------------------------------------------------
// FieldSpec
// ---------------------------------------------------------------------------

inline FieldSpec::FieldSpec(Eigen::Index dim, std::vector<FieldTerm> terms, std::optional<Box> box)
    : dim_(dim), terms_(std::move(terms)),
      box_(box ? *box : Box::cube(dim, kDefaultBoxHalfWidth)) {
    detail::require(dim_ >= 2 && dim_ % 2 == 0, ErrorKind::DimensionMismatch,
                    "field dimension must be even and >= 2");
    detail::require(box_.dim() == dim_, ErrorKind::DimensionMismatch,
                    "domain box dimension differs from field dimension");
    box_.validate();
    for (const auto& t : terms_)
        std::visit([&](const auto& term) { detail::validate_term(term, dim_); }, t);
}

inline void FieldSpec::check_point(const Vector& x) const {
    detail::require(x.size() == dim_, ErrorKind::DimensionMismatch,
                    "point has dimension " + std::to_string(x.size()) + ", field expects " +
                        std::to_string(dim_));
    detail::require(box_.contains(x), ErrorKind::OutsideDomain,
                    "point lies outside the field's domain box");
}

inline Vector FieldSpec::eval(const Vector& x) const {
    check_point(x);
    Vector out = Vector::Zero(dim_);
    for (const auto& t : terms_) out += detail::eval_any(t, x);
    detail::require(all_finite(out), ErrorKind::NonFinite, "field evaluation is not finite");
    return out;
}

inline bool FieldSpec::has_analytic_decomposition() const {
    return std::none_of(terms_.begin(), terms_.end(),
                        [](const FieldTerm& t) { return term_kind(t) == TermKind::General; });
}

inline bool FieldSpec::is_pure_gradient() const {
    return std::all_of(terms_.begin(), terms_.end(),
                       [](const FieldTerm& t) { return term_kind(t) == TermKind::Gradient; });
}

inline double FieldSpec::potential(const Vector& x) const {
    detail::require(has_analytic_decomposition(), ErrorKind::InvalidArgument,
                    "field has no analytic decomposition");
    check_point(x);
    double phi = 0.0;
    for (const auto& t : terms_) {
        if (term_kind(t) != TermKind::Gradient) continue;
        phi += std::visit(
            [&](const auto& term) -> double {
                if constexpr (detail::HasPotential<std::decay_t<decltype(term)>>)
                    return detail::potential_term(term, x);
                else
                    return 0.0;
            },
            t);
    }
    return phi;
}

inline Vector FieldSpec::gradient_part(const Vector& x) const {
    detail::require(has_analytic_decomposition(), ErrorKind::InvalidArgument,
                    "field has no analytic decomposition");
    check_point(x);
    Vector out = Vector::Zero(dim_);
    for (const auto& t : terms_)
        if (term_kind(t) == TermKind::Gradient) out += detail::eval_any(t, x);
    return out;
}

inline Vector FieldSpec::solenoidal_part(const Vector& x) const {
    detail::require(has_analytic_decomposition(), ErrorKind::InvalidArgument,
                    "field has no analytic decomposition");
    check_point(x);
    Vector out = Vector::Zero(dim_);
    for (const auto& t : terms_)
        if (term_kind(t) == TermKind::Solenoidal) out += detail::eval_any(t, x);
    return out;
}

namespace detail {

inline Vector eval_term(const DegenerateTerm& t, const Vector& x) {
    Vector out = Vector::Zero(x.size());
    for (const auto& c : t.consumers) {
        const Vector y = c.jacobian * x + c.offset;
        out += c.weight * (c.jacobian.transpose() * t.inner->eval(y));
    }
    return out;
}

inline double potential_term(const DegenerateTerm& t, const Vector& x) {
    double phi = 0.0;
    for (const auto& c : t.consumers) phi += c.weight * t.inner->potential(c.jacobian * x + c.offset);
    return phi;
}

inline void validate_term(const DegenerateTerm& t, Eigen::Index dim) {
    require(t.inner != nullptr, ErrorKind::InvalidArgument, "degenerate: missing internal field");
    require(!t.consumers.empty(), ErrorKind::InvalidArgument, "degenerate: no consumers");
    const auto inner_dim = t.inner->dim();
    require(inner_dim < dim, ErrorKind::DimensionMismatch,
            "degenerate: internal dimension 2m must be below 2n");
    double wsum = 0.0;
    for (const auto& c : t.consumers) {
        require(c.weight >= 0.0, ErrorKind::InvalidArgument, "degenerate: negative consumer weight");
        require(c.jacobian.rows() == inner_dim && c.jacobian.cols() == dim,
                ErrorKind::DimensionMismatch, "degenerate: mapping Jacobian must be 2m x 2n");
        require(c.offset.size() == inner_dim, ErrorKind::DimensionMismatch,
                "degenerate: mapping offset must have 2m entries");
        wsum += c.weight;
    }
    require(std::abs(wsum - 1.0) <= 1e-12, ErrorKind::InvalidArgument,
            "degenerate: consumer weights must sum to 1");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

[[nodiscard]] inline Vector eval_field(const FieldSpec& spec, const StateVector& x) {
    return spec.eval(x.entries());
}

/// Default central-difference step: 1e-5 · max(1, |x|∞).
[[nodiscard]] inline double default_step(const Vector& x) {
    return 1e-5 * std::max(1.0, x.cwiseAbs().maxCoeff());
}

/// J(i, j) ≈ ∂_i ξ_j at `point`, by central differences with step h.
struct JacobianSample {
    Matrix matrix;
    Vector point;
    double h = 0.0;
};

[[nodiscard]] inline JacobianSample jacobian(const FieldSpec& spec, const Vector& x, double h) {
    detail::require(h > 0.0 && std::isfinite(h), ErrorKind::InvalidArgument,
                    "jacobian step must be > 0");
    const auto d = spec.dim();
    detail::require(x.size() == d, ErrorKind::DimensionMismatch, "jacobian: point dimension");
    Matrix J(d, d);
    Vector xp = x;
    for (Eigen::Index i = 0; i < d; ++i) {
        xp[i] = x[i] + h;
        const Vector fp = spec.eval(xp);
        xp[i] = x[i] - h;
        const Vector fm = spec.eval(xp);
        xp[i] = x[i];
        J.row(i) = ((fp - fm) / (2.0 * h)).transpose();
    }
    detail::require(J.allFinite(), ErrorKind::NonFinite, "jacobian has non-finite entries");
    return {std::move(J), x, h};
}

[[nodiscard]] inline JacobianSample jacobian(const FieldSpec& spec, const StateVector& x, double h) {
    return jacobian(spec, x.entries(), h);
}

/// Antisymmetric part ½(J - Jᵀ); entry (i, j) is ½(∂_i ξ_j - ∂_j ξ_i).
[[nodiscard]] inline Matrix antisymmetric_part(const JacobianSample& j) {
    return 0.5 * (j.matrix - j.matrix.transpose());
}

[[nodiscard]] inline Matrix curl_form(const FieldSpec& spec, const Vector& x, double h) {
    return antisymmetric_part(jacobian(spec, x, h));
}

[[nodiscard]] inline Matrix curl_form(const FieldSpec& spec, const StateVector& x, double h) {
    return curl_form(spec, x.entries(), h);
}

/// ∂_i ξ_j - ∂_j ξ_i at x from four evaluations (no full Jacobian).
[[nodiscard]] inline double plane_curl(const FieldSpec& spec, const Vector& x, int i, int j,
                                       double h) {
    Vector xp = x;
    xp[i] = x[i] + h;
    const double fj_p = spec.eval(xp)[j];
    xp[i] = x[i] - h;
    const double fj_m = spec.eval(xp)[j];
    xp[i] = x[i];
    xp[j] = x[j] + h;
    const double fi_p = spec.eval(xp)[i];
    xp[j] = x[j] - h;
    const double fi_m = spec.eval(xp)[i];
    return (fj_p - fj_m) / (2.0 * h) - (fi_p - fi_m) / (2.0 * h);
}

/// Finite-difference divergence of the divergence-free terms alone.
[[nodiscard]] inline double solenoidal_divergence(const FieldSpec& spec, const Vector& x, double h) {
    double div = 0.0;
    Vector xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        xp[i] = x[i] + h;
        const double fp = spec.solenoidal_part(xp)[i];
        xp[i] = x[i] - h;
        const double fm = spec.solenoidal_part(xp)[i];
        xp[i] = x[i];
        div += (fp - fm) / (2.0 * h);
    }
    return div;
}

// ---------------------------------------------------------------------------
// Structured constructors
// ---------------------------------------------------------------------------

[[nodiscard]] inline QuadraticPotential quadratic_well(const Vector& center, const Vector& stiffness) {
    return {center, stiffness.asDiagonal().toDenseMatrix()};
}

[[nodiscard]] inline QuadraticPotential quadratic_well(const Vector& center, double stiffness) {
    return quadratic_well(center, Vector::Constant(center.size(), stiffness));
}

/// Jacobian spectrum of a k-commodity substitutable block.
struct SubstitutableSpectrum {
    double symmetric_mode = 0.0;  // -(a - (k-1)b), eigenvector (1, …, 1)
    double contrast_mode = 0.0;   // -(a + b), multiplicity k - 1
    bool decaying = false;        // a > (k-1)b
};

[[nodiscard]] inline SubstitutableSpectrum analyze_substitutable(double a, double b, int k) {
    detail::require(k >= 2, ErrorKind::InvalidArgument, "substitutable block needs k >= 2");
    SubstitutableSpectrum s;
    s.symmetric_mode = -(a - (k - 1) * b);
    s.contrast_mode = -(a + b);
    s.decaying = a > (k - 1) * b;
    return s;
}

/// Linear substitutable field on Σ = {0, …, k-1} around x*.
[[nodiscard]] inline FieldSpec make_substitutable_field(double a, double b, int k,
                                                        const StateVector& center,
                                                        std::optional<Box> box = std::nullopt) {
    detail::require(a > 0.0, ErrorKind::InvalidArgument, "substitutable: a must be > 0");
    detail::require(k >= 2 && k <= center.dim(), ErrorKind::InvalidArgument,
                    "substitutable: need 2 <= k <= D");
    SubstitutableBlock block{a, b, {}, center.entries()};
    for (int i = 0; i < k; ++i) block.indices.push_back(i);
    return FieldSpec(center.dim(), {block}, std::move(box));
}

/// ξ_i(x) = Σ_c w_c Σ_j (∂y_j/∂x_i) χ_j(y_c(x)) over a finite consumer mixture.
[[nodiscard]] inline FieldSpec make_degenerate_field(std::vector<AffineMapping> mappings,
                                                     std::shared_ptr<const FieldSpec> inner,
                                                     std::optional<Box> box = std::nullopt) {
    detail::require(!mappings.empty(), ErrorKind::InvalidArgument, "degenerate: no consumers");
    const auto dim = mappings.front().jacobian.cols();
    return FieldSpec(dim, {DegenerateTerm{std::move(mappings), std::move(inner)}}, std::move(box));
}

}  // namespace pqdyn
