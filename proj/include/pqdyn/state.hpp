#pragma once

#include <Eigen/Core>

#include <cmath>
#include <string>

#include "pqdyn/error.hpp"

namespace pqdyn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

[[nodiscard]] inline bool all_finite(const Vector& v) noexcept {
    return v.allFinite();
}

/// Combined price-quantity point x = (p, λ⁻¹q). Every entry carries price units;
/// the dimension D = 2n is even.
class StateVector {
public:
    explicit StateVector(Vector entries) : entries_(std::move(entries)) {
        detail::require(entries_.size() >= 2 && entries_.size() % 2 == 0,
                        ErrorKind::DimensionMismatch,
                        "state dimension must be even and >= 2, got " +
                            std::to_string(entries_.size()));
        detail::require(all_finite(entries_), ErrorKind::NonFinite,
                        "state has non-finite entries");
    }

    [[nodiscard]] const Vector& entries() const noexcept { return entries_; }
    [[nodiscard]] Eigen::Index dim() const noexcept { return entries_.size(); }
    [[nodiscard]] Eigen::Index commodities() const noexcept { return entries_.size() / 2; }
    [[nodiscard]] auto prices() const { return entries_.head(commodities()); }
    [[nodiscard]] auto scaled_quantities() const { return entries_.tail(commodities()); }
    [[nodiscard]] double operator[](Eigen::Index i) const { return entries_[i]; }

private:
    Vector entries_;
};

struct PriceQuantity {
    Vector p;
    Vector q;
};

inline void check_lambda(const Vector& lambda, Eigen::Index n) {
    detail::require(lambda.size() == n, ErrorKind::DimensionMismatch,
                    "lambda must have one entry per commodity");
    for (Eigen::Index i = 0; i < n; ++i)
        detail::require(lambda[i] > 0.0 && std::isfinite(lambda[i]),
                        ErrorKind::InvalidArgument,
                        "lambda entry " + std::to_string(i) + " must be > 0");
}

/// Pack (p, q) into x = (p, λ⁻¹q); λ is the diagonal of the quantity-adjustment matrix.
[[nodiscard]] inline StateVector encode_state(const Vector& p, const Vector& q,
                                              const Vector& lambda) {
    detail::require(p.size() == q.size(), ErrorKind::DimensionMismatch,
                    "price and quantity vectors differ in length");
    detail::require(p.size() >= 1, ErrorKind::DimensionMismatch, "need at least one commodity");
    check_lambda(lambda, p.size());
    Vector x(2 * p.size());
    x.head(p.size()) = p;
    x.tail(p.size()) = q.array() / lambda.array();
    return StateVector(std::move(x));
}

[[nodiscard]] inline PriceQuantity decode_state(const StateVector& x, const Vector& lambda) {
    check_lambda(lambda, x.commodities());
    return {x.prices(), x.scaled_quantities().array() * lambda.array()};
}

/// Axis-aligned bounding box standing in for the compact state space.
struct Box {
    Vector lower;
    Vector upper;

    [[nodiscard]] static Box cube(Eigen::Index dim, double half_width) {
        return {Vector::Constant(dim, -half_width), Vector::Constant(dim, half_width)};
    }
    [[nodiscard]] static Box around(const Vector& center, double half_width) {
        return {center.array() - half_width, center.array() + half_width};
    }

    [[nodiscard]] Eigen::Index dim() const noexcept { return lower.size(); }

    void validate() const {
        detail::require(lower.size() == upper.size(), ErrorKind::DimensionMismatch,
                        "box corners differ in dimension");
        for (Eigen::Index i = 0; i < lower.size(); ++i)
            detail::require(upper[i] > lower[i], ErrorKind::InvalidArgument,
                            "box upper must exceed lower on axis " + std::to_string(i));
    }

    [[nodiscard]] bool contains(const Vector& x) const {
        return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
    }

    /// Clamp in place; returns true when any coordinate moved.
    bool clamp(Vector& x) const {
        bool moved = false;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            if (x[i] < lower[i]) { x[i] = lower[i]; moved = true; }
            else if (x[i] > upper[i]) { x[i] = upper[i]; moved = true; }
        }
        return moved;
    }
};

}  // namespace pqdyn
