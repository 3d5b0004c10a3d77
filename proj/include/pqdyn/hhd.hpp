#pragma once

// Helmholtz-Hodge decomposition of a sampled vector field by the Green's
// function construction: ψ = G * v, φ = -∇·ψ, α = (∇² - ∇∇·)ψ, so that
// v = -∇φ + α with ∇·α = 0.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "pqdyn/error.hpp"
#include "pqdyn/fft.hpp"
#include "pqdyn/field.hpp"
#include "pqdyn/state.hpp"

namespace pqdyn::hhd {

namespace detail {
using pqdyn::detail::require;
}  // namespace detail

// ---------------------------------------------------------------------------
// Kernel
// ---------------------------------------------------------------------------

/// Surface area of the (D-1)-sphere of radius r: 2π^{D/2}/Γ(D/2) · r^{D-1}.
[[nodiscard]] inline double sphere_area(int dim, double r) {
    detail::require(dim >= 2, ErrorKind::InvalidArgument, "sphere_area: D must be >= 2");
    detail::require(r > 0.0, ErrorKind::InvalidArgument, "sphere_area: r must be > 0");
    const double d = dim;
    return 2.0 * std::pow(std::numbers::pi, d / 2.0) / std::tgamma(d / 2.0) * std::pow(r, d - 1.0);
}

/// Γ(D/2) / (2π^{D/2}(D-2)), the normalization of 1/R^{D-2} for D >= 3.
[[nodiscard]] inline double kernel_prefactor(int dim) {
    detail::require(dim >= 3, ErrorKind::InvalidArgument, "kernel prefactor needs D >= 3");
    const double d = dim;
    return std::tgamma(d / 2.0) / (2.0 * std::pow(std::numbers::pi, d / 2.0) * (d - 2.0));
}

struct KernelSample {
    double value = 0.0;
    double gradient_magnitude = 0.0;  // |dK/dR|; K decreases with R
};

/// K(R) such that ψ = -∫ K(|x - x'|) v(x') dx'. For D = 2 this is the
/// logarithmic kernel (1/2π) ln(1/R).
[[nodiscard]] inline KernelSample greens_kernel(int dim, double r) {
    detail::require(dim >= 2, ErrorKind::InvalidArgument, "greens_kernel: D must be >= 2");
    detail::require(r > 0.0 && std::isfinite(r), ErrorKind::InvalidArgument,
                    "greens_kernel: R must be > 0");
    if (dim == 2) {
        const double c = 1.0 / (2.0 * std::numbers::pi);
        return {c * std::log(1.0 / r), c / r};
    }
    const double a = kernel_prefactor(dim);
    const double d = dim;
    return {a / std::pow(r, d - 2.0), a * (d - 2.0) / std::pow(r, d - 1.0)};
}

[[nodiscard]] inline double kernel_value(int dim, double r) {
    if (dim == 2) return std::log(1.0 / r) / (2.0 * std::numbers::pi);
    return kernel_prefactor(dim) / std::pow(r, dim - 2.0);
}

/// Mean of K over a ball whose volume equals `cell_volume`, centred on the
/// singularity. Used for the quadrature cell that contains the target point.
[[nodiscard]] inline double singular_cell_kernel(int dim, double cell_volume) {
    const double d = dim;
    const double rho = std::pow(d * cell_volume / sphere_area(dim, 1.0), 1.0 / d);
    if (dim == 2) return (std::log(1.0 / rho) + 0.5) / (2.0 * std::numbers::pi);
    return kernel_prefactor(dim) * d / (2.0 * std::pow(rho, d - 2.0));
}

/// Max |∇²K| by central differences at the given points (each must satisfy |p| > 10h).
[[nodiscard]] inline double kernel_laplacian_test(int dim, const std::vector<Vector>& points,
                                                  double h) {
    detail::require(h > 0.0, ErrorKind::InvalidArgument, "kernel_laplacian_test: h must be > 0");
    double worst = 0.0;
    for (const auto& p : points) {
        detail::require(p.size() == dim, ErrorKind::DimensionMismatch,
                        "kernel_laplacian_test: point dimension");
        detail::require(p.norm() > 10.0 * h, ErrorKind::InvalidArgument,
                        "kernel_laplacian_test: sample point within 10h of the origin");
        const double k0 = kernel_value(dim, p.norm());
        double lap = 0.0;
        Vector q = p;
        for (int i = 0; i < dim; ++i) {
            q[i] = p[i] + h;
            const double kp = kernel_value(dim, q.norm());
            q[i] = p[i] - h;
            const double km = kernel_value(dim, q.norm());
            q[i] = p[i];
            lap += (kp - 2.0 * k0 + km) / (h * h);
        }
        worst = std::max(worst, std::abs(lap));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

inline constexpr std::size_t kDefaultPointBudget = std::size_t{1} << 22;
inline constexpr double kDefaultKernelBudget = 1e7;

/// Cell-centred grid on [lower, upper]: x_i = lower + (i + ½) h, h = (upper - lower)/N.
class GridDomain {
public:
    GridDomain(Vector lower, Vector upper, std::vector<int> points,
               std::size_t point_budget = kDefaultPointBudget)
        : lower_(std::move(lower)), upper_(std::move(upper)), points_(std::move(points)) {
        detail::require(lower_.size() == upper_.size() &&
                            static_cast<Eigen::Index>(points_.size()) == lower_.size(),
                        ErrorKind::DimensionMismatch, "grid: corner/resolution dimensions differ");
        detail::require(lower_.size() >= 2, ErrorKind::DimensionMismatch, "grid: D must be >= 2");
        total_ = 1;
        for (std::size_t d = 0; d < points_.size(); ++d) {
            const auto di = static_cast<Eigen::Index>(d);
            detail::require(upper_[di] > lower_[di], ErrorKind::InvalidArgument,
                            "grid: upper must exceed lower on every axis");
            detail::require(points_[d] >= 4, ErrorKind::InvalidArgument,
                            "grid: need at least 4 points per axis");
            total_ *= static_cast<std::size_t>(points_[d]);
            detail::require(total_ <= point_budget, ErrorKind::BudgetExceeded,
                            "grid: point count exceeds budget");
        }
        strides_.assign(points_.size(), 1);
        for (int d = static_cast<int>(points_.size()) - 2; d >= 0; --d)
            strides_[static_cast<std::size_t>(d)] =
                strides_[static_cast<std::size_t>(d) + 1] *
                static_cast<std::size_t>(points_[static_cast<std::size_t>(d) + 1]);
    }

    static GridDomain uniform(const Vector& lower, const Vector& upper, int per_axis) {
        return GridDomain(lower, upper, std::vector<int>(static_cast<std::size_t>(lower.size()), per_axis));
    }

    [[nodiscard]] int dim() const noexcept { return static_cast<int>(points_.size()); }
    [[nodiscard]] const Vector& lower() const noexcept { return lower_; }
    [[nodiscard]] const Vector& upper() const noexcept { return upper_; }
    [[nodiscard]] const std::vector<int>& points() const noexcept { return points_; }
    [[nodiscard]] std::size_t size() const noexcept { return total_; }
    [[nodiscard]] std::size_t stride(int axis) const { return strides_[static_cast<std::size_t>(axis)]; }

    [[nodiscard]] double spacing(int axis) const {
        const auto a = static_cast<Eigen::Index>(axis);
        return (upper_[a] - lower_[a]) / points_[static_cast<std::size_t>(axis)];
    }
    [[nodiscard]] double cell_volume() const {
        double v = 1.0;
        for (int d = 0; d < dim(); ++d) v *= spacing(d);
        return v;
    }
    [[nodiscard]] Vector center() const { return 0.5 * (lower_ + upper_); }
    [[nodiscard]] Vector half_width() const { return 0.5 * (upper_ - lower_); }

    [[nodiscard]] std::vector<int> unravel(std::size_t linear) const {
        std::vector<int> idx(points_.size());
        for (std::size_t d = 0; d < points_.size(); ++d) {
            idx[d] = static_cast<int>(linear / strides_[d]);
            linear %= strides_[d];
        }
        return idx;
    }

    [[nodiscard]] Vector coordinate(std::size_t linear) const {
        const auto idx = unravel(linear);
        Vector x(dim());
        for (int d = 0; d < dim(); ++d)
            x[d] = lower_[d] + (idx[static_cast<std::size_t>(d)] + 0.5) * spacing(d);
        return x;
    }

    [[nodiscard]] bool contains(const Vector& x) const {
        return (x.array() >= lower_.array()).all() && (x.array() <= upper_.array()).all();
    }

private:
    Vector lower_;
    Vector upper_;
    std::vector<int> points_;
    std::vector<std::size_t> strides_;
    std::size_t total_ = 0;
};

/// Samples on a GridDomain: one column per component, one row per grid point.
struct GridField {
    GridDomain domain;
    Matrix values;

    [[nodiscard]] int components() const noexcept { return static_cast<int>(values.cols()); }
};

[[nodiscard]] inline GridField sample_field(const FieldSpec& spec, const GridDomain& domain) {
    detail::require(spec.dim() == domain.dim(), ErrorKind::DimensionMismatch,
                    "sample_field: grid and field dimensions differ");
    Matrix values(static_cast<Eigen::Index>(domain.size()), domain.dim());
    for (std::size_t k = 0; k < domain.size(); ++k)
        values.row(static_cast<Eigen::Index>(k)) = spec.eval(domain.coordinate(k)).transpose();
    return {domain, std::move(values)};
}

/// Integration volume V inside the grid: the whole box, or the inscribed
/// ellipsoid (a ball when the box is a cube).
enum class Region { Box, Ball };
enum class Backend { Quadrature, Spectral };

[[nodiscard]] inline const char* to_string(Region r) { return r == Region::Box ? "box" : "ball"; }
[[nodiscard]] inline const char* to_string(Backend b) {
    return b == Backend::Quadrature ? "quadrature" : "spectral";
}

/// Normalized distance from the domain centre: sup-norm for Box, Euclidean for Ball.
[[nodiscard]] inline double region_radius(const GridDomain& g, Region region, const Vector& x) {
    const Vector u = ((x - g.center()).array() / g.half_width().array()).matrix();
    return region == Region::Box ? u.cwiseAbs().maxCoeff() : u.norm();
}

[[nodiscard]] inline std::vector<char> region_mask(const GridDomain& g, Region region) {
    std::vector<char> mask(g.size());
    for (std::size_t k = 0; k < g.size(); ++k)
        mask[k] = region_radius(g, region, g.coordinate(k)) <= 1.0 ? 1 : 0;
    return mask;
}

/// Points whose full α-divergence stencil is central and which lie within
/// `fraction` of the region's normalized radius.
[[nodiscard]] inline std::vector<char> interior_mask(const GridDomain& g, Region region,
                                                     double fraction) {
    std::vector<char> mask(g.size(), 0);
    for (std::size_t k = 0; k < g.size(); ++k) {
        const auto idx = g.unravel(k);
        bool inside = true;
        for (int d = 0; d < g.dim() && inside; ++d)
            inside = idx[static_cast<std::size_t>(d)] >= 3 &&
                     idx[static_cast<std::size_t>(d)] <= g.points()[static_cast<std::size_t>(d)] - 4;
        if (inside && region_radius(g, region, g.coordinate(k)) <= fraction) mask[k] = 1;
    }
    return mask;
}

// ---------------------------------------------------------------------------
// ψ by quadrature
// ---------------------------------------------------------------------------

/// ψ(x) = -Σ_cells K(|x - x'|) v(x') ΔV by the midpoint rule. The cell nearest
/// x uses the equal-volume ball average of K.
[[nodiscard]] inline Vector compute_psi(const GridField& v, const Vector& x,
                                        Region region = Region::Box) {
    const auto& g = v.domain;
    detail::require(x.size() == g.dim(), ErrorKind::DimensionMismatch, "compute_psi: point dimension");
    detail::require(g.contains(x), ErrorKind::OutsideDomain, "compute_psi: point outside grid domain");
    const int dim = g.dim();
    const double vol = g.cell_volume();

    std::size_t nearest = 0;
    for (int d = 0; d < dim; ++d) {
        int i = static_cast<int>(std::floor((x[d] - g.lower()[d]) / g.spacing(d)));
        i = std::clamp(i, 0, g.points()[static_cast<std::size_t>(d)] - 1);
        nearest += static_cast<std::size_t>(i) * g.stride(d);
    }

    const auto mask = region == Region::Box ? std::vector<char>() : region_mask(g, region);
    Vector psi = Vector::Zero(v.components());
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (!mask.empty() && !mask[k]) continue;
        double kv;
        if (k == nearest) {
            kv = singular_cell_kernel(dim, vol);
        } else {
            const double r = (x - g.coordinate(k)).norm();
            kv = r > 0.0 ? kernel_value(dim, r) : singular_cell_kernel(dim, vol);
        }
        psi -= kv * vol * v.values.row(static_cast<Eigen::Index>(k)).transpose();
    }
    return psi;
}

namespace detail {

/// ψ at every grid point: the midpoint sum is a discrete convolution with the
/// kernel tabulated per grid offset, evaluated exactly with zero-padded FFTs.
inline Matrix psi_quadrature(const GridField& v, const std::vector<char>& mask,
                             double kernel_budget, double& kernel_evaluations) {
    const auto& g = v.domain;
    const int dim = g.dim();
    std::vector<int> padded(static_cast<std::size_t>(dim));
    double offsets = 1.0;
    for (int d = 0; d < dim; ++d) {
        padded[static_cast<std::size_t>(d)] = 2 * g.points()[static_cast<std::size_t>(d)];
        offsets *= 2.0 * g.points()[static_cast<std::size_t>(d)] - 1.0;
    }
    require(offsets <= kernel_budget, ErrorKind::BudgetExceeded,
            "decompose: quadrature needs " + std::to_string(static_cast<long long>(offsets)) +
                " kernel evaluations, budget is " +
                std::to_string(static_cast<long long>(kernel_budget)));
    kernel_evaluations = offsets;

    fft::RealTransform kernel_fft(padded);
    fft::RealTransform work(padded);
    const std::size_t total = kernel_fft.real_size();

    std::vector<std::size_t> pstride(static_cast<std::size_t>(dim), 1);
    for (int d = dim - 2; d >= 0; --d)
        pstride[static_cast<std::size_t>(d)] =
            pstride[static_cast<std::size_t>(d) + 1] * static_cast<std::size_t>(padded[static_cast<std::size_t>(d) + 1]);

    const double vol = g.cell_volume();
    const double k0 = singular_cell_kernel(dim, vol);
    double* kr = kernel_fft.real();
    for (std::size_t p = 0; p < total; ++p) {
        std::size_t rem = p;
        double r2 = 0.0;
        bool valid = true;
        for (int d = 0; d < dim; ++d) {
            const auto du = static_cast<std::size_t>(d);
            int i = static_cast<int>(rem / pstride[du]);
            rem %= pstride[du];
            const int n = g.points()[du];
            if (i == n) { valid = false; break; }  // unused wrap slot
            if (i > n) i -= padded[du];
            const double off = i * g.spacing(d);
            r2 += off * off;
        }
        kr[p] = !valid ? 0.0 : (r2 == 0.0 ? k0 : kernel_value(dim, std::sqrt(r2)));
    }
    kernel_fft.forward();

    Matrix psi(v.values.rows(), v.values.cols());
    const double scale = -vol / static_cast<double>(total);
    for (Eigen::Index c = 0; c < v.values.cols(); ++c) {
        double* wr = work.real();
        std::fill(wr, wr + total, 0.0);
        for (std::size_t k = 0; k < g.size(); ++k) {
            if (!mask.empty() && !mask[k]) continue;
            const auto idx = g.unravel(k);
            std::size_t p = 0;
            for (int d = 0; d < dim; ++d)
                p += static_cast<std::size_t>(idx[static_cast<std::size_t>(d)]) * pstride[static_cast<std::size_t>(d)];
            wr[p] = v.values(static_cast<Eigen::Index>(k), c);
        }
        work.forward();
        auto* ws = work.spectrum();
        const auto* ks = kernel_fft.spectrum();
        for (std::size_t s = 0; s < work.complex_size(); ++s) ws[s] *= ks[s];
        work.backward();
        for (std::size_t k = 0; k < g.size(); ++k) {
            const auto idx = g.unravel(k);
            std::size_t p = 0;
            for (int d = 0; d < dim; ++d)
                p += static_cast<std::size_t>(idx[static_cast<std::size_t>(d)]) * pstride[static_cast<std::size_t>(d)];
            psi(static_cast<Eigen::Index>(k), c) = scale * wr[p];
        }
    }
    return psi;
}

/// ψ solving ∇²ψ = v under periodic extension of the grid (zero mean mode dropped).
inline Matrix psi_spectral(const GridField& v) {
    const auto& g = v.domain;
    const int dim = g.dim();
    fft::RealTransform t(g.points());
    const std::size_t total = t.real_size();
    const auto last = static_cast<std::size_t>(dim - 1);
    const std::size_t half = static_cast<std::size_t>(g.points()[last]) / 2 + 1;

    std::vector<double> k2(t.complex_size());
    for (std::size_t s = 0; s < t.complex_size(); ++s) {
        std::size_t rem = s;
        double sum = 0.0;
        for (int d = dim - 1; d >= 0; --d) {
            const auto du = static_cast<std::size_t>(d);
            const std::size_t extent = du == last ? half : static_cast<std::size_t>(g.points()[du]);
            int m = static_cast<int>(rem % extent);
            rem /= extent;
            if (du != last && m > g.points()[du] / 2) m -= g.points()[du];
            const double kd = 2.0 * std::numbers::pi * m / (g.upper()[d] - g.lower()[d]);
            sum += kd * kd;
        }
        k2[s] = sum;
    }

    Matrix psi(v.values.rows(), v.values.cols());
    for (Eigen::Index c = 0; c < v.values.cols(); ++c) {
        std::copy(v.values.col(c).data(), v.values.col(c).data() + total, t.real());
        t.forward();
        auto* sp = t.spectrum();
        for (std::size_t s = 0; s < t.complex_size(); ++s)
            sp[s] = k2[s] > 0.0 ? -sp[s] / k2[s] : std::complex<double>(0.0, 0.0);
        t.backward();
        for (std::size_t k = 0; k < total; ++k)
            psi(static_cast<Eigen::Index>(k), c) = t.real()[k] / static_cast<double>(total);
    }
    return psi;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Finite differences on the grid
// ---------------------------------------------------------------------------

/// ∂f/∂x_axis: central in the interior, second-order one-sided at the edges.
[[nodiscard]] inline Eigen::VectorXd derivative(const GridDomain& g, const Eigen::VectorXd& f, int axis) {
    Eigen::VectorXd out(f.size());
    const double h = g.spacing(axis);
    const auto stride = static_cast<Eigen::Index>(g.stride(axis));
    const int n = g.points()[static_cast<std::size_t>(axis)];
    for (std::size_t k = 0; k < g.size(); ++k) {
        const auto i = static_cast<int>((k / g.stride(axis)) % static_cast<std::size_t>(n));
        const auto kk = static_cast<Eigen::Index>(k);
        if (i == 0)
            out[kk] = (-3.0 * f[kk] + 4.0 * f[kk + stride] - f[kk + 2 * stride]) / (2.0 * h);
        else if (i == n - 1)
            out[kk] = (3.0 * f[kk] - 4.0 * f[kk - stride] + f[kk - 2 * stride]) / (2.0 * h);
        else
            out[kk] = (f[kk + stride] - f[kk - stride]) / (2.0 * h);
    }
    return out;
}

[[nodiscard]] inline Eigen::VectorXd divergence(const GridDomain& g, const Matrix& vec) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(vec.rows());
    for (int d = 0; d < g.dim(); ++d) out += derivative(g, vec.col(d), d);
    return out;
}

[[nodiscard]] inline Matrix gradient(const GridDomain& g, const Eigen::VectorXd& f) {
    Matrix out(f.size(), g.dim());
    for (int d = 0; d < g.dim(); ++d) out.col(d) = derivative(g, f, d);
    return out;
}

/// Laplacian as div∘grad, so that it commutes with the discrete divergence.
[[nodiscard]] inline Matrix laplacian(const GridDomain& g, const Matrix& f) {
    Matrix out = Matrix::Zero(f.rows(), f.cols());
    for (Eigen::Index c = 0; c < f.cols(); ++c)
        for (int d = 0; d < g.dim(); ++d) out.col(c) += derivative(g, derivative(g, f.col(c), d), d);
    return out;
}

// ---------------------------------------------------------------------------
// Decomposition
// ---------------------------------------------------------------------------

struct DecomposeOptions {
    Backend backend = Backend::Quadrature;
    Region region = Region::Ball;
    double interior_fraction = 0.5;
    double kernel_budget = kDefaultKernelBudget;
};

struct DecompositionResult {
    GridField psi;
    GridField phi;
    GridField alpha;
    /// max‖∇²ψ - v‖ / max‖v‖ over interior points.
    double residual_poisson = 0.0;
    /// max|∇·α| · ℓ / max(max‖α‖, max‖v‖), ℓ the smallest half-width of the domain.
    double residual_div_alpha = 0.0;
    /// max‖v - (-∇φ + α)‖ / max‖v‖ over interior points.
    double residual_reconstruction = 0.0;
    std::vector<char> interior;
    std::size_t interior_count = 0;
    double kernel_evaluations = 0.0;
    DecomposeOptions options;
};

namespace detail {

inline double interior_max_norm(const Matrix& m, const std::vector<char>& interior) {
    double best = 0.0;
    for (std::size_t k = 0; k < interior.size(); ++k)
        if (interior[k]) best = std::max(best, m.row(static_cast<Eigen::Index>(k)).norm());
    return best;
}

}  // namespace detail

/// max‖∇²ψ - v‖ / max‖v‖ over the interior mask (0 when v vanishes there).
[[nodiscard]] inline double verify_poisson(const GridField& psi, const GridField& v,
                                           const std::vector<char>& interior) {
    detail::require(psi.values.rows() == v.values.rows() && psi.values.cols() == v.values.cols(),
                    ErrorKind::DimensionMismatch, "verify_poisson: grid shapes differ");
    detail::require(interior.size() == v.domain.size(), ErrorKind::DimensionMismatch,
                    "verify_poisson: interior mask size");
    const Matrix lap = laplacian(psi.domain, psi.values);
    const double scale = detail::interior_max_norm(v.values, interior);
    const double err = detail::interior_max_norm(lap - v.values, interior);
    if (scale == 0.0) return err;
    return err / scale;
}

[[nodiscard]] inline double verify_poisson(const GridField& psi, const GridField& v,
                                           Region region = Region::Ball,
                                           double interior_fraction = 0.5) {
    return verify_poisson(psi, v, interior_mask(v.domain, region, interior_fraction));
}

[[nodiscard]] inline DecompositionResult decompose(const GridField& v,
                                                   const DecomposeOptions& opts = {}) {
    const auto& g = v.domain;
    detail::require(v.components() == g.dim(), ErrorKind::DimensionMismatch,
                    "decompose: field must have one component per axis");
    for (int d = 0; d < g.dim(); ++d)
        detail::require(g.points()[static_cast<std::size_t>(d)] >= 8, ErrorKind::InvalidArgument,
                        "decompose: need at least 8 points per axis for interior stencils");
    detail::require(opts.interior_fraction > 0.0 && opts.interior_fraction < 1.0,
                    ErrorKind::InvalidArgument, "decompose: interior fraction must be in (0, 1)");

    DecompositionResult out{GridField{g, {}}, GridField{g, {}}, GridField{g, {}}, 0.0, 0.0, 0.0,
                            {}, 0, 0.0, opts};

    if (opts.backend == Backend::Quadrature) {
        const auto mask = opts.region == Region::Box ? std::vector<char>() : region_mask(g, opts.region);
        out.psi.values = detail::psi_quadrature(v, mask, opts.kernel_budget, out.kernel_evaluations);
    } else {
        out.psi.values = detail::psi_spectral(v);
    }

    const Eigen::VectorXd phi = -divergence(g, out.psi.values);
    const Matrix grad_phi = gradient(g, phi);
    const Matrix lap_psi = laplacian(g, out.psi.values);
    out.phi.values = phi;
    out.alpha.values = lap_psi + grad_phi;

    out.interior = interior_mask(g, opts.region, opts.interior_fraction);
    out.interior_count = static_cast<std::size_t>(std::count(out.interior.begin(), out.interior.end(), 1));
    detail::require(out.interior_count > 0, ErrorKind::InvalidArgument,
                    "decompose: grid too coarse, no interior points");

    const double vmax = detail::interior_max_norm(v.values, out.interior);
    const double amax = detail::interior_max_norm(out.alpha.values, out.interior);
    const auto rel = [&](double e) { return vmax > 0.0 ? e / vmax : e; };

    out.residual_poisson = rel(detail::interior_max_norm(lap_psi - v.values, out.interior));
    out.residual_reconstruction =
        rel(detail::interior_max_norm(v.values - (-grad_phi + out.alpha.values), out.interior));

    const Eigen::VectorXd div_alpha = divergence(g, out.alpha.values);
    double div_max = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k)
        if (out.interior[k]) div_max = std::max(div_max, std::abs(div_alpha[static_cast<Eigen::Index>(k)]));
    const double scale = std::max(amax, vmax);
    out.residual_div_alpha = scale > 0.0 ? div_max * g.half_width().minCoeff() / scale : div_max;
    return out;
}

/// Recovered parts versus a field whose split is known analytically.
struct SplitErrors {
    double gradient_part = 0.0;    // max‖-∇φ_rec - (-∇φ_true)‖ / max‖v‖
    double solenoidal_part = 0.0;  // max‖α_rec - α_true‖ / max‖v‖
    double potential = 0.0;        // max|φ_rec - φ_true - mean| / (max φ_true - min φ_true)
};

[[nodiscard]] inline SplitErrors split_errors(const DecompositionResult& r, const FieldSpec& spec) {
    detail::require(spec.has_analytic_decomposition(), ErrorKind::InvalidArgument,
                    "split_errors: field has no analytic decomposition");
    const auto& g = r.psi.domain;
    const Matrix grad_phi = gradient(g, r.phi.values.col(0));
    SplitErrors e;
    double vmax = 0.0;
    double mean_diff = 0.0;
    double pmin = INFINITY, pmax = -INFINITY;
    std::vector<double> diffs;
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (!r.interior[k]) continue;
        const auto kk = static_cast<Eigen::Index>(k);
        const Vector x = g.coordinate(k);
        const Vector gp = spec.gradient_part(x);
        const Vector sp = spec.solenoidal_part(x);
        vmax = std::max(vmax, (gp + sp).norm());
        e.gradient_part = std::max(e.gradient_part, (-grad_phi.row(kk).transpose() - gp).norm());
        e.solenoidal_part = std::max(e.solenoidal_part, (r.alpha.values.row(kk).transpose() - sp).norm());
        const double pt = spec.potential(x);
        pmin = std::min(pmin, pt);
        pmax = std::max(pmax, pt);
        diffs.push_back(r.phi.values(kk, 0) - pt);
        mean_diff += diffs.back();
    }
    mean_diff /= static_cast<double>(diffs.size());
    for (double d : diffs) e.potential = std::max(e.potential, std::abs(d - mean_diff));
    if (vmax > 0.0) {
        e.gradient_part /= vmax;
        e.solenoidal_part /= vmax;
    }
    if (pmax > pmin) e.potential /= (pmax - pmin);
    return e;
}

/// Multilinear interpolation between cell centres (clamped to the outermost centres).
[[nodiscard]] inline Vector interpolate(const GridField& f, const Vector& x) {
    const auto& g = f.domain;
    detail::require(x.size() == g.dim(), ErrorKind::DimensionMismatch, "interpolate: point dimension");
    const int dim = g.dim();
    std::vector<int> base(static_cast<std::size_t>(dim));
    std::vector<double> frac(static_cast<std::size_t>(dim));
    for (int d = 0; d < dim; ++d) {
        const int n = g.points()[static_cast<std::size_t>(d)];
        double u = (x[d] - g.lower()[d]) / g.spacing(d) - 0.5;
        u = std::clamp(u, 0.0, static_cast<double>(n - 1));
        int i = std::min(static_cast<int>(std::floor(u)), n - 2);
        base[static_cast<std::size_t>(d)] = i;
        frac[static_cast<std::size_t>(d)] = u - i;
    }
    Vector out = Vector::Zero(f.components());
    for (int corner = 0; corner < (1 << dim); ++corner) {
        double w = 1.0;
        std::size_t k = 0;
        for (int d = 0; d < dim; ++d) {
            const int bit = (corner >> d) & 1;
            const auto du = static_cast<std::size_t>(d);
            w *= bit ? frac[du] : 1.0 - frac[du];
            k += static_cast<std::size_t>(base[du] + bit) * g.stride(d);
        }
        if (w != 0.0) out += w * f.values.row(static_cast<Eigen::Index>(k)).transpose();
    }
    return out;
}

}  // namespace pqdyn::hhd
