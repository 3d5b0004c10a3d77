#pragma once

// Thin RAII layer over FFTW's multi-dimensional real transforms.

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <vector>

#include "pqdyn/error.hpp"

namespace pqdyn::fft {

namespace detail {

// FFTW's planner is not re-entrant.
inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct Freer {
    void operator()(void* p) const noexcept { fftw_free(p); }
};

struct PlanDeleter {
    void operator()(fftw_plan_s* p) const noexcept {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(p);
    }
};

}  // namespace detail

/// Forward/backward real transform pair over a fixed row-major shape.
class RealTransform {
public:
    explicit RealTransform(std::vector<int> shape) : shape_(std::move(shape)) {
        pqdyn::detail::require(!shape_.empty(), ErrorKind::InvalidArgument, "fft: empty shape");
        real_size_ = 1;
        for (int n : shape_) real_size_ *= static_cast<std::size_t>(n);
        complex_size_ = real_size_ / static_cast<std::size_t>(shape_.back()) *
                        (static_cast<std::size_t>(shape_.back()) / 2 + 1);
        real_.reset(static_cast<double*>(fftw_malloc(sizeof(double) * real_size_)));
        spectrum_.reset(fftw_malloc(sizeof(fftw_complex) * complex_size_));
        pqdyn::detail::require(real_ && spectrum_, ErrorKind::BudgetExceeded,
                               "fft: allocation failed");
        std::lock_guard lock(detail::planner_mutex());
        const int rank = static_cast<int>(shape_.size());
        auto* c = static_cast<fftw_complex*>(spectrum_.get());
        forward_.reset(fftw_plan_dft_r2c(rank, shape_.data(), real_.get(), c, FFTW_ESTIMATE));
        backward_.reset(fftw_plan_dft_c2r(rank, shape_.data(), c, real_.get(), FFTW_ESTIMATE));
        pqdyn::detail::require(forward_ && backward_, ErrorKind::InvalidArgument,
                               "fft: planning failed");
    }

    [[nodiscard]] const std::vector<int>& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t real_size() const noexcept { return real_size_; }
    [[nodiscard]] std::size_t complex_size() const noexcept { return complex_size_; }

    [[nodiscard]] double* real() noexcept { return real_.get(); }
    [[nodiscard]] std::complex<double>* spectrum() noexcept {
        return reinterpret_cast<std::complex<double>*>(spectrum_.get());
    }

    /// real() -> spectrum(). Unnormalized.
    void forward() { fftw_execute(forward_.get()); }
    /// spectrum() -> real(). Unnormalized; clobbers spectrum().
    void backward() { fftw_execute(backward_.get()); }

private:
    std::vector<int> shape_;
    std::size_t real_size_ = 0;
    std::size_t complex_size_ = 0;
    std::unique_ptr<double, detail::Freer> real_;
    std::unique_ptr<void, detail::Freer> spectrum_;
    std::unique_ptr<fftw_plan_s, detail::PlanDeleter> forward_;
    std::unique_ptr<fftw_plan_s, detail::PlanDeleter> backward_;
};

}  // namespace pqdyn::fft
