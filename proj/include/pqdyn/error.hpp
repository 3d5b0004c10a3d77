#pragma once

#include <stdexcept>
#include <string>

namespace pqdyn {

/// Failure categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
    InvalidArgument,
    DimensionMismatch,
    NonFinite,
    OutsideDomain,
    BudgetExceeded,
    NotClosed,
    InsufficientData,
    Config,
    Io,
    Integrity,
};

[[nodiscard]] constexpr const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid_argument";
        case ErrorKind::DimensionMismatch: return "dimension_mismatch";
        case ErrorKind::NonFinite: return "non_finite";
        case ErrorKind::OutsideDomain: return "outside_domain";
        case ErrorKind::BudgetExceeded: return "budget_exceeded";
        case ErrorKind::NotClosed: return "not_closed";
        case ErrorKind::InsufficientData: return "insufficient_data";
        case ErrorKind::Config: return "config";
        case ErrorKind::Io: return "io";
        case ErrorKind::Integrity: return "integrity";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

namespace detail {

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
    if (!cond) throw Error(kind, msg);
}

}  // namespace detail

}  // namespace pqdyn
