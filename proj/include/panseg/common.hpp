#ifndef PANSEG_COMMON_HPP
#define PANSEG_COMMON_HPP

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace panseg {

enum class ErrorKind {
    invalid_argument,
    shape_mismatch,
    io,
    format,
    version,
    numeric,
};

inline const char* error_kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::invalid_argument: return "invalid_argument";
        case ErrorKind::shape_mismatch: return "shape_mismatch";
        case ErrorKind::io: return "io";
        case ErrorKind::format: return "format";
        case ErrorKind::version: return "version";
        case ErrorKind::numeric: return "numeric";
    }
    return "unknown";
}

/// Single exception type for the library; `kind()` distinguishes failure classes.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(std::string(error_kind_name(kind)) + ": " + msg), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

template <class... Ts>
std::string cat(Ts&&... parts) {
    std::ostringstream os;
    (os << ... << parts);
    return os.str();
}

template <class... Ts>
[[noreturn]] void fail(ErrorKind kind, Ts&&... parts) {
    throw Error(kind, cat(std::forward<Ts>(parts)...));
}

template <class... Ts>
void require(bool cond, ErrorKind kind, Ts&&... parts) {
    if (!cond) fail(kind, std::forward<Ts>(parts)...);
}

}  // namespace panseg

#endif  // PANSEG_COMMON_HPP
