#ifndef HJM_ERROR_HPP
#define HJM_ERROR_HPP

#include <stdexcept>
#include <string>

namespace hjm {

// Failure categories surfaced by the library. The CLI maps them onto exit codes.
enum class ErrorKind {
    invalid_curve,
    configuration,
    argument,
    contract,
    basis_construction,
    capacity,
    assembly,
    solver,
    extrapolation,
    unsupported_dimension,
    io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), m_kind(kind) {}

    ErrorKind kind() const noexcept { return m_kind; }

private:
    ErrorKind m_kind;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what)
{
    if (!condition) {
        fail(kind, what);
    }
}

} // namespace hjm

#endif
