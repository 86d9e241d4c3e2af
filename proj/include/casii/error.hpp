#pragma once

#include <stdexcept>
#include <string>

namespace casii {

enum class Errc {
    invalid_argument,
    dimension_mismatch,
    bad_magic,
    version_mismatch,
    truncated,
    malformed,
    io,
    numerical,
    no_convergence,
};

/// Single exception type for the library. The code lets callers (the CLI in
/// particular) map failures onto exit statuses without string matching.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, const std::string& what) {
    if (!condition) fail(Errc::invalid_argument, what);
}

}  // namespace casii
