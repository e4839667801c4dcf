#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace fipa {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad caller input: shape mismatches, invalid configuration, unknown options.
struct ValueError : Error {
    using Error::Error;
};

// Numerically degenerate input: collinear frame points, singular fits, ...
struct NumericError : Error {
    using Error::Error;
};

// Malformed, truncated, or otherwise unreadable files.
struct IoError : Error {
    using Error::Error;
};

namespace detail {

template <class... Parts>
std::string strcat(Parts&&... parts) {
    std::ostringstream os;
    (os << ... << parts);
    return os.str();
}

}  // namespace detail
}  // namespace fipa

// Argument validation with a streamed message:
//   FIPA_REQUIRE(a.cols() == b.rows(), "matmul: inner dims ", a.cols(), " vs ", b.rows());
#define FIPA_REQUIRE(cond, ...)                                                     \
    do {                                                                            \
        if (!(cond)) throw ::fipa::ValueError(::fipa::detail::strcat(__VA_ARGS__)); \
    } while (0)
