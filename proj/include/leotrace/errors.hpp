#ifndef LEOTRACE_ERRORS_HPP
#define LEOTRACE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace leotrace {

// Error taxonomy mirrors the CLI exit codes: config errors (2),
// validation failures (3), everything else unexpected (4).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct ParseError : Error {
    using Error::Error;
};

struct ValidationError : Error {
    using Error::Error;
};

struct UsageError : Error {
    using Error::Error;
};

} // namespace leotrace

#endif
