#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cqe {

/// Base class for every error raised by the library. Carries a message that
/// is safe to print to the user as-is.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input file is missing, unreadable, or malformed.
class IoError : public Error {
public:
    using Error::Error;
};

/// Arguments violate a documented precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

namespace logging {

/// Emit a warning on stderr (unless silenced) and bump the global counter.
void warn(std::string_view message);

/// Number of warnings emitted since process start or the last reset.
std::size_t warning_count();
void reset_warning_count();

/// Toggle printing; counting continues while silenced.
void set_quiet(bool quiet);

}  // namespace logging

}  // namespace cqe
