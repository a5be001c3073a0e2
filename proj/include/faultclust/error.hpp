#pragma once

#include <stdexcept>
#include <string>

namespace faultclust {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller supplied something outside an operation's domain (bad shape, bad parameter, bad vocabulary).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Filesystem or format problems while reading or writing artifacts.
class IoError : public Error {
public:
    using Error::Error;
};

/// A numerical routine produced a non-finite value or failed to converge.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Lookup of an id that does not exist.
class NotFound : public Error {
public:
    using Error::Error;
};

} // namespace faultclust
