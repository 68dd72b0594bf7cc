#pragma once

#include <stdexcept>
#include <string>

namespace bsb {

// Data-level failure: malformed inputs, violated preconditions, missing files.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

} // namespace bsb
