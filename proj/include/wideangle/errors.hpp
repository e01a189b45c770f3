#pragma once

#include <stdexcept>
#include <string>

namespace wideangle {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// Malformed user input (bad JSON, invalid annotation, bad flag value).
class ValidationError : public Error {
public:
    using Error::Error;
};

class NonInvertibleModel : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class SolverDiverged : public Error {
public:
    using Error::Error;
};

class FlippedQuad : public Error {
public:
    using Error::Error;
};

class DegenerateLine : public Error {
public:
    using Error::Error;
};

class DegenerateReference : public Error {
public:
    using Error::Error;
};

class ZeroVector : public Error {
public:
    using Error::Error;
};

class IdMismatch : public Error {
public:
    using Error::Error;
};

class CorruptRecord : public Error {
public:
    using Error::Error;
};

class InvalidRecord : public Error {
public:
    using Error::Error;
};

}  // namespace wideangle
