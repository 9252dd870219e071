#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace assist {

// Base of every error this library throws. Callers that only need a message
// can catch this; the server maps the subclasses onto HTTP status classes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input document. line/column are 1-based; 0 means unknown.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line, std::size_t column,
               std::string field = {});

    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }
    const std::string& field() const { return field_; }

private:
    std::size_t line_;
    std::size_t column_;
    std::string field_;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class StateError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

class ConflictError : public Error {
public:
    using Error::Error;
};

// Event log sequence gap or duplicate; the caller must re-read and retry.
class OrderingError : public Error {
public:
    using Error::Error;
};

class AlignmentError : public Error {
public:
    using Error::Error;
};

class DegenerateInputError : public Error {
public:
    using Error::Error;
};

}  // namespace assist
