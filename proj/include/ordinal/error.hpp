#ifndef ORDINAL_ERROR_HPP
#define ORDINAL_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ordinal {

// Base for every failure raised by the library. Each subclass corresponds to
// one error category a caller may want to handle separately.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

class DegenerateConfiguration : public Error {
public:
    using Error::Error;
};

// A caller broke a documented precondition.
class ContractViolation : public Error {
public:
    using Error::Error;
};

// Out-of-order request against a stateful protocol (annotation sessions).
class ProtocolError : public Error {
public:
    using Error::Error;
};

class NotFound : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    TrainingError(const std::string& what, long step)
        : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

    long step() const noexcept { return step_; }

private:
    long step_;
};

} // namespace ordinal

#endif // ORDINAL_ERROR_HPP
