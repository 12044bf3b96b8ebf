#ifndef BITSTAIN_CORE_ERRORS_HPP
#define BITSTAIN_CORE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace bitstain {

// Base for everything this library throws on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad argument value (out-of-range parameter, invalid percentile order, ...).
class ValueError : public Error {
public:
    using Error::Error;
};

// Tensor/image dimension mismatch.
class ShapeError : public Error {
public:
    using Error::Error;
};

// File or directory level problem; message names the offending path.
class IoError : public Error {
public:
    using Error::Error;
};

// Operation invoked on an object in the wrong state (e.g. uninitialized
// style prototype, checkpoint without a prototype entry).
class StateError : public Error {
public:
    using Error::Error;
};

// Invalid or unknown configuration keys/values.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
public:
    using Error::Error;
};

// A metric that is mathematically undefined on the given inputs.
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

// Phantom synthesis could not satisfy its constraints.
class GenerationError : public Error {
public:
    GenerationError(const std::string& msg, int placed_count)
        : Error(msg), placed(placed_count) {}
    int placed = 0;
};

}  // namespace bitstain

#endif
