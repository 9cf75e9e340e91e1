#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace inscorr {

// Base of every error thrown by the library. Callers that only care about
// "something went wrong in inscorr" catch this.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor shapes or parameter shapes disagree.
class DimensionError : public Error {
public:
    using Error::Error;
};

// A class index outside [0, c).
class LabelError : public Error {
public:
    LabelError(const std::string& what, std::size_t index)
        : Error(what), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

// A caller violated a documented precondition.
class ContractError : public Error {
public:
    using Error::Error;
};

// Input data is unusable (NaN losses, mismatched instance widths, ...).
class DataError : public Error {
public:
    DataError(const std::string& what, std::size_t index = 0)
        : Error(what), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

class NumericError : public Error {
public:
    using Error::Error;
};

// Out-of-range corruption / attack parameter.
class ParameterError : public Error {
public:
    using Error::Error;
};

// Not enough source material (e.g. OOD pool smaller than the replacement count).
class CapacityError : public Error {
public:
    using Error::Error;
};

// Configuration error carrying the dotted path of the offending key.
class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& what)
        : Error(key + ": " + what), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

// Binary container load failures.
class FormatError : public Error {
public:
    using Error::Error;
};
class VersionError : public Error {
public:
    using Error::Error;
};
class TruncatedError : public Error {
public:
    using Error::Error;
};
class ChecksumError : public Error {
public:
    using Error::Error;
};

}  // namespace inscorr
