#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hypertrain {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "error"; }
};

class ShapeError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "shape"; }
};

class DomainError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "domain"; }
};

/// Misuse of the autodiff tape: non-scalar loss, Vars from another tape.
class TapeError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "tape"; }
};

class NumericError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "numeric"; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "config"; }
};

/// Malformed binary input; offset is the byte position where parsing failed.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    const char* kind() const noexcept override { return "format"; }
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// A non-finite loss or gradient appeared during optimization.
class DivergenceError : public Error {
public:
    DivergenceError(std::string phase, std::size_t iteration)
        : Error("divergence in " + phase + " at iteration " + std::to_string(iteration)),
          phase_(std::move(phase)), iteration_(iteration) {}
    const char* kind() const noexcept override { return "divergence"; }
    const std::string& phase() const noexcept { return phase_; }
    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::string phase_;
    std::size_t iteration_;
};

} // namespace hypertrain
