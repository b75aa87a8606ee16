#pragma once

#include <stdexcept>
#include <string>

namespace spade {

// Base class for everything thrown by the library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad inputs, bad configuration, violated preconditions. CLI exit code 2.
struct ValidationError : Error {
    using Error::Error;
};

// File and container problems. CLI exit code 3.
struct IoError : Error {
    using Error::Error;
};

// Numerical failure at runtime. CLI exit code 4.
struct NumericError : Error {
    using Error::Error;
};

struct ShapeMismatch : ValidationError {
    explicit ShapeMismatch(const std::string& msg) : ValidationError("ShapeMismatch: " + msg) {}
};

struct WavelengthMismatch : ValidationError {
    explicit WavelengthMismatch(const std::string& msg) : ValidationError("WavelengthMismatch: " + msg) {}
};

struct TooSmall : ValidationError {
    explicit TooSmall(const std::string& msg) : ValidationError("TooSmall: " + msg) {}
};

struct TooFewWavelengths : ValidationError {
    explicit TooFewWavelengths(const std::string& msg) : ValidationError("TooFewWavelengths: " + msg) {}
};

struct ZeroVariance : ValidationError {
    explicit ZeroVariance(const std::string& msg) : ValidationError("ZeroVariance: " + msg) {}
};

struct ZeroImage : ValidationError {
    explicit ZeroImage(const std::string& msg) : ValidationError("ZeroImage: " + msg) {}
};

struct TargetOutOfBounds : ValidationError {
    explicit TargetOutOfBounds(const std::string& msg) : ValidationError("TargetOutOfBounds: " + msg) {}
};

struct UnknownChromophore : ValidationError {
    explicit UnknownChromophore(const std::string& msg) : ValidationError("UnknownChromophore: " + msg) {}
};

struct NonMonotoneWavelengths : ValidationError {
    explicit NonMonotoneWavelengths(const std::string& msg) : ValidationError("NonMonotoneWavelengths: " + msg) {}
};

struct ParseError : ValidationError {
    explicit ParseError(const std::string& msg) : ValidationError("ParseError: " + msg) {}
};

struct SigmaMissing : ValidationError {
    explicit SigmaMissing(const std::string& msg) : ValidationError("SigmaMissing: " + msg) {}
};

struct NoRoom : ValidationError {
    explicit NoRoom(const std::string& msg) : ValidationError("NoRoom: " + msg) {}
};

struct EmptyInput : ValidationError {
    explicit EmptyInput(const std::string& msg) : ValidationError("EmptyInput: " + msg) {}
};

struct BadMagic : IoError {
    explicit BadMagic(const std::string& msg) : IoError("BadMagic: " + msg) {}
};

struct HeaderMismatch : IoError {
    explicit HeaderMismatch(const std::string& msg) : IoError("HeaderMismatch: " + msg) {}
};

struct UnsupportedDtype : IoError {
    explicit UnsupportedDtype(const std::string& msg) : IoError("UnsupportedDtype: " + msg) {}
};

struct FileError : IoError {
    explicit FileError(const std::string& msg) : IoError("FileError: " + msg) {}
};

struct Diverged : NumericError {
    explicit Diverged(const std::string& msg) : NumericError("Diverged: " + msg) {}
};

}  // namespace spade
