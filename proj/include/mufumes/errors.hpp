#pragma once

#include <stdexcept>
#include <string>

namespace mufumes {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A size or dimension argument is out of range (e.g. fewer than 4 cubic basis functions).
class InvalidDimension : public Error {
public:
    using Error::Error;
};

/// An evaluation point or state lies outside the admissible domain.
class DomainError : public Error {
public:
    using Error::Error;
};

/// A model or prior hyperparameter is invalid.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Raw data and bases do not fit together.
class AssemblyError : public Error {
public:
    using Error::Error;
};

/// Non-finite values, failed factorizations, diverging iterations.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Dataset files that cannot be parsed or validated.
class DatasetError : public Error {
public:
    using Error::Error;
};

class GenerationError : public Error {
public:
    using Error::Error;
};

class TuningError : public Error {
public:
    using Error::Error;
};

/// Configuration errors carry the originating file and line when known.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace mufumes
