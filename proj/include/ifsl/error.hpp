#ifndef IFSL_ERROR_HPP
#define IFSL_ERROR_HPP

#include <stdexcept>
#include <string>

namespace ifsl {

    // Base of every error the library raises on bad input or state.
    class Error : public std::runtime_error {
    public:
        using std::runtime_error::runtime_error;
    };

    class ValidationError : public Error {
    public:
        using Error::Error;
    };

    class IngestionError : public Error {
    public:
        using Error::Error;
    };

    class ConfigError : public Error {
    public:
        using Error::Error;
    };

    class SamplingError : public Error {
    public:
        using Error::Error;
    };

    class NumericError : public Error {
    public:
        using Error::Error;
    };

    class DependencyError : public Error {
    public:
        using Error::Error;
    };

    class DomainError : public Error {
    public:
        using Error::Error;
    };

    class InterventionRejected : public Error {
    public:
        using Error::Error;
    };

}

#endif // IFSL_ERROR_HPP
