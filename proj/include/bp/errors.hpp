#ifndef BP_ERRORS_HPP_
#define BP_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace bp {

/// Root of every error thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define BP_DEFINE_ERROR(Name)                  \
    class Name : public Error {                \
    public:                                    \
        using Error::Error;                    \
    }

// geometry
BP_DEFINE_ERROR(DegenerateVector);
BP_DEFINE_ERROR(NotSymmetric);

// estimator
BP_DEFINE_ERROR(InvalidDt);
BP_DEFINE_ERROR(NumericalFailure);
BP_DEFINE_ERROR(DegenerateRange);
BP_DEFINE_ERROR(NotYetObservable);

// policy / learner
BP_DEFINE_ERROR(ShapeMismatch);
BP_DEFINE_ERROR(ZeroLayer);
BP_DEFINE_ERROR(CheckpointError);

// scenario / io
BP_DEFINE_ERROR(EmptyRun);
BP_DEFINE_ERROR(IoError);
BP_DEFINE_ERROR(PortInUse);

#undef BP_DEFINE_ERROR

/// Malformed configuration text. Carries the 1-based line where parsing failed.
class ParseError : public Error {
public:
    ParseError(const std::string& what, int line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

/// Well-formed configuration with an invalid or unknown field.
class ValidationError : public Error {
public:
    ValidationError(std::string field, const std::string& why)
        : Error(field + ": " + why), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

}  // namespace bp

#endif  // BP_ERRORS_HPP_
