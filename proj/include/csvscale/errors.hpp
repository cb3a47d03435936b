#ifndef CSVSCALE_ERRORS_HPP
#define CSVSCALE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace csvscale {

class Error : public std::runtime_error {
   public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input or a violated structural invariant.
class ValidationError : public Error {
   public:
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

/// The sigmoid law or the scorer could not be fitted.
class FitError : public Error {
   public:
    explicit FitError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
   public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace csvscale

#endif  // CSVSCALE_ERRORS_HPP
