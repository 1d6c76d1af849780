#pragma once

#include <stdexcept>
#include <string>

namespace factsurv {

// Base class for everything this library throws. The CLI maps these to
// exit code 2 (data/convergence errors), keeping exit 1 for usage errors.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Malformed input file (carries line numbers where applicable).
class ParseError : public Error {
public:
  using Error::Error;
};

// A structural invariant of the data is violated (duplicate keys, gaps,
// dangling references, degenerate covariates).
class ValidationError : public Error {
public:
  using Error::Error;
};

// Bad configuration, rejected before any work starts.
class ConfigError : public Error {
public:
  using Error::Error;
};

// An iterative fit failed to converge or the likelihood is degenerate.
class ConvergenceError : public Error {
public:
  using Error::Error;
};

// HTTP/network failure talking to an inference endpoint.
class TransportError : public Error {
public:
  using Error::Error;
};

} // namespace factsurv
