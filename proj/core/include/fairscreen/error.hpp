#pragma once

#include <stdexcept>

namespace fairscreen {

/// Base class for errors raised by this library. Programming-contract
/// violations (bad arguments to in-process calls) use std::invalid_argument
/// instead; these types cover failures driven by external inputs.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (cohort CSV, config document). The message carries
/// the file position when one is known.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Structurally valid configuration with invalid values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A subgroup audit that cannot run because a group has no positive labels.
/// Callers surface this as an explicit "untestable" outcome; it must never
/// be folded into "unbiased".
class UntestableError : public Error {
 public:
  using Error::Error;
};

}  // namespace fairscreen
