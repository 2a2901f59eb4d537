#pragma once

#include <stdexcept>
#include <string>

namespace san {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data failed validation (NaN/Inf in a raster, malformed scene spec).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition (shape mismatch, bad kernel map,
/// non-scalar backward root, missing gradient).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Ground truth had no valid pixels, so the loss or metric is undefined.
class EmptyGroundTruthError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration value or unknown key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Binary file could not be decoded.
class ParseError : public Error {
 public:
  enum class Kind { BadMagic, Truncated, ExtentOverflow, BadVersion, Io };

  ParseError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace san
