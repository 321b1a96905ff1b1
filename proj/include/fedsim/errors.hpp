#pragma once

#include <stdexcept>
#include <string>

namespace fedsim {

/// Base class for every error raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Two parameter sets (or a mask and a parameter set) do not share the same
/// layer structure.
struct CongruenceError : Error {
  using Error::Error;
};

/// A computation produced NaN or Inf.
struct NumericError : Error {
  using Error::Error;
};

/// Invalid configuration value.
struct ConfigError : Error {
  using Error::Error;
};

/// Malformed input file (CSV or JSON).
struct SchemaError : Error {
  using Error::Error;
};

/// Metric undefined for the given inputs, e.g. AUROC on a single class.
struct MetricError : Error {
  using Error::Error;
};

}  // namespace fedsim
