#pragma once

#include <stdexcept>
#include <string>

namespace iat {

struct Error : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

// Caller broke a documented precondition (empty history, n_best > width, ...).
struct PreconditionError : Error
{
  using Error::Error;
};

// Bad configuration or user input; the CLI maps these to exit code 2.
struct ConfigError : Error
{
  using Error::Error;
};

struct RangeError : Error
{
  using Error::Error;
};

struct ParseError : Error
{
  using Error::Error;
};

struct NumericError : Error
{
  using Error::Error;
};

struct CheckpointError : Error
{
  using Error::Error;
};
struct CheckpointVersionError : CheckpointError
{
  using CheckpointError::CheckpointError;
};
struct CheckpointShapeError : CheckpointError
{
  using CheckpointError::CheckpointError;
};
struct CheckpointCorruptError : CheckpointError
{
  using CheckpointError::CheckpointError;
};

} // namespace iat
