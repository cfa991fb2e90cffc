#pragma once

#include <stdexcept>
#include <string>

namespace tiltop {

struct Error : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (parameter ranges, schema).
struct ConfigError : Error
{
  using Error::Error;
};

struct CalibrationError : Error
{
  using Error::Error;
};

/// Vertical load too small for a meaningful center of pressure.
struct UnreliableCopError : Error
{
  using Error::Error;
};

struct DegenerateFitError : Error
{
  using Error::Error;
};

struct IoError : Error
{
  using Error::Error;
};

} // namespace tiltop
