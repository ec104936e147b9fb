#pragma once

#include <stdexcept>

namespace phasedfl {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad value or option: out-of-range rate, non-monotone schedule, unknown key.
struct ValidationError : Error {
  using Error::Error;
};

// Inconsistent experiment wiring: shapes vs architecture, k vs pool size.
struct ConfigError : Error {
  using Error::Error;
};

// Client/server contract violation: misaligned mask, flag out of order.
struct ProtocolError : Error {
  using Error::Error;
};

// Malformed input file.
struct IngestError : Error {
  using Error::Error;
};

// Filesystem failure on an output path.
struct IoError : Error {
  using Error::Error;
};

}  // namespace phasedfl
