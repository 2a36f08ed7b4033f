#pragma once

#include <stdexcept>
#include <string>

namespace crush {

// Base class for every error raised by the library. `exit_code()` maps the
// error onto the CLI's exit status convention.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 2; }
};

#define CRUSH_DEFINE_ERROR(Name, Code)                       \
  class Name : public Error {                                \
   public:                                                   \
    using Error::Error;                                      \
    int exit_code() const noexcept override { return Code; } \
  }

CRUSH_DEFINE_ERROR(ParseError, 2);
CRUSH_DEFINE_ERROR(ConfigError, 2);
CRUSH_DEFINE_ERROR(GeometryError, 2);
CRUSH_DEFINE_ERROR(PlacementError, 2);
CRUSH_DEFINE_ERROR(ModeError, 2);
CRUSH_DEFINE_ERROR(ShapeError, 2);
CRUSH_DEFINE_ERROR(ProtocolError, 2);
CRUSH_DEFINE_ERROR(DegenerateDataset, 2);
CRUSH_DEFINE_ERROR(InsufficientData, 2);
CRUSH_DEFINE_ERROR(InsufficientHistory, 2);
CRUSH_DEFINE_ERROR(NumericError, 3);
CRUSH_DEFINE_ERROR(DivergenceError, 3);
CRUSH_DEFINE_ERROR(IncompleteRun, 4);
CRUSH_DEFINE_ERROR(IncompleteArchive, 4);

#undef CRUSH_DEFINE_ERROR

}  // namespace crush
