#pragma once

#include <stdexcept>
#include <string>

namespace nvctl {

// Base class for every error raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidParams : Error { using Error::Error; };
struct DegenerateAxis : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct BadGrid : Error { using Error::Error; };
struct NonuniformGrid : Error { using Error::Error; };
struct ZeroPurity : Error { using Error::Error; };
struct UnknownTarget : Error { using Error::Error; };
struct BadGenomeLength : Error { using Error::Error; };
struct NoConvergence : Error { using Error::Error; };
struct NonPositiveInput : Error { using Error::Error; };
struct FileMissing : Error { using Error::Error; };
struct FormatError : Error { using Error::Error; };

}  // namespace nvctl
