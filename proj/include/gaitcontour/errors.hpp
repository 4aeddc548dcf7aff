#pragma once

#include <stdexcept>
#include <string>

namespace gaitcontour {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define GAITCONTOUR_DEFINE_ERROR(NAME)                          \
  struct NAME : Error {                                         \
    explicit NAME(const std::string& msg) : Error(#NAME ": " + msg) {} \
  }

GAITCONTOUR_DEFINE_ERROR(EmptyMask);
GAITCONTOUR_DEFINE_ERROR(DegenerateContour);
GAITCONTOUR_DEFINE_ERROR(TooFewContourPoints);
GAITCONTOUR_DEFINE_ERROR(InvalidKeypointCount);
GAITCONTOUR_DEFINE_ERROR(LengthMismatch);
GAITCONTOUR_DEFINE_ERROR(ShapeMismatch);
GAITCONTOUR_DEFINE_ERROR(UnknownRegion);
GAITCONTOUR_DEFINE_ERROR(DegenerateBatch);
GAITCONTOUR_DEFINE_ERROR(InsufficientData);
GAITCONTOUR_DEFINE_ERROR(EmptySet);
GAITCONTOUR_DEFINE_ERROR(NoImpostors);
GAITCONTOUR_DEFINE_ERROR(ChecksumMismatch);
GAITCONTOUR_DEFINE_ERROR(FigureOutOfFrame);
GAITCONTOUR_DEFINE_ERROR(IoError);
GAITCONTOUR_DEFINE_ERROR(ConfigError);

#undef GAITCONTOUR_DEFINE_ERROR

}  // namespace gaitcontour
