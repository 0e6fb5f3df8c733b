#pragma once

#include <stdexcept>
#include <string>

namespace gazetrack {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition violated by a caller-supplied value.
class InvalidArgument : public Error { using Error::Error; };

// spatial_index
class InvalidWidget : public Error { using Error::Error; };
class DuplicateWidget : public Error { using Error::Error; };
class UnknownWidget : public Error { using Error::Error; };
class PointOutOfBounds : public Error { using Error::Error; };
class InvalidConfig : public Error { using Error::Error; };

// gaze_geometry
class SingularGeometry : public Error { using Error::Error; };
class DivergentGaze : public Error { using Error::Error; };
class NoIntersection : public Error { using Error::Error; };

// depth_model
class ShapeMismatch : public Error { using Error::Error; };
class NonFiniteValue : public Error { using Error::Error; };

// file formats and event streams
class FormatError : public Error { using Error::Error; };
class ParseError : public Error {
 public:
  ParseError(std::string where, const std::string& what)
      : Error(where + ": " + what), location_(std::move(where)) {}
  const std::string& location() const noexcept { return location_; }

 private:
  std::string location_;
};
class OutOfOrder : public Error { using Error::Error; };

}  // namespace gazetrack
