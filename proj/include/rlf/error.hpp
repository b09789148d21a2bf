#pragma once

#include <stdexcept>
#include <string>

namespace rlf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A file was readable but its content is not in a supported format.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a precondition (empty image, malformed record, ...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A numeric parameter is outside its valid range.
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// No text evidence in an image where some was required.
class NoTextError : public Error {
 public:
  using Error::Error;
};

/// A query produced no keypoints and cannot be searched for.
class EmptyQueryError : public Error {
 public:
  using Error::Error;
};

/// Evaluation could not produce a defined result.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

inline void require_param(bool ok, const std::string& what) {
  if (!ok) throw InvalidParameter(what);
}

}  // namespace rlf
