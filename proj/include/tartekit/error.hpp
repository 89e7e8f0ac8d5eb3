#pragma once

#include <stdexcept>
#include <string>

namespace tartekit {

// Base of every error raised by the library. Callers that only care about
// "something went wrong" catch this; the subclasses carry the category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DegenerateInput : public Error {
 public:
  using Error::Error;
};

// Emits a one-line warning on stderr. Kept as a function so tests can
// silence or count warnings through the hook below.
void warn(const std::string& message);

// Number of warnings emitted since process start.
long warning_count();

}  // namespace tartekit
