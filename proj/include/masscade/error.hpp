#pragma once

#include <stdexcept>
#include <string>

namespace masscade {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments or violated preconditions.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Missing, unreadable or inconsistent files on disk.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage failed for a reason other than bad input data.
class PipelineError : public Error {
 public:
  using Error::Error;
};

}  // namespace masscade
