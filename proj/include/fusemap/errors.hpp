#pragma once

#include <stdexcept>
#include <string>

namespace fusemap {

/// Base of the library's error taxonomy. The three direct subclasses map onto
/// the CLI exit codes: ValidationError -> 1, PipelineError -> 2, IoError -> 3.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error(msg) {}
};

class PipelineError : public Error {
 public:
  explicit PipelineError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// -- validation ---------------------------------------------------------------

struct NonUnitQuaternion : ValidationError {
  explicit NonUnitQuaternion(const std::string& msg) : ValidationError(msg) {}
};

struct InvalidFactor : ValidationError {
  explicit InvalidFactor(const std::string& msg) : ValidationError(msg) {}
};

struct InvalidParameter : ValidationError {
  explicit InvalidParameter(const std::string& msg) : ValidationError(msg) {}
};

struct TooFewPoints : ValidationError {
  explicit TooFewPoints(const std::string& msg) : ValidationError(msg) {}
};

struct EmptyCloud : ValidationError {
  explicit EmptyCloud(const std::string& msg) : ValidationError(msg) {}
};

struct EmptyInput : ValidationError {
  explicit EmptyInput(const std::string& msg) : ValidationError(msg) {}
};

struct MissingNormals : ValidationError {
  explicit MissingNormals(const std::string& msg) : ValidationError(msg) {}
};

struct UnsortedStream : ValidationError {
  explicit UnsortedStream(const std::string& msg) : ValidationError(msg) {}
};

struct LengthMismatch : ValidationError {
  explicit LengthMismatch(const std::string& msg) : ValidationError(msg) {}
};

struct TimestampMismatch : ValidationError {
  explicit TimestampMismatch(const std::string& msg) : ValidationError(msg) {}
};

struct InvalidScene : ValidationError {
  explicit InvalidScene(const std::string& msg) : ValidationError(msg) {}
};

// -- pipeline -----------------------------------------------------------------

struct DegenerateCorrespondences : PipelineError {
  explicit DegenerateCorrespondences(const std::string& msg) : PipelineError(msg) {}
};

struct SingularSystem : PipelineError {
  explicit SingularSystem(const std::string& msg) : PipelineError(msg) {}
};

// -- i/o ----------------------------------------------------------------------

struct MissingFile : IoError {
  explicit MissingFile(const std::string& msg) : IoError(msg) {}
};

struct CorruptHeader : IoError {
  explicit CorruptHeader(const std::string& msg) : IoError(msg) {}
};

struct InconsistentDims : IoError {
  explicit InconsistentDims(const std::string& msg) : IoError(msg) {}
};

}  // namespace fusemap
