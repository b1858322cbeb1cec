#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace batlas {

// Base for every error raised by the library. The CLI maps these to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class EmptyMaskError : public Error {
 public:
  using Error::Error;
};

class IncompatibleBarcodeError : public Error {
 public:
  using Error::Error;
};

class EmptyAtlasError : public Error {
 public:
  using Error::Error;
};

class BuildError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

// File could not be opened, decoded or written.
class IoError : public Error {
 public:
  using Error::Error;
};

// Atlas file load failures. Each failure mode has its own class.
class AtlasFormatError : public Error {
 public:
  using Error::Error;
};

class MagicMismatchError : public AtlasFormatError {
 public:
  using AtlasFormatError::AtlasFormatError;
};

class VersionMismatchError : public AtlasFormatError {
 public:
  using AtlasFormatError::AtlasFormatError;
};

class TruncatedFileError : public AtlasFormatError {
 public:
  TruncatedFileError(const std::string& what, std::size_t entry_ordinal)
      : AtlasFormatError(what), entry_ordinal_(entry_ordinal) {}

  // Zero-based entry being read when the data ran out; npos for the header.
  std::size_t entry_ordinal() const noexcept { return entry_ordinal_; }

  static constexpr std::size_t kHeader = static_cast<std::size_t>(-1);

 private:
  std::size_t entry_ordinal_;
};

class ChecksumError : public AtlasFormatError {
 public:
  using AtlasFormatError::AtlasFormatError;
};

}  // namespace batlas
