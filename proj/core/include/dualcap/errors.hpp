#pragma once

#include <stdexcept>
#include <string>

namespace dualcap {

// Error classes map one-to-one onto CLI exit codes.
enum class ErrorKind { kConfig = 2, kData = 3, kNumeric = 4, kArtifact = 5 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::kNumeric, what) {}
};

class ArtifactError : public Error {
 public:
  explicit ArtifactError(const std::string& what) : Error(ErrorKind::kArtifact, what) {}
};

// Checkpoint failures are artifact errors, split so callers can tell them apart.
class VersionMismatchError : public ArtifactError {
 public:
  using ArtifactError::ArtifactError;
};

class CorruptBlobError : public ArtifactError {
 public:
  using ArtifactError::ArtifactError;
};

class FingerprintMismatchError : public ArtifactError {
 public:
  using ArtifactError::ArtifactError;
};

class MissingArtifactError : public ArtifactError {
 public:
  using ArtifactError::ArtifactError;
};

}  // namespace dualcap
