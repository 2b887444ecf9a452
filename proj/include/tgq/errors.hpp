#pragma once

#include <stdexcept>
#include <string>

namespace tgq {

// Every failure the library reports derives from Error. The CLI maps each
// class onto its own process exit code (see README).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

class UsageError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class IoError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

class DimensionError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 5; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 6; }
};

class ContractError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 7; }
};

class StateError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 8; }
};

class LookupError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 9; }
};

}  // namespace tgq
