// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <stdexcept>
#include <string>

namespace msplat {

/// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind {
  InvalidArgument,
  Validation,
  Parse,
  Io,
  Divergence,
  Contract,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& w) : Error(ErrorKind::InvalidArgument, w) {}
};
struct ValidationError : Error {
  explicit ValidationError(const std::string& w) : Error(ErrorKind::Validation, w) {}
};
struct ParseError : Error {
  explicit ParseError(const std::string& w) : Error(ErrorKind::Parse, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorKind::Io, w) {}
};
struct DivergenceError : Error {
  explicit DivergenceError(const std::string& w) : Error(ErrorKind::Divergence, w) {}
};
struct ContractError : Error {
  explicit ContractError(const std::string& w) : Error(ErrorKind::Contract, w) {}
};

}  // namespace msplat
