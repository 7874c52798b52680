// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace emoalign {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or dimensions that do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Malformed bytes on disk: bad magic, truncated payloads, inconsistent headers.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Input for which the operation is undefined (zero-norm vectors, coincident points).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values produced or consumed.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Bad caller-supplied arguments.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace emoalign
