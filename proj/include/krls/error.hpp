#pragma once

#include <stdexcept>
#include <string>

namespace krls {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// Argument outside its documented domain (non-finite values, bad parameters).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Operation not defined for the given kernel kind.
class UnsupportedKernel : public Error {
 public:
  using Error::Error;
};

/// A grow step was refused because its M x M system is numerically singular.
class UpdateRejected : public Error {
 public:
  using Error::Error;
};

/// A prune step was refused; the profile is left untouched.
class PruneRejected : public Error {
 public:
  using Error::Error;
};

/// An atom has (numerically) zero norm.
class DegenerateAtom : public Error {
 public:
  using Error::Error;
};

/// Malformed input file or document.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace krls
