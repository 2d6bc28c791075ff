#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rfr {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ZeroRow : public Error {
 public:
  explicit ZeroRow(std::size_t index)
      : Error("row " + std::to_string(index) + " has (near) zero norm"), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class NonFinite : public Error {
 public:
  using Error::Error;
};

class NotSymmetric : public Error {
 public:
  using Error::Error;
};

class NotPsd : public Error {
 public:
  using Error::Error;
};

class NoConvergence : public Error {
 public:
  using Error::Error;
};

class BadRho : public Error {
 public:
  using Error::Error;
};

class BadSimplex : public Error {
 public:
  using Error::Error;
};

class ShrinkError : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class ClassOverlap : public Error {
 public:
  using Error::Error;
};

class MissingSnapshot : public Error {
 public:
  using Error::Error;
};

class UnseenClassInEval : public Error {
 public:
  using Error::Error;
};

class MissingBaseline : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

class BadSpread : public Error {
 public:
  using Error::Error;
};

class BadSplit : public Error {
 public:
  using Error::Error;
};

class TruncatedFile : public Error {
 public:
  using Error::Error;
};

class LabelOutOfRange : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Text-format parse failure; `line()` is 1-based, 0 when not line-specific.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace rfr
