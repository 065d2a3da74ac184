#pragma once

#include <stdexcept>
#include <string>

namespace tpg {

// Tensor or frame dimensions do not match what an operation expects.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A value lies outside its domain (e.g. an unknown gesture class).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Bad scalar argument or violated precondition.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

}  // namespace tpg
