#pragma once

#include <stdexcept>
#include <string>

namespace unirobust {

/// A kernel or generator parameter lies outside its admissible domain.
class ParameterDomainError : public std::invalid_argument {
 public:
  explicit ParameterDomainError(const std::string& what) : std::invalid_argument(what) {}
};

/// An operation argument lies outside the operation's domain.
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// The operation is not defined for this kernel (e.g. inverting a step derivative).
class UnsupportedOperation : public std::logic_error {
 public:
  explicit UnsupportedOperation(const std::string& what) : std::logic_error(what) {}
};

/// Vector dimensions do not agree with the model.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

/// A training update produced a non-finite value.
class NonFiniteError : public std::runtime_error {
 public:
  explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace unirobust
