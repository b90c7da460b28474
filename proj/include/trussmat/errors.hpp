#ifndef TRUSSMAT_ERRORS_HPP
#define TRUSSMAT_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace trussmat {

// Operand shapes do not agree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the domain of an elementwise function (e.g. log of 0).
class DomainError : public std::domain_error {
 public:
  DomainError(const std::string& what, std::ptrdiff_t index)
      : std::domain_error(what), index_(index) {}
  std::ptrdiff_t index() const { return index_; }

 private:
  std::ptrdiff_t index_;
};

// Caller broke a documented precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Cholesky factorization hit a non-positive pivot. Usually an
// under-restrained truss or a member with zero stiffness.
class SingularMatrixError : public std::runtime_error {
 public:
  SingularMatrixError(const std::string& what, std::ptrdiff_t pivot)
      : std::runtime_error(what), pivot_(pivot) {}
  std::ptrdiff_t pivot() const { return pivot_; }

 private:
  std::ptrdiff_t pivot_;
};

// Malformed input file or inconsistent input data.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GeometryError : public InputError {
 public:
  using InputError::InputError;
};

// Loss became non-finite during an iterative procedure.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t iteration)
      : std::runtime_error(what), iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

// Structural analysis failed partway through an optimization run.
class AnalysisError : public std::runtime_error {
 public:
  AnalysisError(const std::string& what, std::size_t iteration)
      : std::runtime_error(what), iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

// No candidate satisfies the constraints.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace trussmat

#endif  // TRUSSMAT_ERRORS_HPP
