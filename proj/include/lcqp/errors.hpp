#pragma once

#include <stdexcept>
#include <string>

namespace lcqp {

// Thrown when an input fails its structural checks (bad shapes, out-of-range
// indices, asymmetric quadratic term, and so on).
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown by the numeric routines: factorization of a singular system,
// conjugate-gradient breakdown, rank-deficient constraint matrix.
class SolveError : public std::runtime_error {
public:
  enum class Code {
    singular_system,
    cg_breakdown,
    rank_deficient,
    not_converged,
    io,
  };

  SolveError(Code code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Code code() const { return code_; }

private:
  Code code_;
};

}  // namespace lcqp
