#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace geesub {

enum class ErrorKind {
  kConfig,       // invalid user-supplied parameter
  kIo,           // unreadable/unwritable file
  kParse,        // malformed CSV cell
  kStructure,    // unbalanced panel, bad header
  kData,         // response outside the family's support
  kDomain,       // numeric precondition violated (infeasible alpha, psi <= 0, ...)
  kDegenerate,   // input carries no information (all-zero residuals, empty pilot)
  kRank,         // singular information matrix
  kConvergence,  // iteration limit reached
  kInfeasible,   // capped allocation impossible
  kBenchmark,    // replication failure rate too high
};

std::string_view to_string(ErrorKind kind);

/// Process exit code for a failure of this kind: 2 config, 3 data,
/// 4 numeric/convergence, 5 benchmark.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace geesub
