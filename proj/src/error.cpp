#include "geesub/error.hpp"

namespace geesub {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kStructure: return "structure";
    case ErrorKind::kData: return "data";
    case ErrorKind::kDomain: return "domain";
    case ErrorKind::kDegenerate: return "degenerate";
    case ErrorKind::kRank: return "rank";
    case ErrorKind::kConvergence: return "convergence";
    case ErrorKind::kInfeasible: return "infeasible";
    case ErrorKind::kBenchmark: return "benchmark";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return 2;
    case ErrorKind::kIo:
    case ErrorKind::kParse:
    case ErrorKind::kStructure:
    case ErrorKind::kData: return 3;
    case ErrorKind::kBenchmark: return 5;
    default: return 4;
  }
}

}  // namespace geesub
