#include "covshare/error.hpp"

namespace covshare {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid input";
    case ErrorKind::dimension_mismatch: return "dimension mismatch";
    case ErrorKind::singular_model: return "singular model";
    case ErrorKind::degenerate_projection: return "degenerate projection";
    case ErrorKind::degenerate_noise: return "degenerate noise";
    case ErrorKind::degenerate_posterior: return "degenerate posterior";
    case ErrorKind::numerical_failure: return "numerical failure";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace covshare
