#pragma once

#include <stdexcept>
#include <string>

namespace covshare {

enum class ErrorKind {
  invalid_input,          // malformed or out-of-range arguments / data
  dimension_mismatch,
  singular_model,         // infinite spike (omega == 1) or singular precision
  degenerate_projection,  // V^T S V not invertible
  degenerate_noise,       // tr((I - VV^T) S) <= 0
  degenerate_posterior,   // nonpositive rate in a conditional
  numerical_failure,      // non-finite objective, failed step
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

}  // namespace covshare
