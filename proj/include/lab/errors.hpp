#pragma once

#include <stdexcept>
#include <string>

namespace lab {

// All library failures derive from lab::error so callers can catch one base.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor/vector dimension mismatch.
struct shape_error : error {
  using error::error;
};

// Empty or otherwise unusable input data (empty dataset, zero weight sum,
// zero-variance reference sample, collapsed refinement).
struct degenerate_error : error {
  using error::error;
};

// Query would push the consumed budget past the total; no partial answers.
struct budget_error : error {
  using error::error;
};

// Model/stats file cannot be parsed or has an unsupported version.
struct format_error : error {
  using error::error;
};

// Config file problems; carries the offending line number when known.
struct config_error : error {
  config_error(const std::string& msg, int line = 0)
      : error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg),
        line_number(line) {}
  int line_number;
};

// Non-finite values where finite arithmetic is required.
struct numeric_error : error {
  using error::error;
};

// A constructed component failed its acceptance bar (e.g. a victim that
// never reaches competence).
struct build_error : error {
  using error::error;
};

}  // namespace lab
