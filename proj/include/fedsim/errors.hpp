// SPDX-License-Identifier: Apache-2.0

#ifndef FEDSIM_ERRORS_HPP
#define FEDSIM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace fedsim {

struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Mismatched vector/matrix dimensions in an operation.
struct dimension_error : error {
  using error::error;
};

// Invalid or inconsistent configuration; `field` names the offending key.
struct config_error : error {
  explicit config_error(const std::string& field, const std::string& what)
      : error("config error [" + field + "]: " + what), field(field) {}
  std::string field;
};

// Non-finite values detected during a run; `round` is 1-based, 0 = init.
struct numeric_error : error {
  explicit numeric_error(long round, const std::string& detail)
      : error("numeric abort at round " + std::to_string(round) + ": " +
              detail),
        round(round),
        detail(detail) {}
  long round;
  std::string detail;
};

// A runtime identity check failed (aggregation identity, norm bound, ...).
struct invariant_error : error {
  using error::error;
};

struct data_error : error {
  using error::error;
};

}  // namespace fedsim

#endif  // FEDSIM_ERRORS_HPP
