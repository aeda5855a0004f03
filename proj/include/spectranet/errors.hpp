#pragma once

#include <stdexcept>
#include <string>

namespace spectranet {

// Shape or precondition violation at a kernel boundary. Messages name the
// expected and actual quantities.
struct contract_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Invalid or inconsistent run configuration.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A masked loss or metric was requested with zero observed entries.
struct empty_mask_error : std::runtime_error {
  empty_mask_error() : std::runtime_error("empty mask: no observed entries") {}
};

// CSV parse failure carrying a 1-based location (column 0 = whole row).
struct csv_error : std::runtime_error {
  long row;
  long column;
  csv_error(const std::string& what, long r, long c = 0)
      : std::runtime_error(what), row(r), column(c) {}
};

// Model file save/load failure, one code per failure mode.
struct model_io_error : std::runtime_error {
  enum class code { not_a_model, bad_version, truncated, inconsistent, io };
  code kind;
  model_io_error(code k, const std::string& what)
      : std::runtime_error(what), kind(k) {}
};

// Training aborted because a loss left the finite range.
struct divergence_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace spectranet
