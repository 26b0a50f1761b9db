#pragma once

#include <stdexcept>
#include <string>

namespace ropnet {

// Mirrors the CLI exit codes and the C API status values.
enum class Status : int {
    Ok = 0,
    Usage = 1,    // bad arguments, shape mismatches, configuration errors
    Data = 2,     // missing/corrupt files, insufficient points, version mismatch
    Numeric = 3,  // degenerate geometry, non-finite values
};

class Error : public std::runtime_error {
  public:
    Error(Status status, const std::string& message)
        : std::runtime_error(message), status_(status) {}
    Status status() const { return status_; }

  private:
    Status status_;
};

}  // namespace ropnet
