#pragma once

#include <stdexcept>
#include <string>

namespace lvcvc {

// Error categories map onto CLI exit codes: usage = 1, data = 2, checkpoint = 3.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace lvcvc
