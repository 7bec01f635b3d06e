#pragma once

#include <stdexcept>
#include <string>

namespace qmvos {

// Error categories used throughout the library. All derive from
// std::runtime_error so callers may catch broadly or by kind.

struct shape_error : std::runtime_error {
  explicit shape_error(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct input_error : std::runtime_error {
  explicit input_error(const std::string& msg) : std::runtime_error("input error: " + msg) {}
};

struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct precondition_error : std::runtime_error {
  explicit precondition_error(const std::string& msg)
      : std::runtime_error("precondition error: " + msg) {}
};

struct contract_error : std::runtime_error {
  explicit contract_error(const std::string& msg) : std::runtime_error("contract error: " + msg) {}
};

struct io_error : std::runtime_error {
  explicit io_error(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

}  // namespace qmvos
