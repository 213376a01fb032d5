#pragma once

#include <stdexcept>
#include <string>

namespace pignet {

// Error taxonomy shared by every module. Each category maps onto one of the
// failure classes callers are expected to distinguish.

struct dimension_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct domain_error : std::domain_error {
  using std::domain_error::domain_error;
};

struct usage_error : std::logic_error {
  using std::logic_error::logic_error;
};

struct input_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct degenerate_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct oracle_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct format_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct compatibility_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct config_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace pignet
