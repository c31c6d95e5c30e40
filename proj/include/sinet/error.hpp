#pragma once

#include <stdexcept>
#include <string>

namespace sinet {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/layer shapes that do not line up; the message names the axis.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values (kernel larger than input, even structuring
// element, non-divisible group counts, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed files: weight containers, arch tables, manifests, images.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Training aborted (NaN loss/gradient); message carries the location.
class TrainError : public Error {
 public:
  using Error::Error;
};

}  // namespace sinet
