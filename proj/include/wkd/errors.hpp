#pragma once

#include <stdexcept>
#include <string>

namespace wkd {

// Bad or missing configuration (weather tables, experiment files, ids).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf produced or consumed by a numeric routine.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not compose.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API misuse: empty batches, missing tapes, violated preconditions.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Vehicle left the recovery band around the track centerline.
class OffTrackError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace wkd
